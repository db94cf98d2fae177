//! Command-line front end. Every command writes into one `--out` directory
//! and finishes with a `manifest.json` listing the files it wrote and the
//! resolved configuration.

use crate::armada::{rank, run_pipeline, select, ArmadaConfig, ScoreVector};
use crate::data::{load_csv, to_csv_string, CsvOptions, Dataset, ResponseKind};
use crate::error::{Error, Result};
use crate::heatmap::{cocluster_heatmap, Linkage};
use crate::plot::{boxplot_svg, line_svg, BoxStats, Series};
use crate::sim::{bootstrap_scores, run_benchmark, simulate_design, BenchmarkReport, DesignKind, SimDesign, TEST_LEVEL};
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(name = "armada", version, about = "Covariate selection by aggregated scores on block-correlated data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw one dataset from a simulation design and write it as CSV.
    Simulate(SimulateArgs),
    /// Score every covariate of a dataset and write the score table.
    Select(SelectArgs),
    /// Run the simulation benchmark and write rate tables, ROC curves and plots.
    Benchmark(BenchmarkArgs),
    /// Recompute scores on bootstrap resamples and write their mean and median.
    Bootstrap(BootstrapArgs),
    /// Draw a co-clustered heatmap of the covariates selected in a score file.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Master seed; overrides the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV or TSV: first column sample ids, one column per covariate.
    #[arg(long)]
    input: PathBuf,
    /// Name of the response column.
    #[arg(long, default_value = "y")]
    response: String,
    /// Response kind: binary, continuous, or auto (binary when every value is 0 or 1).
    #[arg(long, default_value = "auto")]
    kind: String,
    /// The first column is a covariate, not a sample id.
    #[arg(long)]
    no_sample_ids: bool,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// main, mixture or regression.
    #[arg(long, default_value = "main")]
    design: String,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    /// Number of covariate clusters, or "auto" to choose it by bootstrap stability.
    #[arg(long)]
    clusters: Option<String>,
    /// Minimum score of a selected covariate.
    #[arg(long)]
    threshold: Option<usize>,
    /// Also write the corrected data matrix.
    #[arg(long)]
    write_corrected: bool,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "main")]
    design: String,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Cluster count given to the pipeline; defaults to the design's.
    #[arg(long)]
    clusters: Option<String>,
    #[arg(long)]
    threshold: Option<usize>,
    /// Write per-run wall-clock times to timings.json.
    #[arg(long)]
    timings: bool,
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    #[arg(long)]
    clusters: Option<String>,
}

#[derive(Debug, Args)]
struct HeatmapArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    /// Score table written by `select`.
    #[arg(long)]
    scores: PathBuf,
    /// Minimum score of a drawn covariate.
    #[arg(long)]
    threshold: Option<usize>,
    /// complete, average or single.
    #[arg(long, default_value = "complete")]
    linkage: String,
}

/// Files written into the output directory, in order.
struct OutDir {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(mut self, command: &str, mut body: serde_json::Value) -> Result<()> {
        let mut files = self.files.clone();
        files.sort();
        body["command"] = json!(command);
        body["version"] = json!(env!("CARGO_PKG_VERSION"));
        body["files"] = json!(files);
        let text = serde_json::to_string_pretty(&body)? + "\n";
        self.write("manifest.json", &text)
    }
}

fn load_config(common: &Common) -> Result<ArmadaConfig> {
    let mut cfg = match &common.config {
        Some(p) => ArmadaConfig::load(p)?,
        None => ArmadaConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn parse_clusters(s: &str) -> Result<Option<usize>> {
    if s == "auto" {
        return Ok(None);
    }
    match s.parse::<usize>() {
        Ok(k) if k >= 1 => Ok(Some(k)),
        _ => Err(Error::InvalidArgument(format!("--clusters expects a positive integer or \"auto\", got {s:?}"))),
    }
}

fn apply_overrides(cfg: &mut ArmadaConfig, clusters: &Option<String>, threshold: Option<usize>) -> Result<()> {
    if let Some(c) = clusters {
        cfg.clusters = parse_clusters(c)?;
    }
    if let Some(t) = threshold {
        cfg.threshold = t;
    }
    Ok(())
}

fn load_data(a: &DataArgs) -> Result<Dataset> {
    let opts = CsvOptions { sample_ids: !a.no_sample_ids };
    match a.kind.as_str() {
        "binary" => load_csv(&a.input, &a.response, ResponseKind::Binary, opts),
        "continuous" => load_csv(&a.input, &a.response, ResponseKind::Continuous, opts),
        "auto" => match load_csv(&a.input, &a.response, ResponseKind::Binary, opts) {
            Err(e) if matches!(e.root(), Error::NonBinaryResponse(_)) => {
                load_csv(&a.input, &a.response, ResponseKind::Continuous, opts)
            }
            other => other,
        },
        other => Err(Error::InvalidArgument(format!("--kind expects binary, continuous or auto, got {other:?}"))),
    }
}

fn parse_design(s: &str) -> Result<SimDesign> {
    Ok(SimDesign::new(s.parse::<DesignKind>()?))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let design = parse_design(&a.design)?;
    let seed = a.common.seed.unwrap_or(0);
    let (d, truth) = simulate_design(&design, seed)?;
    let mut out = OutDir::create(&a.common.out)?;
    out.write("data.csv", &to_csv_string(&d))?;
    let labels = design.group_labels();
    let groups = design.groups();
    let mut t = String::from("covariate,group,influential\n");
    for j in 0..d.p() {
        t.push_str(&format!("{},{},{}\n", d.covariate_names[j], labels[groups[j]], u8::from(truth[j])));
    }
    out.write("truth.csv", &t)?;
    out.finish("simulate", json!({ "design": design, "seed": seed }))
}

fn select_cmd(a: SelectArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    apply_overrides(&mut cfg, &a.clusters, a.threshold)?;
    let d = load_data(&a.data)?;
    let res = run_pipeline(&d, &cfg)?;
    let s = &res.scores;
    let mut out = OutDir::create(&a.common.out)?;
    out.write("scores.tsv", &s.to_tsv())?;
    let chosen: std::collections::HashSet<usize> = select(s, cfg.threshold).into_iter().collect();
    let mut ranked = String::from("rank\tcovariate\tscore\traw_p\tselected\n");
    for (r, j) in rank(s).into_iter().enumerate() {
        ranked.push_str(&format!(
            "{}\t{}\t{}\t{:.6e}\t{}\n",
            r + 1,
            s.covariate_names[j],
            s.scores[j],
            s.tie_pvalues[j],
            u8::from(chosen.contains(&j))
        ));
    }
    out.write("ranking.tsv", &ranked)?;
    let mut part = String::from("covariate,cluster\n");
    for (j, l) in res.partition.labels.iter().enumerate() {
        part.push_str(&format!("{},{}\n", d.covariate_names[j], l + 1));
    }
    out.write("clusters.csv", &part)?;
    let models: Vec<_> = res
        .corrected
        .models
        .iter()
        .enumerate()
        .map(|(k, m)| json!({ "cluster": k + 1, "q": m.q, "common_variance": m.common_variance, "converged": m.converged }))
        .collect();
    out.write("factors.json", &(serde_json::to_string_pretty(&models)? + "\n"))?;
    if a.write_corrected {
        out.write("corrected.csv", &to_csv_string(&res.corrected.to_dataset(&d)?))?;
    }
    let resolved = ArmadaConfig { clusters: Some(res.partition.k), ..cfg.clone() };
    out.finish(
        "select",
        json!({
            "input": a.data.input,
            "response": d.response.name,
            "response_kind": d.response.kind,
            "samples": d.n(),
            "covariates": d.p(),
            "selected": chosen.len(),
            "config": cfg,
            "resolved_config": resolved,
        }),
    )
}

fn counts_box(report: &BenchmarkReport, idx: usize, tp: bool) -> BoxStats {
    let c = &report.counts[idx];
    let v: Vec<f64> = if tp { &c.tp } else { &c.fp }.iter().map(|&x| x as f64).collect();
    BoxStats::from_samples(&v).expect("at least one run")
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    apply_overrides(&mut cfg, &a.clusters, a.threshold)?;
    if a.runs == 0 {
        return Err(Error::InvalidArgument("--runs must be at least 1".into()));
    }
    let design = parse_design(&a.design)?;
    let seed = cfg.seed;
    let report = run_benchmark(&design, a.runs, &cfg, seed)?;
    let mut out = OutDir::create(&a.common.out)?;
    out.write("rates.tsv", &report.rates_tsv())?;
    out.write("rates_long.tsv", &report.rates_long_tsv())?;
    out.write("counts.tsv", &report.counts_tsv())?;
    out.write("roc.csv", &report.roc_csv())?;
    out.write("mean_scores.csv", &report.mean_scores_csv())?;
    out.write("score_histogram.tsv", &report.score_histogram_tsv())?;

    // raw test, global correction, per-cluster correction
    let order = [(1, "1: none"), (2, "2: global"), (3, "3: clustered")];
    let expected_fp = TEST_LEVEL * (design.p() - design.truth_count()) as f64;
    let tp: Vec<(String, BoxStats)> = order.iter().map(|&(i, l)| (l.to_string(), counts_box(&report, i, true))).collect();
    let fp: Vec<(String, BoxStats)> = order.iter().map(|&(i, l)| (l.to_string(), counts_box(&report, i, false))).collect();
    out.write("tp_boxplot.svg", &boxplot_svg("True positives by pretreatment", "TP", &tp, Some(design.truth_count() as f64)))?;
    out.write("fp_boxplot.svg", &boxplot_svg("False positives by pretreatment", "FP", &fp, Some(expected_fp)))?;
    let idx: Vec<f64> = (1..=design.p()).map(|j| j as f64).collect();
    out.write(
        "mean_scores.svg",
        &line_svg(
            "Mean score per covariate",
            "covariate",
            "mean score",
            &[Series { name: "armada".into(), x: idx, y: report.mean_scores.clone() }],
            Some((1.0, design.p() as f64, 0.0, report.bank_size as f64)),
            false,
        ),
    )?;
    let boxes: Vec<(String, BoxStats)> = report
        .group_labels
        .iter()
        .zip(&report.score_histogram)
        .filter_map(|(l, h)| BoxStats::from_histogram(h).map(|b| (l.clone(), b)))
        .collect();
    out.write("score_boxplot.svg", &boxplot_svg("Scores by effect group", "score", &boxes, None))?;
    let series: Vec<Series> =
        report.roc.iter().map(|c| Series { name: c.method.clone(), x: c.fpr.clone(), y: c.tpr.clone() }).collect();
    out.write("roc.svg", &line_svg("Mean ROC curves", "1 - specificity", "sensitivity", &series, Some((0.0, 1.0, 0.0, 1.0)), true))?;
    if a.timings {
        let t = json!({ "run_seconds": report.run_seconds, "total_seconds": report.run_seconds.iter().sum::<f64>() });
        out.write("timings.json", &(serde_json::to_string_pretty(&t)? + "\n"))?;
    }
    out.finish(
        "benchmark",
        json!({
            "design": design,
            "runs": a.runs,
            "seed": seed,
            "run_seeds": report.run_seeds,
            "threshold": report.threshold,
            "config": cfg,
            "noise_zero_fraction": report.noise_zero_fraction(),
        }),
    )
}

fn bootstrap(a: BootstrapArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    apply_overrides(&mut cfg, &a.clusters, None)?;
    if a.replicates == 0 {
        return Err(Error::InvalidArgument("--replicates must be at least 1".into()));
    }
    let d = load_data(&a.data)?;
    let b = bootstrap_scores(&d, a.replicates, &cfg)?;
    let mut out = OutDir::create(&a.common.out)?;
    out.write("bootstrap.csv", &b.to_csv())?;
    out.finish(
        "bootstrap",
        json!({
            "input": a.data.input,
            "replicates": a.replicates,
            "clusters": b.clusters,
            "redraws": b.redraws,
            "config": cfg,
        }),
    )
}

fn heatmap(a: HeatmapArgs) -> Result<()> {
    let cfg = load_config(&a.common)?;
    let threshold = a.threshold.unwrap_or(cfg.threshold);
    let linkage: Linkage = a.linkage.parse()?;
    let d = load_data(&a.data)?;
    let text = std::fs::read_to_string(&a.scores).map_err(|e| Error::io(&a.scores, e))?;
    let scores = ScoreVector::from_tsv(&text)?;
    let mut selected = Vec::new();
    for j in select(&scores, threshold) {
        let name = &scores.covariate_names[j];
        let col = d
            .covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::InvalidDataset(format!("score file covariate {name:?} is not in the dataset")))?;
        selected.push(col);
    }
    if selected.is_empty() {
        return Err(Error::InvalidArgument(format!("no covariate has score >= {threshold}")));
    }
    let labels: Vec<String> = (0..d.n()).map(|i| format!("{} ({})", d.sample_ids[i], d.response.values[i])).collect();
    let h = cocluster_heatmap(&d, &selected, &labels, linkage)?;
    let mut out = OutDir::create(&a.common.out)?;
    out.write("heatmap.svg", &h.to_svg(&format!("Covariates with score >= {threshold}")))?;
    let mut order = String::from("axis,position,name\n");
    for (i, &r) in h.row_order.iter().enumerate() {
        order.push_str(&format!("covariate,{},{}\n", i + 1, h.covariate_names[r]));
    }
    for (i, &c) in h.col_order.iter().enumerate() {
        order.push_str(&format!("sample,{},{}\n", i + 1, d.sample_ids[c]));
    }
    out.write("heatmap_order.csv", &order)?;
    out.finish(
        "heatmap",
        json!({ "input": a.data.input, "scores": a.scores, "threshold": threshold, "linkage": linkage, "covariates": selected.len() }),
    )
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Select(a) => select_cmd(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Heatmap(a) => heatmap(a),
    }
}

fn jobs_of(cmd: &Command) -> usize {
    match cmd {
        Command::Simulate(a) => a.common.jobs,
        Command::Select(a) => a.common.jobs,
        Command::Benchmark(a) => a.common.jobs,
        Command::Bootstrap(a) => a.common.jobs,
        Command::Heatmap(a) => a.common.jobs,
    }
}

/// Runs the command line and returns the process exit code: 0 on success,
/// 1 on a usage error, 2 on a data error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs_of(&cli.command)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 2;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() { 1 } else { 2 }
        }
    }
}
