//! Monte-Carlo experiments on the simulation designs: the pretreatment
//! comparison, the full-pipeline benchmark against two single-test
//! competitors, and bootstrap score stability.

use super::design::{simulate_design, SimDesign};
use crate::armada::{run_pipeline, ArmadaConfig};
use crate::assoc::column_pvalues;
use crate::covclust::{hierarchical_cluster, Partition};
use crate::data::{standardize, Dataset, ResponseKind};
use crate::error::{Error, Result};
use crate::factor::{pretreat, DEFAULT_Q_MAX};
use crate::rng;
use rand::RngExt;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

/// Raw p-value cut of the single-test procedures.
pub const TEST_LEVEL: f64 = 0.05;
/// Factor cap of the global factor-adjusted competitor.
pub const GLOBAL_Q_MAX: usize = 8;
/// Points of the shared false-positive-rate grid of mean ROC curves.
pub const ROC_GRID: usize = 101;

pub fn run_seed(seed: u64, run: usize) -> u64 {
    rng::derive(seed, "run", run as u64)
}

fn count_hits(selected: impl Iterator<Item = (usize, bool)>, truth: &[bool]) -> (usize, usize) {
    let (mut tp, mut fp) = (0, 0);
    for (j, s) in selected {
        if s {
            if truth[j] {
                tp += 1
            } else {
                fp += 1
            }
        }
    }
    (tp, fp)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Sample standard deviation (n - 1 denominator).
fn sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct ProcedureCounts {
    pub procedure: String,
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
}

impl ProcedureCounts {
    fn new(name: &str, runs: usize) -> Self {
        ProcedureCounts { procedure: name.to_string(), tp: Vec::with_capacity(runs), fp: Vec::with_capacity(runs) }
    }

    pub fn mean_tp(&self) -> f64 {
        mean(&self.tp.iter().map(|&v| v as f64).collect::<Vec<_>>())
    }

    pub fn mean_fp(&self) -> f64 {
        mean(&self.fp.iter().map(|&v| v as f64).collect::<Vec<_>>())
    }

    pub fn sd_fp(&self) -> f64 {
        sd(&self.fp.iter().map(|&v| v as f64).collect::<Vec<_>>())
    }

    pub fn sd_tp(&self) -> f64 {
        sd(&self.tp.iter().map(|&v| v as f64).collect::<Vec<_>>())
    }
}

fn counts_tsv(counts: &[ProcedureCounts]) -> String {
    let mut s = String::from("procedure\trun\ttp\tfp\n");
    for c in counts {
        for r in 0..c.tp.len() {
            s.push_str(&format!("{}\t{}\t{}\t{}\n", c.procedure, r + 1, c.tp[r], c.fp[r]));
        }
    }
    s
}

/// TP/FP of the raw test after no correction, a global correction, and the
/// per-cluster correction.
#[derive(Debug, Clone, Serialize)]
pub struct PretreatmentComparison {
    pub runs: usize,
    pub seed: u64,
    pub truth_count: usize,
    pub procedures: Vec<ProcedureCounts>,
}

impl PretreatmentComparison {
    pub fn to_tsv(&self) -> String {
        counts_tsv(&self.procedures)
    }

    pub fn summary_tsv(&self) -> String {
        let mut s = String::from("procedure\tmean_tp\tsd_tp\tmean_fp\tsd_fp\n");
        for c in &self.procedures {
            s.push_str(&format!("{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\n", c.procedure, c.mean_tp(), c.sd_tp(), c.mean_fp(), c.sd_fp()));
        }
        s
    }
}

fn selected_at(p: &[f64], level: f64) -> impl Iterator<Item = (usize, bool)> + '_ {
    p.iter().map(move |&v| v <= level).enumerate()
}

pub fn compare_pretreatments(d: &SimDesign, n_runs: usize, seed: u64) -> Result<PretreatmentComparison> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    let per_run: Vec<[(usize, usize); 3]> = (0..n_runs)
        .into_par_iter()
        .map(|r| -> Result<[(usize, usize); 3]> {
            let rs = run_seed(seed, r);
            let (ds, truth) = simulate_design(d, rs)?;
            let raw = column_pvalues(&ds.matrix, &ds.covariate_names, &ds.response)?;
            let global = pretreat(&ds, &Partition::single(ds.p()), GLOBAL_Q_MAX)?;
            let pg = column_pvalues(&global.matrix, &ds.covariate_names, &ds.response)?;
            let part = hierarchical_cluster(&standardize(&ds)?, Some(d.n_clusters()))?;
            let local = pretreat(&ds, &part, DEFAULT_Q_MAX)?;
            let pl = column_pvalues(&local.matrix, &ds.covariate_names, &ds.response)?;
            Ok([
                count_hits(selected_at(&raw.values, TEST_LEVEL), &truth),
                count_hits(selected_at(&pg.values, TEST_LEVEL), &truth),
                count_hits(selected_at(&pl.values, TEST_LEVEL), &truth),
            ])
        })
        .collect::<Result<_>>()?;
    let mut procedures: Vec<ProcedureCounts> =
        ["none", "global", "clustered"].iter().map(|n| ProcedureCounts::new(n, n_runs)).collect();
    for run in &per_run {
        for (k, &(tp, fp)) in run.iter().enumerate() {
            procedures[k].tp.push(tp);
            procedures[k].fp.push(fp);
        }
    }
    Ok(PretreatmentComparison { runs: n_runs, seed, truth_count: d.truth_count(), procedures })
}

/// Mean selection rate and sd of the selection indicator per effect group.
#[derive(Debug, Clone, Serialize)]
pub struct GroupRates {
    pub method: String,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RocCurve {
    pub method: String,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

impl RocCurve {
    /// Ordinate at `x` by linear interpolation.
    pub fn at(&self, x: f64) -> f64 {
        interpolate(&self.fpr, &self.tpr, x)
    }
}

/// Piecewise-linear interpolation through points sorted by abscissa; at a
/// vertical jump the upper value wins.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    // last point at or left of x: the top of any vertical run there
    let k = match xs.iter().rposition(|&v| v <= x) {
        Some(k) => k,
        None => return ys.first().copied().unwrap_or(0.0),
    };
    if xs[k] == x || k + 1 == xs.len() {
        return ys[k];
    }
    let (x0, x1, y0, y1) = (xs[k], xs[k + 1], ys[k], ys[k + 1]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn grid() -> Vec<f64> {
    (0..ROC_GRID).map(|i| i as f64 / (ROC_GRID - 1) as f64).collect()
}

/// ROC points of "select when `stat` is at most t" over every distinct t,
/// starting at (0, 0). Lower statistic means stronger evidence.
pub fn roc_points(stat: &[f64], truth: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let pos = truth.iter().filter(|&&t| t).count().max(1) as f64;
    let neg = truth.iter().filter(|&&t| !t).count().max(1) as f64;
    let mut idx: Vec<usize> = (0..stat.len()).collect();
    idx.sort_by(|&a, &b| stat[a].total_cmp(&stat[b]));
    let (mut fpr, mut tpr) = (vec![0.0], vec![0.0]);
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let v = stat[idx[i]];
        while i < idx.len() && stat[idx[i]] == v {
            if truth[idx[i]] {
                tp += 1.0
            } else {
                fp += 1.0
            }
            i += 1;
        }
        fpr.push(fp / neg);
        tpr.push(tp / pos);
    }
    (fpr, tpr)
}

/// Per-run outcome of the three compared methods.
#[derive(Debug, Clone)]
struct RunOutcome {
    scores: Vec<usize>,
    raw_p: Vec<f64>,
    adjusted_p: Vec<f64>,
    clustered_p: Vec<f64>,
    seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchmarkReport {
    pub design: SimDesign,
    pub runs: usize,
    pub seed: u64,
    pub run_seeds: Vec<u64>,
    pub threshold: usize,
    pub bank_size: usize,
    pub group_labels: Vec<String>,
    pub group_sizes: Vec<usize>,
    pub rates: Vec<GroupRates>,
    /// TP/FP per run of the three methods, then of the raw test on the
    /// per-cluster corrected data.
    pub counts: Vec<ProcedureCounts>,
    pub roc: Vec<RocCurve>,
    /// Mean ARMADA score of every covariate over runs.
    pub mean_scores: Vec<f64>,
    /// `score_histogram[g][s]`: number of (run, covariate) pairs of group g
    /// with score s.
    pub score_histogram: Vec<Vec<usize>>,
    #[serde(skip)]
    pub run_seconds: Vec<f64>,
}

pub const METHOD_NAMES: [&str; 3] = ["armada", "raw_test", "factor_adjusted"];

impl BenchmarkReport {
    pub fn rate(&self, method: &str) -> Option<&GroupRates> {
        self.rates.iter().find(|r| r.method == method)
    }

    pub fn curve(&self, method: &str) -> Option<&RocCurve> {
        self.roc.iter().find(|r| r.method == method)
    }

    /// Rates with sds in parentheses, one row per method.
    pub fn rates_tsv(&self) -> String {
        let mut s = String::from("method");
        for l in &self.group_labels {
            s.push('\t');
            s.push_str(l);
        }
        s.push('\n');
        for r in &self.rates {
            s.push_str(&r.method);
            for g in 0..r.mean.len() {
                s.push_str(&format!("\t{:.2} ({:.2})", r.mean[g], r.sd[g]));
            }
            s.push('\n');
        }
        s
    }

    /// Long form with full precision.
    pub fn rates_long_tsv(&self) -> String {
        let mut s = String::from("method\tgroup\tsize\tmean\tsd\n");
        for r in &self.rates {
            for g in 0..r.mean.len() {
                s.push_str(&format!("{}\t{}\t{}\t{:.6}\t{:.6}\n", r.method, self.group_labels[g], self.group_sizes[g], r.mean[g], r.sd[g]));
            }
        }
        s
    }

    pub fn counts_tsv(&self) -> String {
        counts_tsv(&self.counts)
    }

    pub fn roc_csv(&self) -> String {
        let mut s = String::from("method,fpr,tpr\n");
        for c in &self.roc {
            for (x, y) in c.fpr.iter().zip(&c.tpr) {
                s.push_str(&format!("{},{:.6},{:.6}\n", c.method, x, y));
            }
        }
        s
    }

    pub fn mean_scores_csv(&self) -> String {
        let groups = self.design.groups();
        let mut s = String::from("covariate,group,mean_score\n");
        for (j, m) in self.mean_scores.iter().enumerate() {
            s.push_str(&format!("X{},{},{:.4}\n", j + 1, self.group_labels[groups[j]], m));
        }
        s
    }

    pub fn score_histogram_tsv(&self) -> String {
        let mut s = String::from("group");
        for k in 0..=self.bank_size {
            s.push_str(&format!("\t{k}"));
        }
        s.push('\n');
        for (g, h) in self.score_histogram.iter().enumerate() {
            s.push_str(&self.group_labels[g]);
            for c in h {
                s.push_str(&format!("\t{c}"));
            }
            s.push('\n');
        }
        s
    }

    /// Fraction of (run, noise covariate) pairs with score 0.
    pub fn noise_zero_fraction(&self) -> f64 {
        let h = self.score_histogram.last().expect("noise group");
        h[0] as f64 / h.iter().sum::<usize>().max(1) as f64
    }
}

/// Indicator means and sds per group, pooled over runs and covariates.
fn group_rates(method: &str, selections: &[Vec<bool>], groups: &[usize], ng: usize) -> GroupRates {
    let mut hits = vec![0.0f64; ng];
    let mut total = vec![0.0f64; ng];
    for sel in selections {
        for (j, &s) in sel.iter().enumerate() {
            total[groups[j]] += 1.0;
            if s {
                hits[groups[j]] += 1.0;
            }
        }
    }
    let mean: Vec<f64> = (0..ng).map(|g| hits[g] / total[g].max(1.0)).collect();
    let sd = (0..ng)
        .map(|g| {
            let m = mean[g];
            let t = total[g];
            if t < 2.0 {
                0.0
            } else {
                (m * (1.0 - m) * t / (t - 1.0)).sqrt()
            }
        })
        .collect();
    GroupRates { method: method.to_string(), mean, sd }
}

fn mean_roc(method: &str, curves: &[(Vec<f64>, Vec<f64>)]) -> RocCurve {
    let fpr = grid();
    let tpr = fpr
        .iter()
        .map(|&x| curves.iter().map(|(xs, ys)| interpolate(xs, ys, x)).sum::<f64>() / curves.len().max(1) as f64)
        .collect();
    RocCurve { method: method.to_string(), fpr, tpr }
}

/// Runs the ARMADA pipeline with `cfg` (its cluster count defaults to the
/// design's) against the raw test and the global factor-adjusted test.
pub fn run_benchmark(d: &SimDesign, n_runs: usize, cfg: &ArmadaConfig, seed: u64) -> Result<BenchmarkReport> {
    if n_runs == 0 {
        return Err(Error::InvalidArgument("need at least one run".into()));
    }
    let bank = cfg.bank_for(d.response_kind());
    bank.validate()?;
    let l = bank.len();
    let run_seeds: Vec<u64> = (0..n_runs).map(|r| run_seed(seed, r)).collect();
    let truth = d.truth();
    let outcomes: Vec<RunOutcome> = run_seeds
        .par_iter()
        .map(|&rs| -> Result<RunOutcome> {
            let t = Instant::now();
            let (ds, _) = simulate_design(d, rs)?;
            let run_cfg = ArmadaConfig {
                bank: Some(bank.clone()),
                clusters: Some(cfg.clusters.unwrap_or(d.n_clusters())),
                seed: rs,
                ..cfg.clone()
            };
            let res = run_pipeline(&ds, &run_cfg)?;
            let raw = column_pvalues(&ds.matrix, &ds.covariate_names, &ds.response)?;
            let global = pretreat(&ds, &Partition::single(ds.p()), GLOBAL_Q_MAX)?;
            let adjusted = column_pvalues(&global.matrix, &ds.covariate_names, &ds.response)?;
            Ok(RunOutcome {
                scores: res.scores.scores.clone(),
                raw_p: raw.values,
                adjusted_p: adjusted.values,
                clustered_p: res.raw_pvalues.values,
                seconds: t.elapsed().as_secs_f64(),
            })
        })
        .collect::<Result<_>>()?;

    let groups = d.groups();
    let labels = d.group_labels();
    let ng = labels.len();
    let group_sizes = (0..ng).map(|g| groups.iter().filter(|&&x| x == g).count()).collect();
    let t = cfg.threshold;
    let sel_armada: Vec<Vec<bool>> = outcomes.iter().map(|o| o.scores.iter().map(|&s| s >= t).collect()).collect();
    let sel_raw: Vec<Vec<bool>> = outcomes.iter().map(|o| o.raw_p.iter().map(|&p| p <= TEST_LEVEL).collect()).collect();
    let sel_adj: Vec<Vec<bool>> = outcomes.iter().map(|o| o.adjusted_p.iter().map(|&p| p <= TEST_LEVEL).collect()).collect();
    let mut rates = Vec::new();
    let mut counts = Vec::new();
    for (name, sels) in METHOD_NAMES.iter().zip([&sel_armada, &sel_raw, &sel_adj]) {
        rates.push(group_rates(name, sels, &groups, ng));
        let mut c = ProcedureCounts::new(name, n_runs);
        for s in sels.iter() {
            let (tp, fp) = count_hits(s.iter().copied().enumerate(), &truth);
            c.tp.push(tp);
            c.fp.push(fp);
        }
        counts.push(c);
    }
    let mut clustered = ProcedureCounts::new("clustered_test", n_runs);
    for o in &outcomes {
        let (tp, fp) = count_hits(selected_at(&o.clustered_p, TEST_LEVEL), &truth);
        clustered.tp.push(tp);
        clustered.fp.push(fp);
    }
    counts.push(clustered);

    // Scores enter the ROC as a statistic where lower is stronger.
    let armada_curves: Vec<_> =
        outcomes.iter().map(|o| roc_points(&o.scores.iter().map(|&s| (l - s) as f64).collect::<Vec<_>>(), &truth)).collect();
    let raw_curves: Vec<_> = outcomes.iter().map(|o| roc_points(&o.raw_p, &truth)).collect();
    let adj_curves: Vec<_> = outcomes.iter().map(|o| roc_points(&o.adjusted_p, &truth)).collect();
    let roc = vec![
        mean_roc(METHOD_NAMES[0], &armada_curves),
        mean_roc(METHOD_NAMES[1], &raw_curves),
        mean_roc(METHOD_NAMES[2], &adj_curves),
    ];

    let p = d.p();
    let mut mean_scores = vec![0.0; p];
    let mut score_histogram = vec![vec![0usize; l + 1]; ng];
    for o in &outcomes {
        for j in 0..p {
            mean_scores[j] += o.scores[j] as f64 / n_runs as f64;
            score_histogram[groups[j]][o.scores[j]] += 1;
        }
    }
    Ok(BenchmarkReport {
        design: d.clone(),
        runs: n_runs,
        seed,
        run_seeds,
        threshold: t,
        bank_size: l,
        group_labels: labels,
        group_sizes,
        rates,
        counts,
        roc,
        mean_scores,
        score_histogram,
        run_seconds: outcomes.iter().map(|o| o.seconds).collect(),
    })
}

/// Per-covariate score distribution over bootstrap replicates.
#[derive(Debug, Clone, Serialize)]
pub struct BootstrapScores {
    pub covariate_names: Vec<String>,
    pub original: Vec<usize>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    /// `replicates[b][j]`.
    pub replicates: Vec<Vec<usize>>,
    pub clusters: usize,
    pub redraws: usize,
}

impl BootstrapScores {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("covariate,original,bootstrap_mean,bootstrap_median\n");
        for j in 0..self.original.len() {
            s.push_str(&format!("{},{},{:.4},{}\n", self.covariate_names[j], self.original[j], self.mean[j], self.median[j]));
        }
        s
    }
}

fn median_of(v: &mut [usize]) -> f64 {
    v.sort_unstable();
    let m = v.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        v[m / 2] as f64
    } else {
        (v[m / 2 - 1] + v[m / 2]) as f64 / 2.0
    }
}

/// Row indices of one bootstrap draw; class-stratified for a binary response.
fn draw_rows(d: &Dataset, g: &mut rng::StreamRng) -> Vec<usize> {
    let n = d.n();
    if d.response.kind == ResponseKind::Binary {
        let mut rows = Vec::with_capacity(n);
        for class in [false, true] {
            let members: Vec<usize> = (0..n).filter(|&i| d.response.is_case(i) == class).collect();
            for _ in 0..members.len() {
                rows.push(members[g.random_range(0..members.len())]);
            }
        }
        rows
    } else {
        (0..n).map(|_| g.random_range(0..n)).collect()
    }
}

const MAX_REDRAWS: usize = 10;

/// Recomputes the scores on `b` resamples of the samples. The cluster count
/// is fixed across replicates: `cfg.clusters` if given, otherwise the count
/// chosen on the full data.
pub fn bootstrap_scores(d: &Dataset, b: usize, cfg: &ArmadaConfig) -> Result<BootstrapScores> {
    if b == 0 {
        return Err(Error::InvalidArgument("need at least one bootstrap replicate".into()));
    }
    let full = run_pipeline(d, cfg).map_err(|e| e.in_stage("bootstrap: original data"))?;
    let k = full.partition.k;
    let reps: Vec<(Vec<usize>, usize)> = (0..b)
        .into_par_iter()
        .map(|r| -> Result<(Vec<usize>, usize)> {
            let mut g = rng::stream(cfg.seed, "bootstrap", r as u64);
            let mut last = None;
            for attempt in 0..=MAX_REDRAWS {
                let rows = draw_rows(d, &mut g);
                let rep = match d.resample(&rows) {
                    Ok(rep) => rep,
                    Err(e) => {
                        last = Some(e);
                        continue;
                    }
                };
                let rc = ArmadaConfig { clusters: Some(k), seed: rng::derive(cfg.seed, "bootstrap-pipeline", r as u64), ..cfg.clone() };
                match run_pipeline(&rep, &rc) {
                    Ok(res) => return Ok((res.scores.scores, attempt)),
                    Err(e) if matches!(e.root(), Error::DegenerateResponse(_) | Error::ConstantColumn(_)) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            Err(last.expect("at least one attempt").in_stage("bootstrap replicate"))
        })
        .collect::<Result<_>>()?;
    let p = d.p();
    let replicates: Vec<Vec<usize>> = reps.iter().map(|(s, _)| s.clone()).collect();
    let redraws = reps.iter().map(|(_, a)| a).sum();
    let mut mean = vec![0.0; p];
    let mut median = vec![0.0; p];
    for j in 0..p {
        let mut col: Vec<usize> = replicates.iter().map(|r| r[j]).collect();
        mean[j] = col.iter().sum::<usize>() as f64 / b as f64;
        median[j] = median_of(&mut col);
    }
    Ok(BootstrapScores {
        covariate_names: d.covariate_names.clone(),
        original: full.scores.scores,
        mean,
        median,
        replicates,
        clusters: k,
        redraws,
    })
}
