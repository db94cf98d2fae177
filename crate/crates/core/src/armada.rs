//! The full selection pipeline: cluster the covariates, remove the factor
//! structure inside each cluster, run every method of the bank on the
//! corrected data and count how many methods select each covariate.

use crate::assoc::{raw_pvalues, PValueVector};
use crate::covclust::{hierarchical_cluster, stability_select_k, Partition};
use crate::data::{standardize, Dataset, ResponseKind};
use crate::error::{Error, Result};
use crate::factor::{pretreat, CorrectedDataset, DEFAULT_Q_MAX};
use crate::multitest::{bonferroni, benjamini_hochberg, factor_adjusted_by_cluster, local_fdr, storey_qvalue, SELECTION_LEVEL};
use crate::rng;
use crate::selectors::{forest_interpret_step, forest_threshold_step, grow_forest, lasso_select, ForestOptions, LassoOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Bonferroni,
    Bh,
    QValue,
    LocalFdr,
    FactorAdjusted,
    Lasso,
    ForestThreshold,
    ForestInterpret,
}

impl MethodKind {
    pub fn name(self) -> &'static str {
        match self {
            MethodKind::Bonferroni => "bonferroni",
            MethodKind::Bh => "bh",
            MethodKind::QValue => "qvalue",
            MethodKind::LocalFdr => "local_fdr",
            MethodKind::FactorAdjusted => "factor_adjusted",
            MethodKind::Lasso => "lasso",
            MethodKind::ForestThreshold => "forest_threshold",
            MethodKind::ForestInterpret => "forest_interpret",
        }
    }

    /// Methods that threshold adjusted p-values of the univariate test.
    pub fn is_test(self) -> bool {
        matches!(
            self,
            MethodKind::Bonferroni | MethodKind::Bh | MethodKind::QValue | MethodKind::LocalFdr | MethodKind::FactorAdjusted
        )
    }
}

fn default_level() -> f64 {
    SELECTION_LEVEL
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub kind: MethodKind,
    /// Cut on the adjusted value for test methods; ignored otherwise.
    #[serde(default = "default_level")]
    pub level: f64,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        MethodSpec { kind, level: SELECTION_LEVEL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MethodBank {
    pub methods: Vec<MethodSpec>,
}

impl MethodBank {
    /// Five adjustments of the univariate test, the Lasso and the two forest
    /// steps. The same eight methods serve both response kinds; the test
    /// (Wilcoxon or Pearson) and the Lasso loss follow the response.
    pub fn default_for(_kind: ResponseKind) -> Self {
        use MethodKind::*;
        let methods = [Bonferroni, Bh, QValue, LocalFdr, FactorAdjusted, Lasso, ForestThreshold, ForestInterpret]
            .into_iter()
            .map(MethodSpec::new)
            .collect();
        MethodBank { methods }
    }

    pub fn len(&self) -> usize {
        self.methods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.methods.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("method bank is empty".into()));
        }
        for m in &self.methods {
            if !(m.level > 0.0 && m.level <= 1.0) {
                return Err(Error::InvalidArgument(format!("{}: level {} outside (0, 1]", m.kind.name(), m.level)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityOptions {
    pub bootstraps: usize,
    pub k_max: usize,
}

impl Default for StabilityOptions {
    fn default() -> Self {
        StabilityOptions { bootstraps: 20, k_max: 10 }
    }
}

/// Everything that steers a pipeline run; serialisable as the JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmadaConfig {
    /// `None` uses the response kind's default bank.
    pub bank: Option<MethodBank>,
    pub threshold: usize,
    /// Number of covariate clusters; `None` chooses it by bootstrap stability.
    pub clusters: Option<usize>,
    pub seed: u64,
    pub q_max: usize,
    pub lasso: LassoOptions,
    pub forest: ForestOptions,
    pub stability: StabilityOptions,
}

impl Default for ArmadaConfig {
    fn default() -> Self {
        ArmadaConfig {
            bank: None,
            threshold: 1,
            clusters: None,
            seed: 0,
            q_max: DEFAULT_Q_MAX,
            lasso: LassoOptions::default(),
            forest: ForestOptions::default(),
            stability: StabilityOptions::default(),
        }
    }
}

impl ArmadaConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ArmadaConfig = serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn bank_for(&self, kind: ResponseKind) -> MethodBank {
        self.bank.clone().unwrap_or_else(|| MethodBank::default_for(kind))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScoreVector {
    pub scores: Vec<usize>,
    /// One selection vector per bank method, in bank order.
    pub per_method: Vec<Vec<bool>>,
    pub method_names: Vec<String>,
    pub covariate_names: Vec<String>,
    /// Raw p-values of the univariate test, used to order tied scores.
    pub tie_pvalues: Vec<f64>,
}

impl ScoreVector {
    pub fn from_selections(
        per_method: Vec<Vec<bool>>,
        method_names: Vec<String>,
        covariate_names: Vec<String>,
        tie_pvalues: Vec<f64>,
    ) -> Self {
        let p = covariate_names.len();
        let scores = (0..p).map(|i| per_method.iter().filter(|s| s[i]).count()).collect();
        ScoreVector { scores, per_method, method_names, covariate_names, tie_pvalues }
    }

    /// Number of methods in the bank.
    pub fn l(&self) -> usize {
        self.per_method.len()
    }

    /// Covariate name, score, one 0/1 column per method.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("covariate\tscore");
        for m in &self.method_names {
            s.push('\t');
            s.push_str(m);
        }
        s.push('\n');
        for (i, name) in self.covariate_names.iter().enumerate() {
            s.push_str(&format!("{name}\t{}", self.scores[i]));
            for sel in &self.per_method {
                s.push_str(if sel[i] { "\t1" } else { "\t0" });
            }
            s.push('\n');
        }
        s
    }

    /// Reads the TSV written by [`ScoreVector::to_tsv`].
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| Error::Csv("empty score file".into()))?.split('\t').collect();
        if header.len() < 2 || header[0] != "covariate" || header[1] != "score" {
            return Err(Error::Csv("score file must start with covariate<TAB>score".into()));
        }
        let method_names: Vec<String> = header[2..].iter().map(|s| s.to_string()).collect();
        let mut names = Vec::new();
        let mut scores = Vec::new();
        let mut per_method = vec![Vec::new(); method_names.len()];
        for (r, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != header.len() {
                return Err(Error::Csv(format!("score file row {}: expected {} fields, found {}", r + 1, header.len(), f.len())));
            }
            names.push(f[0].to_string());
            let cell = |c: usize| -> Result<usize> {
                f[c].parse().map_err(|_| Error::NonNumericCell { row: r + 1, col: c + 1, value: f[c].to_string() })
            };
            scores.push(cell(1)?);
            for m in 0..method_names.len() {
                per_method[m].push(cell(m + 2)? != 0);
            }
        }
        let p = names.len();
        Ok(ScoreVector { scores, per_method, method_names, covariate_names: names, tie_pvalues: vec![1.0; p] })
    }
}

/// `{i : S_i >= threshold}` in column order.
pub fn select(s: &ScoreVector, threshold: usize) -> Vec<usize> {
    (0..s.scores.len()).filter(|&i| s.scores[i] >= threshold).collect()
}

/// Covariates by decreasing score; ties by increasing raw p-value, then
/// column index.
pub fn rank(s: &ScoreVector) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.scores.len()).collect();
    idx.sort_by(|&a, &b| {
        s.scores[b].cmp(&s.scores[a]).then(s.tie_pvalues[a].total_cmp(&s.tie_pvalues[b])).then(a.cmp(&b))
    });
    idx
}

/// Intermediate products of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub partition: Partition,
    pub corrected: CorrectedDataset,
    pub raw_pvalues: PValueVector,
    pub scores: ScoreVector,
    pub timings: Vec<(String, Duration)>,
}

fn flags(p: usize, idx: &[usize]) -> Vec<bool> {
    let mut v = vec![false; p];
    for &i in idx {
        v[i] = true;
    }
    v
}

/// Partition of the covariates: `k` clusters, or the most stable `k` when
/// absent.
pub fn cluster_covariates(d: &Dataset, k: Option<usize>, stability: &StabilityOptions, seed: u64) -> Result<Partition> {
    let m = standardize(d)?;
    let k = match k {
        Some(k) => k,
        None => stability_select_k(&m, stability.bootstraps, stability.k_max.min(d.p()), rng::derive(seed, "stability-k", 0))?.chosen_k,
    };
    hierarchical_cluster(&m, Some(k))
}

/// Run one bank method on corrected data.
fn run_method(
    spec: &MethodSpec,
    cd: &CorrectedDataset,
    raw: &PValueVector,
    cfg: &ArmadaConfig,
    seed: u64,
) -> Result<Vec<bool>> {
    let p = cd.matrix.ncols();
    let y = &cd.response;
    let out = match spec.kind {
        MethodKind::Bonferroni => bonferroni(raw).selected(spec.level),
        MethodKind::Bh => benjamini_hochberg(raw).selected(spec.level),
        MethodKind::QValue => storey_qvalue(raw, None, None).selected(spec.level),
        MethodKind::LocalFdr => local_fdr(raw).selected(spec.level),
        MethodKind::FactorAdjusted => factor_adjusted_by_cluster(cd, cfg.q_max)?.selected(spec.level),
        MethodKind::Lasso => flags(p, &lasso_select(&cd.matrix, y, &cfg.lasso, rng::derive(seed, "lasso", 0))?.selected()),
        MethodKind::ForestThreshold => {
            let imp = grow_forest(&cd.matrix, y, &cfg.forest, rng::derive(seed, "forest-threshold", 0))?;
            flags(p, &forest_threshold_step(&imp))
        }
        MethodKind::ForestInterpret => {
            let imp = grow_forest(&cd.matrix, y, &cfg.forest, rng::derive(seed, "forest-interpret", 0))?;
            let retained = forest_threshold_step(&imp);
            let r = forest_interpret_step(&cd.matrix, y, &retained, &cfg.forest, rng::derive(seed, "forest-interpret", 1))?;
            flags(p, &r.selected)
        }
    };
    Ok(out)
}

/// Bank methods on already corrected data.
pub fn score_corrected(cd: &CorrectedDataset, bank: &MethodBank, cfg: &ArmadaConfig, seed: u64) -> Result<(PValueVector, ScoreVector)> {
    bank.validate()?;
    let raw = raw_pvalues(cd).map_err(|e| e.in_stage("association tests"))?;
    let per_method: Vec<Vec<bool>> = bank
        .methods
        .par_iter()
        .map(|m| run_method(m, cd, &raw, cfg, seed).map_err(|e| e.in_stage(m.kind.name())))
        .collect::<Result<_>>()?;
    let names = bank.methods.iter().map(|m| m.kind.name().to_string()).collect();
    let scores = ScoreVector::from_selections(per_method, names, cd.covariate_names.clone(), raw.values.clone());
    Ok((raw, scores))
}

/// Cluster, correct, run the bank, score.
pub fn run_pipeline(d: &Dataset, cfg: &ArmadaConfig) -> Result<PipelineResult> {
    let bank = cfg.bank_for(d.response.kind);
    bank.validate()?;
    let mut timings = Vec::new();
    let t = Instant::now();
    let partition = cluster_covariates(d, cfg.clusters, &cfg.stability, cfg.seed).map_err(|e| e.in_stage("clustering"))?;
    timings.push(("clustering".to_string(), t.elapsed()));
    let t = Instant::now();
    let corrected = pretreat(d, &partition, cfg.q_max).map_err(|e| e.in_stage("factor correction"))?;
    timings.push(("factor correction".to_string(), t.elapsed()));
    let t = Instant::now();
    let (raw_pvalues, scores) = score_corrected(&corrected, &bank, cfg, cfg.seed)?;
    timings.push(("methods".to_string(), t.elapsed()));
    Ok(PipelineResult { partition, corrected, raw_pvalues, scores, timings })
}

/// Scores of every covariate: the number of bank methods selecting it.
pub fn armada_scores(d: &Dataset, k: Option<usize>, bank: &MethodBank, seed: u64) -> Result<ScoreVector> {
    let cfg = ArmadaConfig { bank: Some(bank.clone()), clusters: k, seed, ..ArmadaConfig::default() };
    Ok(run_pipeline(d, &cfg)?.scores)
}
