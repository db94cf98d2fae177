//! Random forests (CART on bootstrap samples, random feature subsets) with
//! out-of-bag permutation importance, and the two forest-based selection
//! steps: importance thresholding and nested-model interpretation.

use crate::data::{Response, ResponseKind};
use crate::error::{Error, Result};
use crate::linalg::col;
use crate::rng::{self, StreamRng};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::RngExt;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestOptions {
    pub n_trees: usize,
    /// Candidate covariates per split; default `floor(sqrt(p))` for a binary
    /// response and `floor(p / 3)` for a continuous one.
    pub mtry: Option<usize>,
    /// Nodes with at most this many samples are not split; default 1
    /// (binary) or 5 (continuous).
    pub node_size: Option<usize>,
    /// Trees per forest in the interpretation step.
    pub interpret_trees: usize,
    /// Forests per nested model in the interpretation step.
    pub interpret_forests: usize,
    /// Largest nested model tried by the interpretation step.
    pub max_models: usize,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions { n_trees: 500, mtry: None, node_size: None, interpret_trees: 100, interpret_forests: 5, max_models: 100 }
    }
}

impl ForestOptions {
    fn mtry_for(&self, p: usize, classification: bool) -> usize {
        self.mtry.unwrap_or(if classification { (p as f64).sqrt().floor() as usize } else { p / 3 }).clamp(1, p.max(1))
    }

    fn node_size_for(&self, classification: bool) -> usize {
        self.node_size.unwrap_or(if classification { 1 } else { 5 })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForestImportance {
    /// Mean over trees of the out-of-bag error increase after permuting the
    /// covariate.
    pub importances: Vec<f64>,
    /// Standard deviation of the per-tree error increase.
    pub importance_sds: Vec<f64>,
    pub n_trees: usize,
    pub mtry: usize,
    /// Out-of-bag misclassification rate (binary) or mean squared error.
    pub oob_error: f64,
}

impl ForestImportance {
    /// Covariate indices by decreasing importance (ties by index).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.importances.len()).collect();
        idx.sort_by(|&a, &b| self.importances[b].total_cmp(&self.importances[a]).then(a.cmp(&b)));
        idx
    }

    pub fn to_csv(&self, names: &[String]) -> String {
        let mut s = String::from("covariate,importance,importance_sd\n");
        for (j, n) in names.iter().enumerate() {
            s.push_str(&format!("{n},{},{}\n", self.importances[j], self.importance_sds[j]));
        }
        s
    }
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Node {
    feature: u32,
    threshold: f64,
    left: u32,
    right: u32,
    value: f64,
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    #[inline]
    fn predict_with(&self, x: &DMatrix<f64>, i: usize, swap: Option<(usize, f64)>) -> f64 {
        let mut k = 0usize;
        loop {
            let nd = &self.nodes[k];
            if nd.feature == LEAF {
                return nd.value;
            }
            let f = nd.feature as usize;
            let v = match swap {
                Some((sf, sv)) if sf == f => sv,
                _ => x[(i, f)],
            };
            k = if v <= nd.threshold { nd.left } else { nd.right } as usize;
        }
    }

    fn features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.nodes.iter().filter(|n| n.feature != LEAF).map(|n| n.feature as usize).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

struct Grower<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    classification: bool,
    mtry: usize,
    node_size: usize,
    features: Vec<usize>,
    pairs: Vec<(f64, f64)>,
}

impl<'a> Grower<'a> {
    /// Best split of `idx` over `mtry` random features:
    /// (feature, threshold, number going left after sorting).
    fn best_split(&mut self, idx: &mut [usize], g: &mut StreamRng) -> Option<(usize, f64)> {
        let m = idx.len() as f64;
        let (tot, tot1) = idx.iter().fold((0.0, 0.0), |(s, s1), &i| (s + self.y[i], s1 + 1.0));
        let _ = tot1;
        let parent = if self.classification {
            let n1 = tot;
            let n0 = m - n1;
            (n1 * n1 + n0 * n0) / m
        } else {
            tot * tot / m
        };
        let p = self.features.len();
        let mut best: Option<(usize, f64)> = None;
        let mut best_crit = parent + 1e-12 * parent.abs().max(1.0);
        for k in 0..self.mtry {
            let r = g.random_range(k..p);
            self.features.swap(k, r);
            let f = self.features[k];
            let xf = col(self.x, f);
            self.pairs.clear();
            self.pairs.extend(idx.iter().map(|&i| (xf[i], self.y[i])));
            self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = 0.0;
            for s in 0..self.pairs.len() - 1 {
                left += self.pairs[s].1;
                if self.pairs[s].0 == self.pairs[s + 1].0 {
                    continue;
                }
                let nl = (s + 1) as f64;
                let nr = m - nl;
                let crit = if self.classification {
                    let (l1, r1) = (left, tot - left);
                    let (l0, r0) = (nl - l1, nr - r1);
                    (l1 * l1 + l0 * l0) / nl + (r1 * r1 + r0 * r0) / nr
                } else {
                    left * left / nl + (tot - left) * (tot - left) / nr
                };
                if crit > best_crit {
                    best_crit = crit;
                    best = Some((f, 0.5 * (self.pairs[s].0 + self.pairs[s + 1].0)));
                }
            }
        }
        best
    }

    fn leaf_value(&self, idx: &[usize], g: &mut StreamRng) -> f64 {
        let m = idx.len() as f64;
        let s: f64 = idx.iter().map(|&i| self.y[i]).sum();
        if self.classification {
            let frac = s / m;
            if frac > 0.5 {
                1.0
            } else if frac < 0.5 {
                0.0
            } else {
                (g.random::<bool>()) as u8 as f64
            }
        } else {
            s / m
        }
    }

    fn grow(&mut self, idx: &mut [usize], g: &mut StreamRng) -> Tree {
        let mut nodes = Vec::new();
        // stack of (node slot, start, end)
        nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
        let mut stack = vec![(0usize, 0usize, idx.len())];
        while let Some((slot, lo, hi)) = stack.pop() {
            let part = &mut idx[lo..hi];
            let pure = self.classification && part.iter().all(|&i| self.y[i] == self.y[part[0]]);
            let split = if part.len() <= self.node_size || pure { None } else { self.best_split(part, g) };
            match split {
                None => {
                    nodes[slot].value = self.leaf_value(part, g);
                }
                Some((f, thr)) => {
                    let xf = col(self.x, f);
                    // partition in place: left block first
                    let mut a = 0;
                    for b in 0..part.len() {
                        if xf[part[b]] <= thr {
                            part.swap(a, b);
                            a += 1;
                        }
                    }
                    let l = nodes.len();
                    nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
                    nodes.push(Node { feature: LEAF, threshold: 0.0, left: 0, right: 0, value: 0.0 });
                    nodes[slot] = Node { feature: f as u32, threshold: thr, left: l as u32, right: (l + 1) as u32, value: 0.0 };
                    stack.push((l + 1, lo + a, hi));
                    stack.push((l, lo, lo + a));
                }
            }
        }
        Tree { nodes }
    }
}

struct TreeOutcome {
    /// (sample, prediction) for out-of-bag samples.
    oob: Vec<(usize, f64)>,
    /// (feature, error increase) for features used by the tree.
    deltas: Vec<(usize, f64)>,
}

fn oob_loss(classification: bool, pred: f64, y: f64) -> f64 {
    if classification {
        (pred != y) as u8 as f64
    } else {
        (pred - y) * (pred - y)
    }
}

fn grow_one(
    x: &DMatrix<f64>,
    y: &[f64],
    classification: bool,
    mtry: usize,
    node_size: usize,
    importance: bool,
    mut g: StreamRng,
) -> TreeOutcome {
    let (n, p) = x.shape();
    let mut inbag = vec![0u32; n];
    let mut idx: Vec<usize> = (0..n)
        .map(|_| {
            let i = g.random_range(0..n);
            inbag[i] += 1;
            i
        })
        .collect();
    let mut grower = Grower { x, y, classification, mtry, node_size, features: (0..p).collect(), pairs: Vec::with_capacity(n) };
    let tree = grower.grow(&mut idx, &mut g);
    let oob_idx: Vec<usize> = (0..n).filter(|&i| inbag[i] == 0).collect();
    let oob: Vec<(usize, f64)> = oob_idx.iter().map(|&i| (i, tree.predict_with(x, i, None))).collect();
    let mut deltas = Vec::new();
    if importance && !oob_idx.is_empty() {
        let m = oob_idx.len() as f64;
        let base: f64 = oob.iter().map(|&(i, pr)| oob_loss(classification, pr, y[i])).sum::<f64>() / m;
        let mut perm = oob_idx.clone();
        for f in tree.features() {
            perm.copy_from_slice(&oob_idx);
            perm.shuffle(&mut g);
            let xf = col(x, f);
            let err: f64 = oob_idx
                .iter()
                .zip(&perm)
                .map(|(&i, &src)| oob_loss(classification, tree.predict_with(x, i, Some((f, xf[src]))), y[i]))
                .sum::<f64>()
                / m;
            deltas.push((f, err - base));
        }
    }
    TreeOutcome { oob, deltas }
}

struct ForestRun {
    importances: Vec<f64>,
    importance_sds: Vec<f64>,
    oob_error: f64,
}

fn run_forest(
    x: &DMatrix<f64>,
    y: &[f64],
    classification: bool,
    n_trees: usize,
    mtry: usize,
    node_size: usize,
    importance: bool,
    seed: u64,
) -> ForestRun {
    let (n, p) = x.shape();
    let outcomes: Vec<TreeOutcome> = (0..n_trees)
        .into_par_iter()
        .map(|t| grow_one(x, y, classification, mtry, node_size, importance, rng::stream(seed, "tree", t as u64)))
        .collect();
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0u32; n];
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p];
    for o in &outcomes {
        for &(i, pr) in &o.oob {
            sum[i] += pr;
            cnt[i] += 1;
        }
        for &(f, d) in &o.deltas {
            s1[f] += d;
            s2[f] += d * d;
        }
    }
    let (mut err, mut used) = (0.0, 0.0);
    for i in 0..n {
        if cnt[i] == 0 {
            continue;
        }
        let avg = sum[i] / cnt[i] as f64;
        err += if classification {
            // vote share; a tied vote counts as half an error
            if avg == 0.5 {
                0.5
            } else {
                ((avg > 0.5) as u8 as f64 != y[i]) as u8 as f64
            }
        } else {
            (avg - y[i]) * (avg - y[i])
        };
        used += 1.0;
    }
    let t = n_trees as f64;
    let importances: Vec<f64> = s1.iter().map(|s| s / t).collect();
    let importance_sds = s1
        .iter()
        .zip(&s2)
        .map(|(a, b)| {
            let m = a / t;
            (((b - t * m * m) / (t - 1.0).max(1.0)).max(0.0)).sqrt()
        })
        .collect();
    ForestRun { importances, importance_sds, oob_error: if used > 0.0 { err / used } else { f64::NAN } }
}

/// Random forest with out-of-bag permutation importance.
pub fn grow_forest(x: &DMatrix<f64>, y: &Response, opts: &ForestOptions, seed: u64) -> Result<ForestImportance> {
    let (n, p) = x.shape();
    if opts.n_trees < 100 {
        return Err(Error::InvalidArgument(format!("a forest needs at least 100 trees, got {}", opts.n_trees)));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: format!("{n} responses"), found: y.len().to_string() });
    }
    if p == 0 {
        return Err(Error::InvalidArgument("forest on zero covariates".into()));
    }
    let classification = y.kind == ResponseKind::Binary;
    let mtry = opts.mtry_for(p, classification);
    let run = run_forest(x, &y.values, classification, opts.n_trees, mtry, opts.node_size_for(classification), true, seed);
    Ok(ForestImportance {
        importances: run.importances,
        importance_sds: run.importance_sds,
        n_trees: opts.n_trees,
        mtry,
        oob_error: run.oob_error,
    })
}

/// 1-D regression tree on `y` indexed by position (rpart-style: minsplit 20,
/// minbucket 7, complexity 0.01 with cost-complexity pruning). Returns the
/// fitted leaf means.
fn position_tree_leaves(y: &[f64]) -> Vec<f64> {
    const MIN_SPLIT: usize = 20;
    const MIN_BUCKET: usize = 7;
    const CP: f64 = 0.01;
    let n = y.len();
    let mut c1 = vec![0.0; n + 1];
    let mut c2 = vec![0.0; n + 1];
    for i in 0..n {
        c1[i + 1] = c1[i] + y[i];
        c2[i + 1] = c2[i] + y[i] * y[i];
    }
    let sse = |lo: usize, hi: usize| {
        let m = (hi - lo) as f64;
        let s = c1[hi] - c1[lo];
        (c2[hi] - c2[lo] - s * s / m).max(0.0)
    };
    let root = sse(0, n);
    let alpha = CP * root;

    // returns (subtree sse, leaves as (lo, hi))
    fn grow(
        lo: usize,
        hi: usize,
        sse: &dyn Fn(usize, usize) -> f64,
        alpha: f64,
    ) -> (f64, Vec<(usize, usize)>) {
        let here = sse(lo, hi);
        if hi - lo < MIN_SPLIT || here <= 0.0 {
            return (here, vec![(lo, hi)]);
        }
        let mut best = None;
        let mut best_sse = f64::INFINITY;
        for k in lo + MIN_BUCKET..=hi - MIN_BUCKET {
            let s = sse(lo, k) + sse(k, hi);
            if s < best_sse {
                best_sse = s;
                best = Some(k);
            }
        }
        let Some(k) = best else { return (here, vec![(lo, hi)]) };
        if here - best_sse < alpha {
            return (here, vec![(lo, hi)]);
        }
        let (sl, mut ll) = grow(lo, k, sse, alpha);
        let (sr, lr) = grow(k, hi, sse, alpha);
        let sub = sl + sr;
        ll.extend(lr);
        // prune when the subtree does not pay alpha per extra leaf
        if here - sub < alpha * (ll.len() as f64 - 1.0) {
            return (here, vec![(lo, hi)]);
        }
        (sub, ll)
    }
    let (_, leaves) = grow(0, n, &sse, alpha);
    leaves.iter().map(|&(lo, hi)| (c1[hi] - c1[lo]) / (hi - lo) as f64).collect()
}

/// Threshold step: order covariates by decreasing mean importance, fit a
/// regression tree to their importance sds along that order and keep every
/// covariate whose mean importance is at least the smallest fitted value.
/// Returned in decreasing-importance order.
pub fn forest_threshold_step(imp: &ForestImportance) -> Vec<usize> {
    let order = imp.ranking();
    if order.is_empty() {
        return order;
    }
    // Covariates that never moved an out-of-bag prediction have sd exactly 0;
    // that says nothing about noise variability, so they stay out of the fit.
    let sds: Vec<f64> = order.iter().map(|&j| imp.importance_sds[j]).filter(|&s| s > 0.0).collect();
    if sds.is_empty() {
        return order;
    }
    let threshold = position_tree_leaves(&sds).into_iter().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * threshold.abs();
    order.into_iter().take_while(|&j| imp.importances[j] >= threshold - tol).collect()
}

/// Interpretation step: nested forests on the top-j retained covariates
/// (`retained` in decreasing-importance order, at most `max_models`); the
/// smallest j whose OOB error is within one sd of the minimum wins.
pub fn forest_interpret_step(
    x: &DMatrix<f64>,
    y: &Response,
    retained: &[usize],
    opts: &ForestOptions,
    seed: u64,
) -> Result<InterpretResult> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: format!("{n} responses"), found: y.len().to_string() });
    }
    if retained.is_empty() {
        return Ok(InterpretResult { selected: vec![], errors: vec![], error_sds: vec![] });
    }
    let classification = y.kind == ResponseKind::Binary;
    let models = retained.len().min(opts.max_models.max(1));
    let forests = opts.interpret_forests.max(2);
    let stats: Vec<(f64, f64)> = (0..models)
        .map(|m| {
            let k = m + 1;
            let sub = DMatrix::from_fn(n, k, |i, c| x[(i, retained[c])]);
            let mtry = opts.mtry_for(k, classification);
            let errs: Vec<f64> = (0..forests)
                .map(|f| {
                    let s = rng::derive(seed, "interpret", (m * forests + f) as u64);
                    run_forest(&sub, &y.values, classification, opts.interpret_trees, mtry, opts.node_size_for(classification), false, s)
                        .oob_error
                })
                .collect();
            let mean = errs.iter().sum::<f64>() / forests as f64;
            let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (forests as f64 - 1.0);
            (mean, var.sqrt())
        })
        .collect();
    let best = (0..models).fold(0, |b, m| if stats[m].0 < stats[b].0 { m } else { b });
    let cut = stats[best].0 + stats[best].1;
    let j = (0..models).find(|&m| stats[m].0 <= cut).unwrap_or(best) + 1;
    Ok(InterpretResult {
        selected: retained[..j].to_vec(),
        errors: stats.iter().map(|s| s.0).collect(),
        error_sds: stats.iter().map(|s| s.1).collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpretResult {
    pub selected: Vec<usize>,
    /// Mean OOB error of each nested model.
    pub errors: Vec<f64>,
    pub error_sds: Vec<f64>,
}
