//! Agglomerative clustering of covariates around latent components.
//!
//! A cluster's homogeneity is the leading eigenvalue of its correlation
//! matrix; merges greedily minimise the loss of total homogeneity. Each
//! cluster keeps a compact factor `F` (n×r, `F'F` diagonal holding the
//! non-zero eigenvalues) so the leading eigenvalue of a union only needs an
//! `(r_a + r_b)`-dimensional eigenproblem.

mod stability;

pub use stability::{adjusted_rand_index, stability_select_k, StabilityCurve};

use crate::data::StandardizedMatrix;
use crate::error::{Error, Result};
use crate::linalg::{arrowhead_top, col, dot, lanczos_top, sym_eigen_desc};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

const EIG_TOL: f64 = 1e-12;
/// Ritz residual tolerance for merge losses; the eigenvalue error is
/// quadratic in it.
const UNION_TOL: f64 = 1e-9;

/// Assignment of covariates to clusters (labels are 1-based).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub k: usize,
    pub merge_heights: Vec<f64>,
    pub homogeneity: f64,
}

impl Partition {
    /// Column indices of each cluster, clusters ordered by label.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (j, &l) in self.labels.iter().enumerate() {
            out[l - 1].push(j);
        }
        out
    }

    pub fn single(p: usize) -> Partition {
        Partition { labels: vec![1; p], k: 1, merge_heights: Vec::new(), homogeneity: f64::NAN }
    }

    pub fn singletons(p: usize) -> Partition {
        Partition { labels: (1..=p).collect(), k: p, merge_heights: Vec::new(), homogeneity: p as f64 }
    }

    /// Partition from arbitrary labels, renumbered by first appearance.
    pub fn from_labels(raw: &[usize]) -> Partition {
        let labels = renumber(raw);
        let k = labels.iter().copied().max().unwrap_or(0);
        Partition { labels, k, merge_heights: Vec::new(), homogeneity: f64::NAN }
    }

    /// Two-column CSV: covariate name, cluster label.
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut s = String::from("covariate,cluster\n");
        for (name, l) in names.iter().zip(&self.labels) {
            s.push_str(&format!("{name},{l}\n"));
        }
        s
    }
}

fn renumber(raw: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    raw.iter()
        .map(|l| {
            let next = map.len() + 1;
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Leading principal component of a standardised `n×m` block: sample scores
/// and the leading eigenvalue of the block's correlation matrix. The sign is
/// fixed so the first column's loading is non-negative.
pub fn first_principal_component(sub: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let (n, m) = sub.shape();
    if m == 0 || n < 2 {
        return Err(Error::InvalidArgument("principal component of an empty block".into()));
    }
    let scale = 1.0 / (n as f64 - 1.0);
    if m <= n {
        let c = sub.tr_mul(sub) * scale;
        let (lambda, v) = top_of_dense(&c)?;
        let mut scores = sub * &v;
        if v[0] < 0.0 {
            scores.neg_mut();
        }
        Ok((scores.as_slice().to_vec(), lambda))
    } else {
        let g = sub * sub.transpose() * scale;
        let (lambda, u) = top_of_dense(&g)?;
        let loading_first = dot(col(sub, 0), u.as_slice());
        let mut scores = u * ((n as f64 - 1.0) * lambda.max(0.0)).sqrt();
        if loading_first < 0.0 {
            scores.neg_mut();
        }
        Ok((scores.as_slice().to_vec(), lambda))
    }
}

fn top_of_dense(a: &DMatrix<f64>) -> Result<(f64, DVector<f64>)> {
    let dim = a.nrows();
    if dim <= 12 {
        let (vals, vecs) = sym_eigen_desc(a.clone());
        return Ok((vals[0], vecs.column(0).into_owned()));
    }
    let start: Vec<f64> = (0..dim).map(|i| a[(i, i)].abs() + 1.0).collect();
    lanczos_top(
        dim,
        |x, y| {
            y.iter_mut().for_each(|v| *v = 0.0);
            for (j, xj) in x.iter().enumerate() {
                let c = &a.as_slice()[j * dim..(j + 1) * dim];
                y.iter_mut().zip(c).for_each(|(yi, cij)| *yi += cij * xj);
            }
        },
        Some(&start),
        EIG_TOL,
    )
}

/// Leading eigenvalue of the block's correlation matrix.
pub fn cluster_homogeneity(sub: &DMatrix<f64>) -> Result<f64> {
    first_principal_component(sub).map(|(_, l)| l)
}

/// One agglomeration step. Clusters are named by their smallest column index.
#[derive(Debug, Clone, Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    /// Homogeneity lost by the merge, clamped at 0.
    pub height: f64,
    /// Unclamped loss (may be a rounding-level negative).
    pub loss: f64,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub struct Dendrogram {
    pub p: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// Cut into `k` clusters by replaying the first `p - k` merges.
    pub fn cut(&self, k: usize) -> Result<Partition> {
        if k == 0 || k > self.p {
            return Err(Error::InvalidArgument(format!("cluster count {k} outside 1..={}", self.p)));
        }
        let mut slot: Vec<usize> = (0..self.p).collect();
        let mut members: Vec<Vec<usize>> = (0..self.p).map(|j| vec![j]).collect();
        let mut homogeneity = self.p as f64;
        for m in &self.merges[..self.p - k] {
            let moved = std::mem::take(&mut members[m.b]);
            for &j in &moved {
                slot[j] = m.a;
            }
            members[m.a].extend(moved);
            homogeneity -= m.loss;
        }
        Ok(Partition { labels: renumber(&slot), k, merge_heights: self.heights(), homogeneity })
    }

    /// Number of clusters below the largest jump in sorted merge heights.
    pub fn largest_gap_k(&self) -> usize {
        let mut h = self.heights();
        if h.is_empty() {
            return 1;
        }
        h.sort_by(f64::total_cmp);
        let mut best = (f64::NEG_INFINITY, h.len());
        for t in 0..h.len() {
            let below = if t == 0 { 0.0 } else { h[t - 1] };
            let gap = h[t] - below;
            if gap > best.0 {
                best = (gap, t);
            }
        }
        // merges at or above the gap are left undone
        h.len() - best.1 + 1
    }

    /// Merge list in the usual linkage encoding: leaves `0..p`, the node
    /// created by step `t` is `p + t`.
    pub fn to_json(&self, names: &[String]) -> serde_json::Value {
        let mut node: Vec<usize> = (0..self.p).collect();
        let merges: Vec<_> = self
            .merges
            .iter()
            .enumerate()
            .map(|(t, m)| {
                let v = serde_json::json!({
                    "left": node[m.a], "right": node[m.b], "height": m.height, "size": m.size
                });
                node[m.a] = self.p + t;
                v
            })
            .collect();
        serde_json::json!({ "covariates": names, "merges": merges })
    }
}

struct Cluster {
    /// n×r, columns orthogonal with squared norms `eig`.
    factor: DMatrix<f64>,
    eig: Vec<f64>,
    size: usize,
}

impl Cluster {
    fn lambda(&self) -> f64 {
        self.eig[0]
    }
}

/// Loss of total homogeneity when merging `c` and `d`; `cross = F_c' F_d`.
fn union_loss(c: &Cluster, d: &Cluster, cross: &DMatrix<f64>) -> Result<f64> {
    let (rc, rd) = (c.eig.len(), d.eig.len());
    let top = if rc == 1 && rd == 1 {
        let (a, b, m) = (c.eig[0], d.eig[0], cross[(0, 0)]);
        0.5 * (a + b) + (0.25 * (a - b) * (a - b) + m * m).sqrt()
    } else if rd == 1 {
        arrowhead_top(&c.eig, cross.as_slice(), d.eig[0])
    } else if rc == 1 {
        let row: Vec<f64> = cross.row(0).iter().copied().collect();
        arrowhead_top(&d.eig, &row, c.eig[0])
    } else {
        let dim = rc + rd;
        // start from the 2x2 problem on the two leading directions
        let (a, b, m) = (c.eig[0], d.eig[0], cross[(0, 0)]);
        let l = 0.5 * (a + b) + (0.25 * (a - b) * (a - b) + m * m).sqrt();
        let (s0, s1) = if m.abs() > 0.0 { (m, l - a) } else if a >= b { (1.0, 0.0) } else { (0.0, 1.0) };
        let mut start = vec![1e-3; dim];
        start[0] = s0;
        start[rc] = s1;
        lanczos_top(
            dim,
            |x, y| {
                let (xt, xb) = x.split_at(rc);
                let (yt, yb) = y.split_at_mut(rc);
                for i in 0..rc {
                    yt[i] = c.eig[i] * xt[i];
                }
                for j in 0..rd {
                    let cj = &cross.as_slice()[j * rc..(j + 1) * rc];
                    yb[j] = d.eig[j] * xb[j] + dot(cj, xt);
                    let xj = xb[j];
                    yt.iter_mut().zip(cj).for_each(|(v, w)| *v += w * xj);
                }
            },
            Some(&start),
            UNION_TOL,
        )?
        .0
    };
    Ok(c.lambda() + d.lambda() - top)
}

/// Lower bound on the loss from `||F_c' F_d||_F`, which bounds the coupling
/// between the two clusters' leading directions.
fn union_loss_bound(c: &Cluster, d: &Cluster, cross: &DMatrix<f64>) -> f64 {
    let (a, b) = (c.lambda(), d.lambda());
    let m2: f64 = cross.iter().map(|v| v * v).sum();
    let top = 0.5 * (a + b) + (0.25 * (a - b) * (a - b) + m2).sqrt();
    (a + b - top).max(0.0)
}

fn merge_clusters(c: &Cluster, d: &Cluster) -> Cluster {
    let (rc, rd) = (c.eig.len(), d.eig.len());
    let cross = crate::linalg::cross(&c.factor, &d.factor);
    let dim = rc + rd;
    let mut k = DMatrix::zeros(dim, dim);
    for i in 0..rc {
        k[(i, i)] = c.eig[i];
    }
    for j in 0..rd {
        k[(rc + j, rc + j)] = d.eig[j];
        for i in 0..rc {
            k[(i, rc + j)] = cross[(i, j)];
            k[(rc + j, i)] = cross[(i, j)];
        }
    }
    let (vals, vecs) = sym_eigen_desc(k);
    let n = c.factor.nrows();
    let keep = vals
        .iter()
        .take(n.saturating_sub(1).max(1))
        .take_while(|&&v| v > 1e-10 * vals[0])
        .count()
        .max(1);
    let mut stacked = DMatrix::zeros(n, dim);
    stacked.columns_mut(0, rc).copy_from(&c.factor);
    stacked.columns_mut(rc, rd).copy_from(&d.factor);
    let factor = stacked * vecs.columns(0, keep);
    Cluster { factor, eig: vals[..keep].to_vec(), size: c.size + d.size }
}

/// Full agglomeration sequence of the columns of `m`.
pub fn build_hierarchy(m: &StandardizedMatrix) -> Result<Dendrogram> {
    let (n, p) = (m.n(), m.p());
    if p < 2 {
        return Err(Error::InvalidArgument(format!("clustering needs at least 2 covariates, found {p}")));
    }
    let scale = 1.0 / (n as f64 - 1.0).sqrt();
    let x = &m.values * scale;
    let mut clusters: Vec<Option<Cluster>> = (0..p)
        .map(|j| {
            Some(Cluster { factor: DMatrix::from_column_slice(n, 1, col(&x, j)), eig: vec![1.0], size: 1 })
        })
        .collect();
    let corr = x.tr_mul(&x);
    let mut loss = vec![0.0f64; p * p];
    for i in 0..p {
        for j in 0..p {
            loss[i * p + j] = 1.0 - corr[(i, j)].abs();
        }
    }
    drop(corr);
    let mut active: Vec<usize> = (0..p).collect();
    let mut best: Vec<(f64, usize)> = vec![(f64::INFINITY, usize::MAX); p];
    let rescan = |i: usize, active: &[usize], loss: &[f64]| -> (f64, usize) {
        let mut b = (f64::INFINITY, usize::MAX);
        for &j in active {
            if j != i && loss[i * p + j] < b.0 {
                b = (loss[i * p + j], j);
            }
        }
        b
    };
    for &i in &active {
        best[i] = rescan(i, &active, &loss);
    }
    // cluster pairs first get a cheap lower bound; the exact loss is only
    // computed once the pair reaches the head of the queue
    let mut exact = vec![true; p * p];
    let mut merges = Vec::with_capacity(p - 1);
    while active.len() > 1 {
        let pick = loop {
            let mut pick = (f64::INFINITY, usize::MAX, usize::MAX);
            for &i in &active {
                if best[i].0 < pick.0 {
                    pick = (best[i].0, i, best[i].1);
                }
            }
            if pick.1 == usize::MAX {
                return Err(Error::InvalidDataset("non-finite merge losses".into()));
            }
            let (i, j) = (pick.1, pick.2);
            if exact[i * p + j] {
                break pick;
            }
            let (ci, cj) = (clusters[i].as_ref().unwrap(), clusters[j].as_ref().unwrap());
            let cross = crate::linalg::cross(&ci.factor, &cj.factor);
            let l = union_loss(ci, cj, &cross)?;
            loss[i * p + j] = l;
            loss[j * p + i] = l;
            exact[i * p + j] = true;
            exact[j * p + i] = true;
            best[i] = rescan(i, &active, &loss);
            if best[j].1 == i {
                best[j] = rescan(j, &active, &loss);
            }
        };
        let (a, b) = (pick.1.min(pick.2), pick.1.max(pick.2));
        let ca = clusters[a].take().expect("active cluster");
        let cb = clusters[b].take().expect("active cluster");
        let merged = merge_clusters(&ca, &cb);
        let raw = ca.lambda() + cb.lambda() - merged.lambda();
        merges.push(Merge { a, b, height: raw.max(0.0), loss: raw, size: merged.size });
        active.retain(|&j| j != b);
        // refresh row a
        let singles: Vec<usize> =
            active.iter().copied().filter(|&j| j != a && clusters[j].as_ref().unwrap().eig.len() == 1).collect();
        if !singles.is_empty() {
            let mut block = DMatrix::zeros(n, singles.len());
            for (c, &j) in singles.iter().enumerate() {
                block.column_mut(c).copy_from(&clusters[j].as_ref().unwrap().factor.column(0));
            }
            let cross_all = merged.factor.transpose() * &block;
            for (c, &j) in singles.iter().enumerate() {
                let cross = cross_all.columns(c, 1).into_owned();
                let l = union_loss(&merged, clusters[j].as_ref().unwrap(), &cross)?;
                loss[a * p + j] = l;
                loss[j * p + a] = l;
            }
        }
        for &j in &active {
            if j == a {
                continue;
            }
            let d = clusters[j].as_ref().unwrap();
            if d.eig.len() > 1 {
                let cross = crate::linalg::cross(&merged.factor, &d.factor);
                let exact_here = merged.eig.len() == 1;
                let l = if exact_here { union_loss(&merged, d, &cross)? } else { union_loss_bound(&merged, d, &cross) };
                loss[a * p + j] = l;
                loss[j * p + a] = l;
                exact[a * p + j] = exact_here;
                exact[j * p + a] = exact_here;
            } else {
                exact[a * p + j] = true;
                exact[j * p + a] = true;
            }
        }
        clusters[a] = Some(merged);
        for &j in &active {
            if j == a {
                continue;
            }
            if best[j].1 == a || best[j].1 == b {
                best[j] = rescan(j, &active, &loss);
            } else {
                let l = loss[j * p + a];
                if l < best[j].0 || (l == best[j].0 && a < best[j].1) {
                    best[j] = (l, a);
                }
            }
        }
        best[a] = rescan(a, &active, &loss);
        best[b] = (f64::INFINITY, usize::MAX);
    }
    Ok(Dendrogram { p, merges })
}

/// Hierarchy cut at `k` clusters, or at the largest height gap when `k` is
/// not given.
pub fn hierarchical_cluster(m: &StandardizedMatrix, k: Option<usize>) -> Result<Partition> {
    if let Some(k) = k {
        if k == 0 || k > m.p() {
            return Err(Error::InvalidArgument(format!("cluster count {k} outside 1..={}", m.p())));
        }
    }
    let tree = build_hierarchy(m)?;
    let k = k.unwrap_or_else(|| tree.largest_gap_k());
    tree.cut(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::standardize_matrix;
    use proptest::prelude::*;
    use rand::RngExt;
    use rand_distr::StandardNormal;

    fn std_of(m: DMatrix<f64>) -> StandardizedMatrix {
        let names: Vec<String> = (0..m.ncols()).map(|j| format!("v{j}")).collect();
        standardize_matrix(&m, &names).unwrap()
    }

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::rng::from_seed(seed);
        DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    /// Leading eigenvalue of the correlation matrix by a dense solver.
    fn oracle_lambda(sub: &DMatrix<f64>) -> f64 {
        let s = std_of(sub.clone());
        let c = s.values.tr_mul(&s.values) / (sub.nrows() as f64 - 1.0);
        nalgebra::SymmetricEigen::new(c).eigenvalues.max()
    }

    #[test]
    fn pc1_single_and_duplicate_columns() {
        let s = std_of(gaussian(10, 1, 1));
        let (scores, l) = first_principal_component(&s.values).unwrap();
        assert!((l - 1.0).abs() < 1e-12);
        for (a, b) in scores.iter().zip(col(&s.values, 0)) {
            assert!((a - b).abs() < 1e-12);
        }
        let one = gaussian(10, 1, 2);
        let two = DMatrix::from_fn(10, 2, |i, _| one[(i, 0)]);
        let s = std_of(two);
        assert!((cluster_homogeneity(&s.values).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pc1_matches_dense_oracle_on_random_blocks() {
        let mut rng = crate::rng::from_seed(99);
        for t in 0..50u64 {
            let m = rng.random_range(2..=8usize);
            let n = rng.random_range(m.max(3)..m + 12);
            let mix = gaussian(n, m, 1000 + t) + gaussian(n, 1, 2000 + t) * DMatrix::from_element(1, m, 0.8);
            let s = std_of(mix);
            let (scores, l) = first_principal_component(&s.values).unwrap();
            assert!((l - oracle_lambda(&s.values)).abs() < 1e-8, "trial {t}");
            // scores carry the eigenvalue: |scores|^2 = (n-1) lambda
            let ss: f64 = scores.iter().map(|v| v * v).sum();
            assert!((ss - (n as f64 - 1.0) * l).abs() < 1e-6 * ss);
        }
    }

    #[test]
    fn pc1_wide_block_uses_gram_path() {
        let s = std_of(gaussian(6, 40, 5) + gaussian(6, 1, 6) * DMatrix::from_element(1, 40, 1.0));
        let (scores, l) = first_principal_component(&s.values).unwrap();
        assert!((l - oracle_lambda(&s.values)).abs() < 1e-8);
        let sub4 = std_of(gaussian(6, 4, 7));
        assert!((cluster_homogeneity(&sub4.values).unwrap() - oracle_lambda(&sub4.values)).abs() < 1e-8);
        // the first column loads non-negatively
        assert!(dot(&scores, col(&s.values, 0)) >= 0.0);
    }

    fn exhaustive_best_two(s: &StandardizedMatrix) -> (f64, Vec<usize>) {
        let p = s.p();
        let mut best = (f64::NEG_INFINITY, vec![]);
        for mask in 1u32..(1 << (p - 1)) {
            let a: Vec<usize> = (0..p).filter(|j| mask >> j & 1 == 1).collect();
            let b: Vec<usize> = (0..p).filter(|j| mask >> j & 1 == 0).collect();
            let h = cluster_homogeneity(&s.columns(&a)).unwrap() + cluster_homogeneity(&s.columns(&b)).unwrap();
            if h > best.0 {
                best = (h, (0..p).map(|j| if mask >> j & 1 == 1 { 1 } else { 2 }).collect());
            }
        }
        best
    }

    #[test]
    fn two_blocks_recovered_and_optimal() {
        let base = gaussian(30, 2, 3);
        let noise = gaussian(30, 4, 4) * 0.01;
        let m = DMatrix::from_fn(30, 4, |i, j| base[(i, j / 2)] + noise[(i, j)]);
        let s = std_of(m);
        let part = hierarchical_cluster(&s, Some(2)).unwrap();
        assert_eq!(part.labels, vec![1, 1, 2, 2]);
        let (h, labels) = exhaustive_best_two(&s);
        assert_eq!(Partition::from_labels(&labels).labels, part.labels);
        assert!((part.homogeneity - h).abs() < 1e-9);
    }

    #[test]
    fn extreme_cuts() {
        let s = std_of(gaussian(20, 6, 8) + gaussian(20, 1, 9) * DMatrix::from_element(1, 6, 0.7));
        let all = hierarchical_cluster(&s, Some(6)).unwrap();
        assert_eq!(all.labels, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(all.homogeneity, 6.0);
        let one = hierarchical_cluster(&s, Some(1)).unwrap();
        assert_eq!(one.k, 1);
        assert!((one.homogeneity - oracle_lambda(&s.values)).abs() < 1e-8);
        assert!(hierarchical_cluster(&s, Some(7)).is_err());
        assert!(hierarchical_cluster(&s, Some(0)).is_err());
    }

    #[test]
    fn greedy_never_beats_exhaustive_at_two() {
        for seed in 0..20u64 {
            let p = 3 + (seed as usize % 6);
            let s = std_of(gaussian(15, p, 50 + seed) + gaussian(15, 2, 80 + seed) * gaussian(2, p, 90 + seed));
            let greedy = hierarchical_cluster(&s, Some(2)).unwrap();
            let recomputed: f64 = greedy
                .members()
                .iter()
                .map(|c| cluster_homogeneity(&s.columns(c)).unwrap())
                .sum();
            assert!((greedy.homogeneity - recomputed).abs() < 1e-8, "seed {seed}");
            let (best, _) = exhaustive_best_two(&s);
            assert!(greedy.homogeneity <= best + 1e-10);
        }
    }

    #[test]
    fn larger_hierarchy_tracks_homogeneity() {
        // many columns, few samples: exercises the Lanczos union path
        let f = gaussian(12, 3, 21);
        let load = gaussian(3, 60, 22);
        let s = std_of(f * load + gaussian(12, 60, 23) * 0.5);
        let tree = build_hierarchy(&s).unwrap();
        for k in [1usize, 3, 10, 30] {
            let part = tree.cut(k).unwrap();
            let recomputed: f64 =
                part.members().iter().map(|c| cluster_homogeneity(&s.columns(c)).unwrap()).sum();
            assert!((part.homogeneity - recomputed).abs() < 1e-7, "k={k}: {} vs {recomputed}", part.homogeneity);
        }
    }

    #[test]
    fn dendrogram_json_shape() {
        let s = std_of(gaussian(10, 4, 31));
        let tree = build_hierarchy(&s).unwrap();
        let names: Vec<String> = (0..4).map(|j| format!("g{j}")).collect();
        let v = tree.to_json(&names);
        assert_eq!(v["merges"].as_array().unwrap().len(), 3);
        assert_eq!(v["merges"][2]["size"], 4);
        assert!(tree.largest_gap_k() >= 1 && tree.largest_gap_k() <= 4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn heights_nonnegative_and_total_nonincreasing(seed in 0u64..10_000, p in 2usize..9) {
            let s = std_of(gaussian(12, p, seed) + gaussian(12, 1, seed + 1) * gaussian(1, p, seed + 2));
            let tree = build_hierarchy(&s).unwrap();
            prop_assert_eq!(tree.merges.len(), p - 1);
            let mut total = p as f64;
            for m in &tree.merges {
                prop_assert!(m.height >= 0.0);
                prop_assert!(m.loss >= -1e-10);
                let next = total - m.loss;
                prop_assert!(next <= total + 1e-10);
                total = next;
            }
        }

        #[test]
        fn column_permutation_only_relabels(seed in 0u64..10_000, k in 1usize..5) {
            let p = 7;
            let m = gaussian(14, p, seed) + gaussian(14, 2, seed + 7) * gaussian(2, p, seed + 9);
            let s = std_of(m.clone());
            let base = hierarchical_cluster(&s, Some(k)).unwrap();
            let perm = [3usize, 0, 6, 2, 5, 1, 4];
            let pm = DMatrix::from_fn(14, p, |i, j| m[(i, perm[j])]);
            let permuted = hierarchical_cluster(&std_of(pm), Some(k)).unwrap();
            let mut back = vec![0; p];
            for (j, &src) in perm.iter().enumerate() {
                back[src] = permuted.labels[j];
            }
            prop_assert_eq!(Partition::from_labels(&back).labels, base.labels);
        }
    }
}
