use super::{build_hierarchy, Partition};
use crate::data::{standardize_matrix, StandardizedMatrix};
use crate::error::{Error, Result};
use crate::rng;
use nalgebra::DMatrix;
use rand::RngExt;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

#[derive(Debug, Clone, Serialize)]
pub struct StabilityCurve {
    pub k_values: Vec<usize>,
    pub mean_stability: Vec<f64>,
    pub chosen_k: usize,
}

fn choose2(x: usize) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut ra: HashMap<usize, usize> = HashMap::new();
    let mut rb: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = ra.values().map(|&c| choose2(c)).sum();
    let sb: f64 = rb.values().map(|&c| choose2(c)).sum();
    let expected = sa * sb / choose2(n);
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        return if Partition::from_labels(a).labels == Partition::from_labels(b).labels { 1.0 } else { 0.0 };
    }
    (index - expected) / (max - expected)
}

/// Mean adjusted Rand agreement between bootstrap hierarchies and the
/// original one, for each `k` in `2..=k_max`.
pub fn stability_select_k(m: &StandardizedMatrix, b: usize, k_max: usize, seed: u64) -> Result<StabilityCurve> {
    let (n, p) = (m.n(), m.p());
    if b < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bootstrap replicates, got {b}")));
    }
    if k_max < 2 || k_max + 1 > p {
        return Err(Error::InvalidArgument(format!("k_max {k_max} outside 2..={}", p.saturating_sub(1))));
    }
    let names: Vec<String> = (0..p).map(|j| format!("#{}", j + 1)).collect();
    let original = build_hierarchy(m)?;
    let k_values: Vec<usize> = (2..=k_max).collect();
    let base: Vec<Partition> = k_values.iter().map(|&k| original.cut(k)).collect::<Result<_>>()?;
    let per_rep: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut g = rng::stream(seed, "stability", r as u64);
            let mut attempt = 0;
            let sm = loop {
                let rows: Vec<usize> = (0..n).map(|_| g.random_range(0..n)).collect();
                let sub = DMatrix::from_fn(n, p, |i, j| m.values[(rows[i], j)]);
                match standardize_matrix(&sub, &names) {
                    Ok(s) => break s,
                    Err(e) if attempt >= 10 => return Err(e),
                    Err(_) => attempt += 1,
                }
            };
            let tree = build_hierarchy(&sm)?;
            k_values
                .iter()
                .zip(&base)
                .map(|(&k, orig)| Ok(adjusted_rand_index(&tree.cut(k)?.labels, &orig.labels).clamp(0.0, 1.0)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let mean_stability: Vec<f64> =
        (0..k_values.len()).map(|i| per_rep.iter().map(|v| v[i]).sum::<f64>() / b as f64).collect();
    let mut chosen = 0;
    for i in 1..k_values.len() {
        if mean_stability[i] > mean_stability[chosen] {
            chosen = i;
        }
    }
    Ok(StabilityCurve { chosen_k: k_values[chosen], k_values, mean_stability })
}
