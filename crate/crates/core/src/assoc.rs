//! Univariate association tests: Wilcoxon rank-sum for a binary response,
//! Pearson correlation t-test for a continuous one.

use crate::data::{Response, ResponseKind};
use crate::error::{Error, Result};
use crate::factor::CorrectedDataset;
use crate::linalg::col;
use crate::special::{clamp_p, normal_cdf, student_t_two_sided};
use nalgebra::DMatrix;
use serde::Serialize;

/// Largest sample size for the exact rank-sum distribution.
pub const EXACT_MAX_N: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestKind {
    Wilcoxon,
    PearsonCor,
}

#[derive(Debug, Clone)]
pub struct PValueVector {
    pub values: Vec<f64>,
    pub test_kind: TestKind,
    pub covariate_names: Vec<String>,
}

impl PValueVector {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("covariate,p\n");
        for (n, p) in self.covariate_names.iter().zip(&self.values) {
            s.push_str(&format!("{n},{p}\n"));
        }
        s
    }
}

/// Mid-ranks (1-based) and the tie-correction sum `sum(t^3 - t)`.
pub fn midranks(x: &[f64]) -> (Vec<f64>, f64) {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; n];
    let mut ties = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        let t = (j - i + 1) as f64;
        ties += t * t * t - t;
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of ways to obtain each Mann-Whitney statistic `U = 0..=n1*n2`
/// when `n1` of `n1 + n2` distinct ranks are drawn.
fn mann_whitney_counts(n1: usize, n2: usize) -> Vec<f64> {
    // f[k][u]: subsets of size k among items seen so far with U-contribution u
    let umax = n1 * n2;
    let mut f = vec![vec![0.0f64; umax + 1]; n1 + 1];
    f[0][0] = 1.0;
    // Adding the item of rank r (1-based) to a subset of size k contributes
    // r - (k + 1) to U; process ranks in increasing order.
    for r in 1..=(n1 + n2) {
        for k in (0..n1.min(r)).rev() {
            let add = r - (k + 1);
            if add > n2 {
                continue;
            }
            for u in (0..=umax - add).rev() {
                let v = f[k][u];
                if v != 0.0 {
                    f[k + 1][u + add] += v;
                }
            }
        }
    }
    f.swap_remove(n1)
}

/// Two-sided Wilcoxon rank-sum p-value; `labels` are 0/1.
pub fn wilcoxon_rank_sum(x: &[f64], labels: &[f64]) -> Result<f64> {
    if x.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: format!("{} labels", x.len()), found: labels.len().to_string() });
    }
    let n = x.len();
    let n1 = labels.iter().filter(|&&l| l == 1.0).count();
    let n2 = n - n1;
    if n1 == 0 || n2 == 0 {
        return Err(Error::DegenerateResponse("rank-sum test with an empty group".into()));
    }
    let (ranks, ties) = midranks(x);
    let r1: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1.0).map(|(r, _)| r).sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let (f1, f2) = (n1 as f64, n2 as f64);
    if n <= EXACT_MAX_N && ties == 0.0 {
        let counts = mann_whitney_counts(n1, n2);
        let total: f64 = counts.iter().sum();
        let ui = u.round() as usize;
        let lower: f64 = counts[..=ui].iter().sum::<f64>() / total;
        let upper: f64 = counts[ui..].iter().sum::<f64>() / total;
        return Ok(clamp_p((2.0 * lower.min(upper)).min(1.0)));
    }
    let nf = n as f64;
    let var = f1 * f2 / 12.0 * ((nf + 1.0) - ties / (nf * (nf - 1.0)));
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = u - f1 * f2 / 2.0;
    let correction = if z > 0.0 { 0.5 } else if z < 0.0 { -0.5 } else { 0.0 };
    let corrected = (z - correction) / var.sqrt();
    let p = 2.0 * normal_cdf(-corrected.abs());
    Ok(clamp_p(p.min(1.0)))
}

/// Two-sided p-value of the Pearson correlation t-test (`n - 2` df).
pub fn pearson_cor_test(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch { expected: format!("{n} values"), found: y.len().to_string() });
    }
    if n < 4 {
        return Err(Error::InvalidArgument(format!("correlation test needs n >= 4, got {n}")));
    }
    let (mx, my) = (crate::linalg::mean(x), crate::linalg::mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateResponse("correlation test on a constant vector".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = n as f64 - 2.0;
    if r.abs() >= 1.0 {
        return Ok(clamp_p(0.0));
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    Ok(clamp_p(student_t_two_sided(t, df)))
}

/// The test matching the response kind, applied to every column.
pub fn column_pvalues(matrix: &DMatrix<f64>, names: &[String], y: &Response) -> Result<PValueVector> {
    let test_kind = match y.kind {
        ResponseKind::Binary => TestKind::Wilcoxon,
        ResponseKind::Continuous => TestKind::PearsonCor,
    };
    let values = (0..matrix.ncols())
        .map(|j| {
            let x = col(matrix, j);
            match test_kind {
                TestKind::Wilcoxon => wilcoxon_rank_sum(x, &y.values),
                TestKind::PearsonCor => pearson_cor_test(x, &y.values),
            }
            .map_err(|e| Error::Covariate { name: names[j].clone(), source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    Ok(PValueVector { values, test_kind, covariate_names: names.to_vec() })
}

pub fn raw_pvalues(cd: &CorrectedDataset) -> Result<PValueVector> {
    column_pvalues(&cd.matrix, &cd.covariate_names, &cd.response)
}
