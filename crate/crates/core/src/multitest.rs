//! Multiple-testing adjustments: Bonferroni, Benjamini-Hochberg, Storey
//! q-values, Efron-style local fdr and the factor-adjusted BH procedure.

use crate::assoc::{column_pvalues, PValueVector};
use crate::data::Response;
use crate::error::Result;
use crate::factor::{decorrelate, fit_factor_model, select_num_factors, CorrectedDataset};
use crate::special::{normal_quantile, P_FLOOR};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Cut applied to adjusted values (and local fdr) when selecting.
pub const SELECTION_LEVEL: f64 = 0.05;

/// Smallest number of tests for the local fdr density fit.
pub const LFDR_MIN_TESTS: usize = 100;
const LFDR_BINS: usize = 120;
const LFDR_DEGREE: usize = 7;
/// |z| beyond this (p below ~1e-16) is pooled into the extreme bins.
const Z_CLIP: f64 = 8.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustMethod {
    Bonferroni,
    Bh,
    QValue,
    LocalFdr,
    FactorAdjusted,
}

impl AdjustMethod {
    pub fn name(self) -> &'static str {
        match self {
            AdjustMethod::Bonferroni => "bonferroni",
            AdjustMethod::Bh => "bh",
            AdjustMethod::QValue => "qvalue",
            AdjustMethod::LocalFdr => "local_fdr",
            AdjustMethod::FactorAdjusted => "factor_adjusted",
        }
    }
}

impl fmt::Display for AdjustMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct AdjustedPValues {
    pub method: AdjustMethod,
    pub values: Vec<f64>,
    pub pi0_hat: Option<f64>,
    /// Set when the estimator fell back to a simpler model (too few tests,
    /// singular fit, unusable empirical null).
    pub fallback: bool,
    pub covariate_names: Vec<String>,
}

impl AdjustedPValues {
    fn new(method: AdjustMethod, values: Vec<f64>, names: &[String]) -> Self {
        AdjustedPValues { method, values, pi0_hat: None, fallback: false, covariate_names: names.to_vec() }
    }

    /// `values <= level`, elementwise.
    pub fn selected(&self, level: f64) -> Vec<bool> {
        self.values.iter().map(|&v| v <= level).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("covariate,method,value\n");
        for (n, v) in self.covariate_names.iter().zip(&self.values) {
            s.push_str(&format!("{n},{},{v}\n", self.method));
        }
        s
    }
}

pub fn bonferroni(p: &PValueVector) -> AdjustedPValues {
    let m = p.values.len() as f64;
    let v = p.values.iter().map(|&x| (m * x).min(1.0)).collect();
    AdjustedPValues::new(AdjustMethod::Bonferroni, v, &p.covariate_names)
}

/// Step-up adjusted values `min_{j>=i} min(1, m p_(j) / j)`, input order.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 1.0f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(m as f64 * p[i] / (rank + 1) as f64);
        out[i] = running.min(1.0);
    }
    out
}

pub fn benjamini_hochberg(p: &PValueVector) -> AdjustedPValues {
    AdjustedPValues::new(AdjustMethod::Bh, bh_adjust(&p.values), &p.covariate_names)
}

/// 0.05, 0.10, ..., 0.95.
pub fn default_lambda_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 * 0.05).collect()
}

/// Storey's null proportion: `#{p > lambda} / (m (1 - lambda))` over the grid,
/// smoothed by a cubic smoothing spline with 3 degrees of freedom and read off
/// at the largest lambda. Fewer than 20 tests give 1.
pub fn pi0_estimate(p: &[f64], grid: &[f64]) -> f64 {
    let m = p.len();
    if m < 20 || grid.is_empty() {
        return 1.0;
    }
    let raw: Vec<f64> = grid
        .iter()
        .map(|&l| p.iter().filter(|&&x| x > l).count() as f64 / (m as f64 * (1.0 - l)))
        .collect();
    let est = if grid.len() >= 4 { *smoothing_spline(grid, &raw, 3.0).last().unwrap() } else { *raw.last().unwrap() };
    est.clamp(1e-8, 1.0)
}

/// Fitted values of the natural cubic smoothing spline through `(x, y)`
/// (x strictly increasing) whose smoother matrix has trace `df`.
fn smoothing_spline(x: &[f64], y: &[f64], df: f64) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    // penalty K = Q R^{-1} Q' (Green & Silverman)
    let mut q = DMatrix::zeros(n, n - 2);
    let mut r = DMatrix::zeros(n - 2, n - 2);
    for j in 0..n - 2 {
        q[(j, j)] = 1.0 / h[j];
        q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
        q[(j + 2, j)] = 1.0 / h[j + 1];
        r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < n - 2 {
            r[(j, j + 1)] = h[j + 1] / 6.0;
            r[(j + 1, j)] = h[j + 1] / 6.0;
        }
    }
    let rinv_qt = r.cholesky().expect("spline band matrix is positive definite").solve(&q.transpose());
    let k = &q * rinv_qt;
    let smoother = |alpha: f64| -> DMatrix<f64> {
        let a = DMatrix::identity(n, n) + &k * alpha;
        a.try_inverse().expect("I + aK is positive definite")
    };
    let df = df.clamp(2.0 + 1e-9, n as f64);
    // trace decreases from n (alpha = 0) to 2 (alpha -> inf); bisect log alpha
    let (mut lo, mut hi) = (-30.0f64, 30.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if smoother(mid.exp()).trace() > df {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    let s = smoother((0.5 * (lo + hi)).exp());
    (s * DVector::from_column_slice(y)).as_slice().to_vec()
}

/// q-values `pi0 * BH`, with `pi0` from [`pi0_estimate`]. `pi0 = Some(v)`
/// forces the null proportion.
pub fn storey_qvalue(p: &PValueVector, lambda_grid: Option<&[f64]>, pi0: Option<f64>) -> AdjustedPValues {
    let grid = lambda_grid.map(<[f64]>::to_vec).unwrap_or_else(default_lambda_grid);
    let pi0 = pi0.unwrap_or_else(|| pi0_estimate(&p.values, &grid)).clamp(1e-8, 1.0);
    let v = bh_adjust(&p.values).into_iter().map(|b| (pi0 * b).min(1.0)).collect();
    let mut out = AdjustedPValues::new(AdjustMethod::QValue, v, &p.covariate_names);
    out.pi0_hat = Some(pi0);
    out
}

/// Legendre polynomials `P_0..=P_deg` at `t` in [-1, 1].
fn legendre(t: f64, deg: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if deg >= 1 {
        out[1] = t;
    }
    for k in 2..=deg {
        out[k] = ((2 * k - 1) as f64 * t * out[k - 1] - (k - 1) as f64 * out[k - 2]) / k as f64;
    }
}

/// Poisson log-linear regression of `counts` on the design rows by IRLS.
/// `None` when the weighted normal equations are singular or diverge.
fn poisson_glm(design: &DMatrix<f64>, counts: &[f64]) -> Option<DVector<f64>> {
    let (nb, d) = design.shape();
    let mut eta: Vec<f64> = counts.iter().map(|&c| (c + 0.5).ln()).collect();
    let mut beta = DVector::zeros(d);
    let mut dev_old = f64::INFINITY;
    for _ in 0..100 {
        let mut xtwx = DMatrix::zeros(d, d);
        let mut xtwz = DVector::zeros(d);
        for b in 0..nb {
            let mu = eta[b].exp();
            let z = eta[b] + (counts[b] - mu) / mu;
            let row = design.row(b);
            for s in 0..d {
                xtwz[s] += mu * row[s] * z;
                for t in 0..=s {
                    xtwx[(s, t)] += mu * row[s] * row[t];
                }
            }
        }
        for s in 0..d {
            for t in 0..s {
                xtwx[(t, s)] = xtwx[(s, t)];
            }
        }
        beta = xtwx.cholesky()?.solve(&xtwz);
        let fitted = design * &beta;
        eta.copy_from_slice(fitted.as_slice());
        if eta.iter().any(|v| !v.is_finite() || *v > 700.0) {
            return None;
        }
        let dev: f64 = counts
            .iter()
            .zip(&eta)
            .map(|(&c, &e)| {
                let mu = e.exp();
                2.0 * (if c > 0.0 { c * (c / mu).ln() } else { 0.0 } - (c - mu))
            })
            .sum();
        if (dev_old - dev).abs() <= 1e-10 * (dev.abs() + 1.0) {
            break;
        }
        dev_old = dev;
    }
    Some(beta)
}

/// Efron-style local false discovery rate.
///
/// `z = Phi^-1(1 - p)`; the mixture density is a degree-7 Poisson regression
/// on a 120-bin histogram; the empirical null comes from a quadratic fit of
/// the log density over the central half of the z values (central matching).
/// If that null is unusable the theoretical N(0, 1) is used and `fallback`
/// is set. Fewer than 100 tests or a singular density fit give lfdr = 1.
pub fn local_fdr(p: &PValueVector) -> AdjustedPValues {
    let m = p.values.len();
    let mut out = AdjustedPValues::new(AdjustMethod::LocalFdr, vec![1.0; m], &p.covariate_names);
    out.fallback = true;
    if m < LFDR_MIN_TESTS {
        return out;
    }
    let z: Vec<f64> = p.values.iter().map(|&x| (-normal_quantile(x.clamp(P_FLOOR, 1.0))).clamp(-Z_CLIP, Z_CLIP)).collect();
    let (zmin, zmax) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if zmax - zmin < 1e-8 {
        return out;
    }
    let width = (zmax - zmin) / LFDR_BINS as f64;
    let mut counts = vec![0.0; LFDR_BINS];
    for &v in &z {
        counts[(((v - zmin) / width) as usize).min(LFDR_BINS - 1)] += 1.0;
    }
    let centers: Vec<f64> = (0..LFDR_BINS).map(|b| zmin + (b as f64 + 0.5) * width).collect();
    let half = 0.5 * (zmax - zmin);
    let mid = 0.5 * (zmax + zmin);
    let mut basis = vec![0.0; LFDR_DEGREE + 1];
    let design = DMatrix::from_fn(LFDR_BINS, LFDR_DEGREE + 1, |b, k| {
        legendre((centers[b] - mid) / half, LFDR_DEGREE, &mut basis);
        basis[k]
    });
    let Some(beta) = poisson_glm(&design, &counts) else { return out };
    let log_f = |v: f64| -> f64 {
        let mut basis = vec![0.0; LFDR_DEGREE + 1];
        let t = ((v - mid) / half).clamp(-1.0, 1.0);
        legendre(t, LFDR_DEGREE, &mut basis);
        basis.iter().zip(beta.iter()).map(|(a, b)| a * b).sum()
    };
    // log expected bin count of the null component: log(pi0 m width phi(z; mu, sigma))
    let scale = (m as f64 * width).ln();
    let null = central_matching(&z, &centers, &log_f, scale);
    out.fallback = null.is_none();
    let (mu0, sigma0, pi0) = null.unwrap_or_else(|| {
        // theoretical null; pi0 from the central counts
        let log_phi = |v: f64| -0.5 * v * v - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let ratio = centers
            .iter()
            .filter(|c| c.abs() <= 1.0)
            .map(|&c| (log_f(c) - scale - log_phi(c)).exp())
            .fold(f64::INFINITY, f64::min);
        (0.0, 1.0, if ratio.is_finite() { ratio } else { 1.0 })
    });
    // the unclamped scale keeps f0 matched to f at the centre; the reported
    // proportion is clamped
    let log_f0 = |v: f64| {
        let u = (v - mu0) / sigma0;
        -0.5 * u * u - sigma0.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
    };
    let mut lfdr: Vec<f64> = z.iter().map(|&v| (pi0.ln() + scale + log_f0(v) - log_f(v)).exp().min(1.0)).collect();
    // right tail: lfdr never increases as z moves away from the null centre
    let mut order: Vec<usize> = (0..m).filter(|&i| z[i] > mu0).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]));
    let mut running = 1.0f64;
    for &i in &order {
        running = running.min(lfdr[i]);
        lfdr[i] = running;
    }
    out.values = lfdr;
    out.pi0_hat = Some(pi0.min(1.0));
    out
}

/// Quadratic fit of the log density over the central half of the z values.
/// Returns (mean, sd, pi0) or `None` when the fit is not a proper Gaussian.
fn central_matching(z: &[f64], centers: &[f64], log_f: &dyn Fn(f64) -> f64, scale: f64) -> Option<(f64, f64, f64)> {
    let mut sorted = z.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |f: f64| sorted[((sorted.len() - 1) as f64 * f).round() as usize];
    let (lo, hi) = (q(0.25), q(0.75));
    let pts: Vec<f64> = centers.iter().copied().filter(|&c| c >= lo && c <= hi).collect();
    if pts.len() < 5 {
        return None;
    }
    let x = DMatrix::from_fn(pts.len(), 3, |i, k| pts[i].powi(k as i32));
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|&c| log_f(c)));
    let coef = (x.transpose() * &x).cholesky()?.solve(&(x.transpose() * y));
    let (a, b, c) = (coef[0], coef[1], coef[2]);
    if c >= 0.0 {
        return None;
    }
    let var = -1.0 / (2.0 * c);
    let sd = var.sqrt();
    let mu = b * var;
    if !(0.25..=4.0).contains(&sd) || mu.abs() > 3.0 {
        return None;
    }
    let log_pi0 = a + mu * mu / (2.0 * var) + (2.0 * std::f64::consts::PI).ln() * 0.5 + sd.ln() - scale;
    Some((mu, sd, log_pi0.exp()))
}

/// Refit the factor model on one block, test the corrected covariates and
/// apply BH. `q_max = 0` reduces to BH on the block's raw tests.
pub fn factor_adjusted_selection(
    block: &DMatrix<f64>,
    names: &[String],
    y: &Response,
    q_max: usize,
) -> Result<AdjustedPValues> {
    let q = if block.ncols() < 2 { 0 } else { select_num_factors(block, y, q_max)? };
    let model = fit_factor_model(block, y, q)?;
    let fixed = decorrelate(block, &model)?;
    let p = column_pvalues(&fixed, names, y)?;
    let mut out = benjamini_hochberg(&p);
    out.method = AdjustMethod::FactorAdjusted;
    Ok(out)
}

/// [`factor_adjusted_selection`] run on every cluster of the corrected data,
/// reassembled in column order.
pub fn factor_adjusted_by_cluster(cd: &CorrectedDataset, q_max: usize) -> Result<AdjustedPValues> {
    use rayon::prelude::*;
    let members = cd.partition.members();
    let parts: Vec<AdjustedPValues> = members
        .par_iter()
        .enumerate()
        .map(|(k, cols)| {
            let block = DMatrix::from_fn(cd.matrix.nrows(), cols.len(), |i, c| cd.matrix[(i, cols[c])]);
            let names: Vec<String> = cols.iter().map(|&j| cd.covariate_names[j].clone()).collect();
            factor_adjusted_selection(&block, &names, &cd.response, q_max).map_err(|e| e.in_cluster(k + 1))
        })
        .collect::<Result<_>>()?;
    let mut values = vec![1.0; cd.matrix.ncols()];
    for (cols, part) in members.iter().zip(parts) {
        for (c, &j) in cols.iter().enumerate() {
            values[j] = part.values[c];
        }
    }
    Ok(AdjustedPValues::new(AdjustMethod::FactorAdjusted, values, &cd.covariate_names))
}
