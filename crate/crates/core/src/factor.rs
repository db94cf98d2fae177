//! Gaussian factor model fitted by EM on the residuals of the covariates
//! regressed on `(1, Y)`, and the decorrelation `X* = X - Z B'`.

use crate::covclust::Partition;
use crate::data::{Dataset, Response};
use crate::error::{Error, Result};
use crate::linalg::col;
use nalgebra::{Cholesky, DMatrix};
use rayon::prelude::*;
use serde::Serialize;

const MAX_ITER: usize = 200;
const REL_TOL: f64 = 1e-6;
const PSI_FLOOR: f64 = 1e-6;
/// Default upper bound for the number of factors per cluster.
pub const DEFAULT_Q_MAX: usize = 15;

#[derive(Debug, Clone)]
pub struct FactorModel {
    pub q: usize,
    /// `p_k × q` loadings.
    pub loadings: DMatrix<f64>,
    pub specific_variances: Vec<f64>,
    /// `n × q` posterior-mean factor scores.
    pub factor_scores: DMatrix<f64>,
    /// Per covariate: group means `(Y=0, Y=1)` for a binary response,
    /// `(intercept, slope)` for a continuous one.
    pub response_effects: Vec<[f64; 2]>,
    pub common_variance: f64,
    pub converged: bool,
    /// Slope of the latent factors on the response within the sample,
    /// estimated robustly from the covariates' response slopes.
    pub factor_response_slopes: Vec<f64>,
    /// Observed-data log-likelihood (per sample) after each EM iteration.
    pub log_likelihoods: Vec<f64>,
}

#[derive(Serialize)]
struct FactorModelJson<'a> {
    q: usize,
    loadings: Vec<Vec<f64>>,
    specific_variances: &'a [f64],
    common_variance: f64,
    converged: bool,
}

impl FactorModel {
    pub fn to_json(&self) -> serde_json::Value {
        let loadings = (0..self.loadings.nrows()).map(|i| self.loadings.row(i).iter().copied().collect()).collect();
        serde_json::to_value(FactorModelJson {
            q: self.q,
            loadings,
            specific_variances: &self.specific_variances,
            common_variance: self.common_variance,
            converged: self.converged,
        })
        .expect("plain data serialises")
    }
}

/// `trace(BB') / trace(BB' + Psi)`.
pub fn common_variance(model: &FactorModel) -> f64 {
    ratio(&model.loadings, &model.specific_variances)
}

fn ratio(b: &DMatrix<f64>, psi: &[f64]) -> f64 {
    let common: f64 = b.iter().map(|v| v * v).sum();
    let total = common + psi.iter().sum::<f64>();
    if total > 0.0 {
        common / total
    } else {
        0.0
    }
}

/// Residuals of each column on `(1, y)` and the fitted coefficients.
struct Residualized {
    r: DMatrix<f64>,
    coef: Vec<[f64; 2]>,
    /// OLS slope of each covariate on the response.
    slopes: Vec<f64>,
    y_centered: Vec<f64>,
}

fn residualize(x: &DMatrix<f64>, y: &Response) -> Result<Residualized> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: format!("{n} responses"), found: y.len().to_string() });
    }
    let ym = y.values.iter().sum::<f64>() / n as f64;
    let syy: f64 = y.values.iter().map(|v| (v - ym) * (v - ym)).sum();
    let mut r = x.clone();
    let mut coef = Vec::with_capacity(x.ncols());
    let mut slopes = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let c = col(x, j);
        let xm = c.iter().sum::<f64>() / n as f64;
        let sxy: f64 = c.iter().zip(&y.values).map(|(a, b)| (a - xm) * (b - ym)).sum();
        let slope = sxy / syy;
        let icpt = xm - slope * ym;
        for i in 0..n {
            r[(i, j)] = c[i] - icpt - slope * y.values[i];
        }
        slopes.push(slope);
        coef.push(match y.kind {
            crate::data::ResponseKind::Binary => [icpt, icpt + slope],
            crate::data::ResponseKind::Continuous => [icpt, slope],
        });
    }
    let y_centered = y.values.iter().map(|v| v - ym).collect();
    Ok(Residualized { r, coef, slopes, y_centered })
}

/// Quantities shared by the E-step and the likelihood, all `O(n p q)`.
struct Moments {
    /// `R Psi^-1 B`, n×q
    w: DMatrix<f64>,
    m_chol: Cholesky<f64, nalgebra::Dyn>,
    log_det_m: f64,
}

fn moments(r: &DMatrix<f64>, b: &DMatrix<f64>, psi: &[f64]) -> Result<Moments> {
    let q = b.ncols();
    let mut b_scaled = b.clone();
    for i in 0..b.nrows() {
        b_scaled.row_mut(i).scale_mut(1.0 / psi[i]);
    }
    let m = DMatrix::identity(q, q) + b.transpose() * &b_scaled;
    let m_chol = Cholesky::new(m).ok_or(Error::NonConvergence { what: "factor model (singular M)", iterations: 0 })?;
    let log_det_m = 2.0 * m_chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let w = r * b_scaled;
    Ok(Moments { w, m_chol, log_det_m })
}

/// Per-sample Gaussian log-likelihood of the residual covariance `s_diag`
/// / `r` under `Sigma = B B' + Psi`.
fn log_likelihood(r: &DMatrix<f64>, s_diag: &[f64], psi: &[f64], mo: &Moments, denom: f64) -> f64 {
    let p = psi.len() as f64;
    let log_det = psi.iter().map(|v| v.ln()).sum::<f64>() + mo.log_det_m;
    let mut tr = s_diag.iter().zip(psi).map(|(s, v)| s / v).sum::<f64>();
    if mo.w.ncols() > 0 {
        let wtw = mo.w.transpose() * &mo.w / denom;
        let sol = mo.m_chol.solve(&wtw);
        tr -= sol.trace();
    }
    let _ = r;
    -0.5 * (p * (2.0 * std::f64::consts::PI).ln() + log_det + tr)
}

/// Fit a `q`-factor model to `cluster` (n × p_k) conditionally on `y`.
pub fn fit_factor_model(cluster: &DMatrix<f64>, y: &Response, q: usize) -> Result<FactorModel> {
    let (n, pk) = cluster.shape();
    if n < 3 || pk == 0 {
        return Err(Error::InvalidArgument(format!("factor model on a {n}×{pk} block")));
    }
    if q > 0 && (q + 2 > n || q + 1 > pk) {
        return Err(Error::InvalidArgument(format!("q = {q} exceeds min(n-2, p_k-1) for a {n}×{pk} block")));
    }
    let res = residualize(cluster, y)?;
    fit_residuals(res, q)
}

fn fit_residuals(res: Residualized, q: usize) -> Result<FactorModel> {
    let Residualized { r, coef, slopes, y_centered } = res;
    let (n, pk) = r.shape();
    let denom = n as f64;
    let s_diag: Vec<f64> = (0..pk).map(|j| col(&r, j).iter().map(|v| v * v).sum::<f64>() / denom).collect();
    let floor: Vec<f64> = s_diag.iter().map(|v| (PSI_FLOOR * v).max(f64::MIN_POSITIVE)).collect();
    if q == 0 {
        let psi: Vec<f64> = s_diag.iter().zip(&floor).map(|(s, f)| s.max(*f)).collect();
        let mo = moments(&r, &DMatrix::zeros(pk, 0), &psi)?;
        let ll = log_likelihood(&r, &s_diag, &psi, &mo, denom);
        return Ok(FactorModel {
            q: 0,
            loadings: DMatrix::zeros(pk, 0),
            specific_variances: psi,
            factor_scores: DMatrix::zeros(n, 0),
            response_effects: coef,
            common_variance: 0.0,
            converged: true,
            factor_response_slopes: Vec::new(),
            log_likelihoods: vec![ll],
        });
    }
    // principal-factor start from the top eigenpairs of S = R'R/n, via the n×n Gram matrix
    let gram = &r * r.transpose() / denom;
    let (vals, vecs) = crate::linalg::sym_eigen_desc(gram);
    let mut b = DMatrix::zeros(pk, q);
    for t in 0..q {
        let lam = vals[t].max(0.0);
        if lam <= 0.0 {
            continue;
        }
        // eigenvector of S: R' u / sqrt(n lam); loading column scaled by sqrt(lam)
        let u = vecs.column(t);
        let v = r.transpose() * u / (denom * lam).sqrt();
        b.set_column(t, &(v * lam.sqrt()));
    }
    let mut psi: Vec<f64> = (0..pk)
        .map(|i| (s_diag[i] - b.row(i).iter().map(|v| v * v).sum::<f64>()).max(floor[i]).max(0.05 * s_diag[i]))
        .collect();
    let mut mo = moments(&r, &b, &psi)?;
    let mut ll = log_likelihood(&r, &s_diag, &psi, &mo, denom);
    let mut trace = vec![ll];
    let mut converged = false;
    for _ in 0..MAX_ITER {
        // E-step
        let w_minv = mo.m_chol.solve(&mo.w.transpose()).transpose(); // n×q: W M^-1
        let sbeta = r.transpose() * &w_minv / denom; // p×q: S beta'
        let minv = mo.m_chol.inverse();
        let czz = &minv + w_minv.transpose() * &w_minv / denom; // I - beta B + beta S beta'
        // M-step
        let czz_chol =
            Cholesky::new(czz).ok_or(Error::NonConvergence { what: "factor model (singular Czz)", iterations: 0 })?;
        let b_new = czz_chol.solve(&sbeta.transpose()).transpose();
        for i in 0..pk {
            let explained: f64 = b_new.row(i).iter().zip(sbeta.row(i).iter()).map(|(a, c)| a * c).sum();
            psi[i] = (s_diag[i] - explained).max(floor[i]);
        }
        b = b_new;
        mo = moments(&r, &b, &psi)?;
        let ll_new = log_likelihood(&r, &s_diag, &psi, &mo, denom);
        trace.push(ll_new);
        let change = (ll_new - ll).abs() / ll.abs().max(1e-300);
        ll = ll_new;
        if change < REL_TOL {
            converged = true;
            break;
        }
    }
    let mut z = mo.m_chol.solve(&mo.w.transpose()).transpose();
    // Z above is orthogonal to Y by construction; add back the in-sample
    // part of the factors that moves with Y, so that covariates without a
    // response effect lose their factor-driven association too.
    let gamma = if slopes.is_empty() { vec![0.0; q] } else { factor_response_slopes(&slopes, &b, &psi) };
    for t in 0..q {
        for i in 0..n {
            z[(i, t)] += y_centered[i] * gamma[t];
        }
    }
    let common_variance = ratio(&b, &psi);
    Ok(FactorModel {
        q,
        loadings: b,
        specific_variances: psi,
        factor_scores: z,
        response_effects: coef,
        common_variance,
        converged,
        factor_response_slopes: gamma,
        log_likelihoods: trace,
    })
}

/// Robust regression (Huber then bisquare IRLS, MAD scale) of the
/// standardised response slopes `c_i / sqrt(psi_i)` on the standardised
/// loadings `b_i / sqrt(psi_i)`. Covariates with a genuine response effect
/// are the outliers of this regression.
fn factor_response_slopes(slopes: &[f64], b: &DMatrix<f64>, psi: &[f64]) -> Vec<f64> {
    let (pk, q) = b.shape();
    let mut a = b.clone();
    let mut u = vec![0.0; pk];
    for i in 0..pk {
        let s = psi[i].sqrt();
        a.row_mut(i).scale_mut(1.0 / s);
        u[i] = slopes[i] / s;
    }
    let weighted_ls = |w: &[f64]| -> Option<Vec<f64>> {
        let mut ata = DMatrix::zeros(q, q);
        let mut atu = nalgebra::DVector::zeros(q);
        for i in 0..pk {
            if w[i] == 0.0 {
                continue;
            }
            let row = a.row(i);
            for s in 0..q {
                atu[s] += w[i] * row[s] * u[i];
                for t in 0..q {
                    ata[(s, t)] += w[i] * row[s] * row[t];
                }
            }
        }
        Cholesky::new(ata).map(|c| c.solve(&atu).as_slice().to_vec())
    };
    let mut gamma = match weighted_ls(&vec![1.0; pk]) {
        Some(g) => g,
        None => return vec![0.0; q],
    };
    let residuals = |g: &[f64]| -> Vec<f64> {
        (0..pk).map(|i| u[i] - a.row(i).iter().zip(g).map(|(x, y)| x * y).sum::<f64>()).collect()
    };
    for (k_tune, bisquare) in [(1.345, false), (4.685, true)] {
        for _ in 0..30 {
            let r = residuals(&gamma);
            let scale = mad(&r).max(1e-12);
            let w: Vec<f64> = r
                .iter()
                .map(|v| {
                    let t = (v / scale).abs() / k_tune;
                    if bisquare {
                        if t < 1.0 { (1.0 - t * t).powi(2) } else { 0.0 }
                    } else if t <= 1.0 {
                        1.0
                    } else {
                        1.0 / t
                    }
                })
                .collect();
            let Some(next) = weighted_ls(&w) else { break };
            let delta = next.iter().zip(&gamma).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            gamma = next;
            if delta < 1e-10 * gamma.iter().map(|v| v.abs()).fold(1.0, f64::max) {
                break;
            }
        }
    }
    gamma
}

/// Median absolute deviation about the median, scaled for Gaussian data.
fn mad(x: &[f64]) -> f64 {
    let med = median(x);
    let dev: Vec<f64> = x.iter().map(|v| (v - med).abs()).collect();
    1.4826 * median(&dev)
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `X - Z B'`: remove the fitted factor part, keep the response signal.
pub fn decorrelate(cluster: &DMatrix<f64>, model: &FactorModel) -> Result<DMatrix<f64>> {
    let (n, pk) = cluster.shape();
    if model.factor_scores.nrows() != n || model.loadings.nrows() != pk {
        return Err(Error::DimensionMismatch {
            expected: format!("{}×{}", model.factor_scores.nrows(), model.loadings.nrows()),
            found: format!("{n}×{pk}"),
        });
    }
    if model.q == 0 {
        return Ok(cluster.clone());
    }
    Ok(cluster - &model.factor_scores * model.loadings.transpose())
}

/// `n ×` mean squared off-diagonal correlation of the columns of `e`.
fn residual_correlation_energy(e: &DMatrix<f64>) -> f64 {
    let (n, p) = e.shape();
    if p < 2 {
        return 0.0;
    }
    let mut u = e.clone();
    for j in 0..p {
        let c = crate::linalg::col_mut(&mut u, j);
        let m = c.iter().sum::<f64>() / n as f64;
        c.iter_mut().for_each(|v| *v -= m);
        let nrm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 0.0 {
            c.iter_mut().for_each(|v| *v /= nrm);
        }
    }
    // sum_ij r_ij^2 = ||U'U||_F^2 = ||UU'||_F^2
    let g = &u * u.transpose();
    let total: f64 = g.iter().map(|v| v * v).sum();
    let off = (total - p as f64).max(0.0);
    n as f64 * off / (p as f64 * (p as f64 - 1.0))
}

/// Number of factors minimising the residual dependence left after
/// correction; the smallest `q` within 5% of the minimum wins.
pub fn select_num_factors(cluster: &DMatrix<f64>, y: &Response, q_max: usize) -> Result<usize> {
    Ok(scan_factors(cluster, y, q_max)?.0)
}

/// Selected `q` and the criterion value for every scanned `q`.
pub fn scan_factors(cluster: &DMatrix<f64>, y: &Response, q_max: usize) -> Result<(usize, Vec<f64>)> {
    let (n, pk) = cluster.shape();
    let cap = q_max.min(n.saturating_sub(2)).min(pk.saturating_sub(1));
    if cap == 0 {
        return Ok((0, vec![]));
    }
    let res = residualize(cluster, y)?;
    let mut crit = Vec::with_capacity(cap + 1);
    let mut best = f64::INFINITY;
    let mut rising = 0;
    for q in 0..=cap {
        let model = fit_residuals(
            Residualized { r: res.r.clone(), coef: Vec::new(), slopes: Vec::new(), y_centered: res.y_centered.clone() },
            q,
        )?;
        let e = if q == 0 { res.r.clone() } else { &res.r - &model.factor_scores * model.loadings.transpose() };
        let c = residual_correlation_energy(&e);
        if let Some(&prev) = crit.last() {
            if c > prev && c > 1.05 * best {
                rising += 1;
            } else {
                rising = 0;
            }
        }
        crit.push(c);
        best = best.min(c);
        // the criterion only climbs once q overshoots; stop after three rises
        if rising >= 3 {
            break;
        }
    }
    let q = crit.iter().position(|&c| c <= 1.05 * best).unwrap_or(0);
    Ok((q, crit))
}

/// Corrected covariates with the partition and per-cluster models.
#[derive(Debug, Clone)]
pub struct CorrectedDataset {
    pub matrix: DMatrix<f64>,
    pub covariate_names: Vec<String>,
    pub partition: Partition,
    pub models: Vec<FactorModel>,
    pub response: Response,
}

impl CorrectedDataset {
    /// The corrected matrix wrapped as a dataset (same names, ids, response).
    pub fn to_dataset(&self, source: &Dataset) -> Result<Dataset> {
        Dataset::new(self.matrix.clone(), self.covariate_names.clone(), self.response.clone(), source.sample_ids.clone())
    }
}

/// Per cluster: choose q, fit, subtract the factor part. Columns keep their
/// original order.
pub fn pretreat(d: &Dataset, partition: &Partition, q_max: usize) -> Result<CorrectedDataset> {
    if partition.labels.len() != d.p() {
        return Err(Error::DimensionMismatch {
            expected: format!("partition of {} covariates", d.p()),
            found: partition.labels.len().to_string(),
        });
    }
    let members = partition.members();
    let fits: Vec<(DMatrix<f64>, FactorModel)> = members
        .par_iter()
        .enumerate()
        .map(|(k, cols)| -> Result<_> {
            let sub = DMatrix::from_fn(d.n(), cols.len(), |i, c| d.matrix[(i, cols[c])]);
            let q = if cols.len() < 2 { Ok(0) } else { select_num_factors(&sub, &d.response, q_max) };
            let q = q.map_err(|e| e.in_cluster(k + 1))?;
            let model = fit_factor_model(&sub, &d.response, q).map_err(|e| e.in_cluster(k + 1))?;
            let fixed = decorrelate(&sub, &model).map_err(|e| e.in_cluster(k + 1))?;
            Ok((fixed, model))
        })
        .collect::<Result<_>>()?;
    let mut matrix = DMatrix::zeros(d.n(), d.p());
    let mut models = Vec::with_capacity(fits.len());
    for (cols, (fixed, model)) in members.iter().zip(fits) {
        for (c, &j) in cols.iter().enumerate() {
            matrix.set_column(j, &fixed.column(c));
        }
        models.push(model);
    }
    Ok(CorrectedDataset {
        matrix,
        covariate_names: d.covariate_names.clone(),
        partition: partition.clone(),
        models,
        response: d.response.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ResponseKind;
    use crate::rng;
    use crate::sim::simulate_cluster_with;
    use rand::RngExt;
    use rand_distr::StandardNormal;

    fn binary(n: usize) -> Response {
        Response::new("y", ResponseKind::Binary, (0..n).map(|i| (i % 2) as f64).collect()).unwrap()
    }

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut g = rng::from_seed(seed);
        DMatrix::from_fn(n, p, |_, _| g.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn zero_factors_is_identity() {
        let x = gaussian(20, 5, 1);
        let m = fit_factor_model(&x, &binary(20), 0).unwrap();
        assert_eq!(decorrelate(&x, &m).unwrap(), x);
        assert_eq!(common_variance(&m), 0.0);
    }

    #[test]
    fn recovers_low_rank_covariance() {
        let (n, pk, q) = (200, 20, 2);
        let mut g = rng::from_seed(3);
        let b_true = DMatrix::from_fn(pk, q, |_, _| g.sample::<f64, _>(StandardNormal));
        let z = DMatrix::from_fn(n, q, |_, _| g.sample::<f64, _>(StandardNormal));
        let e = DMatrix::from_fn(n, pk, |_, _| 0.5 * g.sample::<f64, _>(StandardNormal));
        let x = z * b_true.transpose() + e;
        let m = fit_factor_model(&x, &binary(n), q).unwrap();
        let bbt = &m.loadings * m.loadings.transpose();
        let truth = &b_true * b_true.transpose();
        let rel = (&bbt - &truth).norm() / truth.norm();
        assert!(rel < 0.15, "relative error {rel}");
        assert!(m.converged);
    }

    #[test]
    fn noise_gives_small_common_variance() {
        let x = gaussian(60, 30, 7);
        let m = fit_factor_model(&x, &binary(60), 1).unwrap();
        assert!(common_variance(&m) < 0.15, "{}", common_variance(&m));
        assert!((m.common_variance - common_variance(&m)).abs() == 0.0);
    }

    #[test]
    fn exact_rank_one_is_removed() {
        let n = 40;
        let y = binary(n);
        // z orthogonal to (1, y)
        let mut z: Vec<f64> = gaussian(n, 1, 9).as_slice().to_vec();
        for _ in 0..2 {
            let m = z.iter().sum::<f64>() / n as f64;
            z.iter_mut().for_each(|v| *v -= m);
            let yc: Vec<f64> = y.values.iter().map(|v| v - 0.5).collect();
            let proj = crate::linalg::dot(&z, &yc) / crate::linalg::dot(&yc, &yc);
            z.iter_mut().zip(&yc).for_each(|(v, c)| *v -= proj * c);
        }
        let b: Vec<f64> = (0..8).map(|i| 0.5 + i as f64 * 0.3).collect();
        let x = DMatrix::from_fn(n, 8, |i, j| z[i] * b[j]);
        let m = fit_factor_model(&x, &y, 1).unwrap();
        let out = decorrelate(&x, &m).unwrap();
        assert!(out.abs().max() < 1e-6, "{}", out.abs().max());
    }

    #[test]
    fn em_log_likelihood_is_monotone() {
        for t in 0..20u64 {
            let mut g = rng::stream(77, "em", t);
            let pk = g.random_range(6..40usize);
            let n = g.random_range(30..80usize);
            let q = g.random_range(1..4usize);
            let x = simulate_cluster_with(pk, q + 1, 0.6, 1.0, n, &mut g);
            let m = fit_factor_model(&x, &binary(n), q).unwrap();
            for w in m.log_likelihoods.windows(2) {
                assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "fit {t}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn decorrelate_is_linear_and_checks_shape() {
        let x = gaussian(30, 6, 11);
        let m = fit_factor_model(&x, &binary(30), 2).unwrap();
        let a = decorrelate(&x, &m).unwrap();
        let b = decorrelate(&(&x * 2.0), &m).unwrap();
        let zb = &m.factor_scores * m.loadings.transpose();
        assert!((&b - (&x * 2.0 - &zb)).abs().max() < 1e-12);
        assert!((&a - (&x - &zb)).abs().max() < 1e-12);
        assert!(decorrelate(&gaussian(30, 5, 1), &m).is_err());
    }

    #[test]
    fn factor_count_selection() {
        let y = binary(60);
        let mut noise_zero = 0;
        let mut four = 0;
        for s in 0..10u64 {
            let mut g = rng::stream(5, "nf", s);
            let noise = DMatrix::from_fn(60, 120, |_, _| g.sample::<f64, _>(StandardNormal));
            if select_num_factors(&noise, &y, 15).unwrap() == 0 {
                noise_zero += 1;
            }
            let x = simulate_cluster_with(400, 4, 0.8, 1.0, 60, &mut g);
            if (3..=5).contains(&select_num_factors(&x, &y, 15).unwrap()) {
                four += 1;
            }
        }
        assert!(noise_zero >= 9, "{noise_zero}/10 noise runs chose q=0");
        assert!(four >= 8, "{four}/10 runs chose q in 3..=5");
        assert_eq!(select_num_factors(&gaussian(60, 10, 1), &y, 0).unwrap(), 0);
    }

    #[test]
    fn pretreat_singletons_and_single_cluster() {
        let x = gaussian(30, 5, 12) + gaussian(30, 1, 13) * DMatrix::from_element(1, 5, 1.0);
        let names: Vec<String> = (0..5).map(|j| format!("g{j}")).collect();
        let ids: Vec<String> = (0..30).map(|i| format!("s{i}")).collect();
        let d = Dataset::new(x.clone(), names, binary(30), ids).unwrap();
        let c = pretreat(&d, &Partition::singletons(5), 10).unwrap();
        assert_eq!(c.matrix, x);
        let one = pretreat(&d, &Partition::single(5), 3).unwrap();
        assert_eq!(one.models.len(), 1);
        let q = one.models[0].q;
        let direct = fit_factor_model(&x, &d.response, q).unwrap();
        assert!((decorrelate(&x, &direct).unwrap() - &one.matrix).abs().max() < 1e-12);
    }
}
