//! Cross-validated Lasso: least squares for a continuous response, logistic
//! (IRLS outer loop) for a binary one. Coordinate descent with an active set
//! screened by the sequential strong rule and checked against the full KKT
//! conditions at every lambda.

use crate::data::{Response, ResponseKind};
use crate::error::{Error, Result};
use crate::linalg::{col, dot};
use crate::rng;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoOptions {
    pub folds: usize,
    pub n_lambda: usize,
    /// Smallest lambda as a fraction of the largest.
    pub lambda_min_ratio: f64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions { folds: 10, n_lambda: 100, lambda_min_ratio: 1e-3 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoFit {
    pub lambda_path: Vec<f64>,
    /// Per lambda, coefficients on the internally standardised scale.
    pub coefficients: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub cv_mean: Vec<f64>,
    pub cv_sd: Vec<f64>,
    pub chosen_index: usize,
    pub chosen_lambda: f64,
    /// The solver stopped early (IRLS failed to converge); the path ends at
    /// the last converged lambda.
    pub diverged: bool,
}

impl LassoFit {
    /// Indices with a non-zero coefficient at the chosen lambda.
    pub fn selected(&self) -> Vec<usize> {
        self.coefficients[self.chosen_index].iter().enumerate().filter(|(_, &b)| b != 0.0).map(|(j, _)| j).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lambda,cv_mean,cv_sd,nonzero\n");
        for k in 0..self.lambda_path.len() {
            let nz = self.coefficients[k].iter().filter(|&&b| b != 0.0).count();
            s.push_str(&format!("{},{},{},{nz}\n", self.lambda_path[k], self.cv_mean[k], self.cv_sd[k]));
        }
        s
    }
}

/// Columns centred and scaled to unit mean square (`x'x / n = 1`).
/// Constant columns come back as zeros with scale 0.
pub(crate) struct Standardized {
    pub x: DMatrix<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

pub(crate) fn standardize_unit(x: &DMatrix<f64>) -> Standardized {
    let (n, p) = x.shape();
    let mut out = x.clone();
    let mut means = vec![0.0; p];
    let mut scales = vec![0.0; p];
    for j in 0..p {
        let c = crate::linalg::col_mut(&mut out, j);
        let m = c.iter().sum::<f64>() / n as f64;
        c.iter_mut().for_each(|v| *v -= m);
        let s = (c.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
        if s > 1e-12 * (1.0 + m.abs()) {
            c.iter_mut().for_each(|v| *v /= s);
            scales[j] = s;
        } else {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        means[j] = m;
    }
    Standardized { x: out, means, scales }
}

#[inline]
fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[inline]
fn sigmoid(e: f64) -> f64 {
    if e >= 0.0 {
        1.0 / (1.0 + (-e).exp())
    } else {
        let a = e.exp();
        a / (1.0 + a)
    }
}

const MIN_WEIGHT: f64 = 1e-5;
const CD_TOL: f64 = 1e-16;
const MAX_OUTER: usize = 100;
const MAX_SWEEPS: usize = 100_000;
const DEV_RATIO_STOP: f64 = 0.999;
/// Stop the path once the deviance ratio gains less than this fraction.
const DEV_GAIN_STOP: f64 = 1e-5;

/// Lasso path on standardised columns. `y` is 0/1 for logistic.
pub(crate) struct Path {
    pub betas: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
    pub diverged: bool,
}

/// Largest useful lambda: every coefficient is zero at and above it.
pub(crate) fn lambda_max(x: &DMatrix<f64>, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let ym = y.iter().sum::<f64>() / n;
    let r: Vec<f64> = y.iter().map(|v| v - ym).collect();
    (0..x.ncols()).map(|j| dot(col(x, j), &r).abs() / n).fold(0.0, f64::max)
}

pub(crate) fn lambda_path(lmax: f64, opts: &LassoOptions) -> Vec<f64> {
    let k = opts.n_lambda.max(2);
    (0..k).map(|i| lmax * opts.lambda_min_ratio.powf(i as f64 / (k - 1) as f64)).collect()
}

struct State<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    logistic: bool,
    beta: Vec<f64>,
    b0: f64,
    eta: Vec<f64>,
}

impl<'a> State<'a> {
    fn grad(&self) -> Vec<f64> {
        // (1/n) x_j' (y - mu)
        let n = self.y.len() as f64;
        let r: Vec<f64> = self
            .y
            .iter()
            .zip(&self.eta)
            .map(|(&y, &e)| y - if self.logistic { sigmoid(e) } else { e })
            .collect();
        (0..self.x.ncols()).map(|j| dot(col(self.x, j), &r) / n).collect()
    }

    fn deviance(&self) -> f64 {
        self.y
            .iter()
            .zip(&self.eta)
            .map(|(&y, &e)| {
                if self.logistic {
                    // -2 log-likelihood, stable form
                    2.0 * (e.max(0.0) + (-e.abs()).exp().ln_1p() - y * e)
                } else {
                    (y - e) * (y - e)
                }
            })
            .sum()
    }

    /// Weighted coordinate descent on `set` with working residual `r`
    /// (weights `w`), including the unpenalised intercept.
    fn cd(&mut self, set: &[usize], w: &[f64], r: &mut [f64], lam: f64) -> bool {
        let n = self.y.len() as f64;
        let xwx: Vec<f64> =
            set.iter().map(|&j| col(self.x, j).iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>() / n).collect();
        let wsum: f64 = w.iter().sum();
        for _ in 0..MAX_SWEEPS {
            let mut maxd = 0.0f64;
            for (k, &j) in set.iter().enumerate() {
                if xwx[k] <= 0.0 {
                    continue;
                }
                let xj = col(self.x, j);
                let g = xj.iter().zip(w).zip(r.iter()).map(|((x, w), r)| w * x * r).sum::<f64>() / n;
                let old = self.beta[j];
                let new = soft(g + xwx[k] * old, lam) / xwx[k];
                let d = new - old;
                if d != 0.0 {
                    for (ri, xi) in r.iter_mut().zip(xj) {
                        *ri -= d * xi;
                    }
                    self.beta[j] = new;
                    maxd = maxd.max(xwx[k] * d * d);
                }
            }
            let d0 = r.iter().zip(w).map(|(r, w)| r * w).sum::<f64>() / wsum;
            if d0 != 0.0 {
                r.iter_mut().for_each(|v| *v -= d0);
                self.b0 += d0;
                maxd = maxd.max(wsum / n * d0 * d0);
            }
            if maxd < CD_TOL {
                return true;
            }
        }
        false
    }

    /// Solve at `lam` restricted to `set`. Returns false on non-convergence.
    fn solve(&mut self, set: &[usize], lam: f64) -> bool {
        let n = self.y.len();
        if !self.logistic {
            let w = vec![1.0; n];
            let mut r: Vec<f64> = self.y.iter().zip(&self.eta).map(|(y, e)| y - e).collect();
            let ok = self.cd(set, &w, &mut r, lam);
            for i in 0..n {
                self.eta[i] = self.y[i] - r[i];
            }
            return ok;
        }
        for _ in 0..MAX_OUTER {
            let mut w = vec![0.0; n];
            let mut r = vec![0.0; n];
            for i in 0..n {
                let mu = sigmoid(self.eta[i]);
                w[i] = (mu * (1.0 - mu)).max(MIN_WEIGHT);
                r[i] = (self.y[i] - mu) / w[i];
            }
            let before: Vec<f64> = set.iter().map(|&j| self.beta[j]).collect();
            let b0_before = self.b0;
            if !self.cd(set, &w, &mut r, lam) {
                return false;
            }
            // eta = z - r where z = eta_old + r_old
            let mut z = vec![0.0; n];
            for i in 0..n {
                let mu = sigmoid(self.eta[i]);
                z[i] = self.eta[i] + (self.y[i] - mu) / w[i];
            }
            for i in 0..n {
                self.eta[i] = z[i] - r[i];
            }
            if self.eta.iter().any(|e| !e.is_finite()) {
                return false;
            }
            let change = set
                .iter()
                .zip(&before)
                .map(|(&j, b)| (self.beta[j] - b).abs())
                .fold((self.b0 - b0_before).abs(), f64::max);
            if change < 1e-9 {
                return true;
            }
        }
        false
    }
}

/// Lasso path over `lambdas` (decreasing) on standardised `x`.
pub(crate) fn solve_path(x: &DMatrix<f64>, y: &[f64], logistic: bool, lambdas: &[f64]) -> Path {
    let (n, p) = x.shape();
    let ym = y.iter().sum::<f64>() / n as f64;
    let b0 = if logistic { (ym / (1.0 - ym)).ln() } else { ym };
    let mut st = State { x, y, logistic, beta: vec![0.0; p], b0, eta: vec![b0; n] };
    let null_dev = st.deviance();
    let mut out = Path { betas: Vec::new(), intercepts: Vec::new(), diverged: false };
    let mut ever = vec![false; p];
    let mut grad = st.grad();
    let mut lam_prev = lambdas.first().copied().unwrap_or(0.0);
    let mut ratio_prev = 0.0;
    for &lam in lambdas {
        let mut in_set = ever.clone();
        for j in 0..p {
            if grad[j].abs() >= 2.0 * lam - lam_prev {
                in_set[j] = true;
            }
        }
        let mut converged = true;
        loop {
            let set: Vec<usize> = (0..p).filter(|&j| in_set[j]).collect();
            if !st.solve(&set, lam) {
                converged = false;
                break;
            }
            grad = st.grad();
            let mut added = false;
            for j in 0..p {
                if !in_set[j] && grad[j].abs() > lam * (1.0 + 1e-9) {
                    in_set[j] = true;
                    added = true;
                }
            }
            if !added {
                break;
            }
        }
        if !converged {
            out.diverged = true;
            break;
        }
        for j in 0..p {
            if st.beta[j] != 0.0 {
                ever[j] = true;
            }
        }
        out.betas.push(st.beta.clone());
        out.intercepts.push(st.b0);
        lam_prev = lam;
        if null_dev > 0.0 {
            let ratio = 1.0 - st.deviance() / null_dev;
            if ratio > DEV_RATIO_STOP || (out.betas.len() > 1 && ratio - ratio_prev < DEV_GAIN_STOP * ratio) {
                break;
            }
            ratio_prev = ratio;
        }
    }
    out
}

/// Largest KKT violation of a lasso solution on standardised `x`:
/// `|g_j| - lam` for zero coefficients, `|g_j - lam sign(b_j)|` otherwise,
/// with `g_j = x_j'(y - mu) / n`.
pub fn kkt_violation(x: &DMatrix<f64>, y: &[f64], logistic: bool, beta: &[f64], b0: f64, lam: f64) -> f64 {
    let n = x.nrows();
    let eta: Vec<f64> = (0..n).map(|i| b0 + (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum::<f64>()).collect();
    let st = State { x, y, logistic, beta: beta.to_vec(), b0, eta };
    let g = st.grad();
    let mut worst = 0.0f64;
    for j in 0..x.ncols() {
        let v = if beta[j] == 0.0 { (g[j].abs() - lam).max(0.0) } else { (g[j] - lam * beta[j].signum()).abs() };
        worst = worst.max(v);
    }
    worst
}

fn fold_labels(y: &Response, folds: usize, seed: u64) -> Vec<usize> {
    let mut g = rng::stream(seed, "lasso-folds", 0);
    let n = y.len();
    let mut labels = vec![0; n];
    let groups: Vec<Vec<usize>> = match y.kind {
        ResponseKind::Binary => vec![(0..n).filter(|&i| !y.is_case(i)).collect(), (0..n).filter(|&i| y.is_case(i)).collect()],
        ResponseKind::Continuous => vec![(0..n).collect()],
    };
    let mut k = 0;
    for mut grp in groups {
        grp.shuffle(&mut g);
        for i in grp {
            labels[i] = k % folds;
            k += 1;
        }
    }
    labels
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// Lasso over a log-spaced path with K-fold cross-validation; the lambda
/// minimising the mean CV error (binomial deviance or squared error) is
/// chosen.
pub fn lasso_select(x: &DMatrix<f64>, y: &Response, opts: &LassoOptions, seed: u64) -> Result<LassoFit> {
    let (n, p) = x.shape();
    if opts.folds < 3 || n < opts.folds {
        return Err(Error::InvalidArgument(format!("lasso needs 3 <= folds <= n (folds {}, n {n})", opts.folds)));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: format!("{n} responses"), found: y.len().to_string() });
    }
    let logistic = y.kind == ResponseKind::Binary;
    let s = standardize_unit(x);
    let lambdas = lambda_path(lambda_max(&s.x, &y.values), opts);
    let full = solve_path(&s.x, &y.values, logistic, &lambdas);
    if full.betas.is_empty() {
        return Err(Error::NonConvergence { what: "lasso", iterations: MAX_OUTER });
    }
    let labels = fold_labels(y, opts.folds, seed);
    let per_fold: Vec<Vec<f64>> = (0..opts.folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..n).filter(|&i| labels[i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| labels[i] == f).collect();
            let ytr: Vec<f64> = train.iter().map(|&i| y.values[i]).collect();
            let st = standardize_unit(&rows(x, &train));
            let path = solve_path(&st.x, &ytr, logistic, &lambdas[..full.betas.len()]);
            path.betas
                .iter()
                .zip(&path.intercepts)
                .map(|(b, &b0)| {
                    // back to the raw scale of x
                    let mut icpt = b0;
                    let raw: Vec<f64> = (0..p)
                        .map(|j| {
                            if st.scales[j] > 0.0 {
                                let c = b[j] / st.scales[j];
                                icpt -= c * st.means[j];
                                c
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    test.iter()
                        .map(|&i| {
                            let e = icpt + (0..p).filter(|&j| raw[j] != 0.0).map(|j| x[(i, j)] * raw[j]).sum::<f64>();
                            let yi = y.values[i];
                            if logistic {
                                let mu = sigmoid(e).clamp(1e-5, 1.0 - 1e-5);
                                -2.0 * (yi * mu.ln() + (1.0 - yi) * (1.0 - mu).ln())
                            } else {
                                (yi - e) * (yi - e)
                            }
                        })
                        .sum::<f64>()
                        / test.len() as f64
                })
                .collect()
        })
        .collect();
    let usable = per_fold.iter().map(Vec::len).min().unwrap_or(0).min(full.betas.len());
    if usable == 0 {
        return Err(Error::NonConvergence { what: "lasso cross-validation", iterations: MAX_OUTER });
    }
    let k = per_fold.len() as f64;
    let mut cv_mean = Vec::with_capacity(usable);
    let mut cv_sd = Vec::with_capacity(usable);
    for l in 0..usable {
        let m = per_fold.iter().map(|e| e[l]).sum::<f64>() / k;
        let v = per_fold.iter().map(|e| (e[l] - m) * (e[l] - m)).sum::<f64>() / (k - 1.0);
        cv_mean.push(m);
        cv_sd.push((v / k).sqrt());
    }
    let chosen_index = (0..usable).fold(0, |b, l| if cv_mean[l] < cv_mean[b] { l } else { b });
    let mut coefficients = full.betas;
    coefficients.truncate(usable);
    let mut intercepts = full.intercepts;
    intercepts.truncate(usable);
    Ok(LassoFit {
        lambda_path: lambdas[..usable].to_vec(),
        coefficients,
        intercepts,
        cv_mean,
        cv_sd,
        chosen_index,
        chosen_lambda: lambdas[chosen_index],
        diverged: full.diverged,
    })
}
