//! Small dense linear-algebra helpers on top of `nalgebra`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Column `j` of a column-major matrix as a slice.
#[inline]
pub fn col(m: &DMatrix<f64>, j: usize) -> &[f64] {
    let n = m.nrows();
    &m.as_slice()[j * n..(j + 1) * n]
}

#[inline]
pub fn col_mut(m: &mut DMatrix<f64>, j: usize) -> &mut [f64] {
    let n = m.nrows();
    &mut m.as_mut_slice()[j * n..(j + 1) * n]
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation with the `n-1` denominator.
pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// `A' B` for column-major `A` (n×r) and `B` (n×s) by column dot products;
/// faster than a general product for the thin blocks used here.
pub fn cross(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, s) = (a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(r, s);
    for j in 0..s {
        let bj = col(b, j);
        for i in 0..r {
            out[(i, j)] = dot(col(a, i), bj);
        }
    }
    out
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
pub fn sym_eigen_desc(m: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let dim = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

const LANCZOS_CAP: usize = 10_000;
const KRYLOV_MAX: usize = 40;

/// Leading eigenpair of a symmetric operator given by `matvec`, by Lanczos
/// with full reorthogonalisation and explicit restarts. Stops when the Ritz
/// residual falls below `tol * |theta|`.
pub fn lanczos_top<F>(dim: usize, matvec: F, start: Option<&[f64]>, tol: f64) -> Result<(f64, DVector<f64>)>
where
    F: Fn(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Err(Error::InvalidArgument("eigenproblem of dimension 0".into()));
    }
    let mut v0: Vec<f64> = match start {
        Some(s) if s.iter().any(|x| *x != 0.0) => s.to_vec(),
        _ => (0..dim).map(|i| 1.0 + 0.01 * (i % 7) as f64).collect(),
    };
    normalize(&mut v0);
    if dim == 1 {
        let mut w = [0.0];
        matvec(&v0, &mut w);
        return Ok((w[0] * v0[0], DVector::from_element(1, 1.0)));
    }
    let basis_max = dim.min(KRYLOV_MAX);
    let mut w = vec![0.0; dim];
    // basis vectors stored back to back
    let mut basis: Vec<f64> = Vec::with_capacity(basis_max * dim);
    let mut alpha: Vec<f64> = Vec::with_capacity(basis_max);
    let mut beta: Vec<f64> = Vec::with_capacity(basis_max);
    let mut used = 0usize;
    loop {
        basis.clear();
        alpha.clear();
        beta.clear();
        basis.extend_from_slice(&v0);
        loop {
            let k = alpha.len();
            matvec(&basis[k * dim..(k + 1) * dim], &mut w);
            used += 1;
            let a = dot(&basis[k * dim..(k + 1) * dim], &w);
            alpha.push(a);
            for _ in 0..2 {
                for v in basis.chunks_exact(dim) {
                    let c = dot(v, &w);
                    w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= c * vi);
                }
            }
            let b = dot(&w, &w).sqrt();
            let last = alpha.len() == basis_max;
            let breakdown = b <= 1e-13 * a.abs().max(alpha[0].abs()).max(1e-300);
            if last || breakdown || k % 4 == 3 {
                let (theta, s) = tridiagonal_top(&alpha, &beta);
                let resid = b * s[k].abs();
                if breakdown || resid <= tol * theta.abs().max(1e-300) {
                    return Ok((theta, ritz_vector(&basis, dim, &s)));
                }
                if last {
                    v0 = ritz_vector(&basis, dim, &s).as_slice().to_vec();
                    normalize(&mut v0);
                    break;
                }
            }
            if used >= LANCZOS_CAP {
                return Err(Error::NonConvergence { what: "Lanczos eigen iteration", iterations: used });
            }
            beta.push(b);
            basis.extend(w.iter().map(|x| x / b));
        }
        if used >= LANCZOS_CAP {
            return Err(Error::NonConvergence { what: "Lanczos eigen iteration", iterations: used });
        }
    }
}

fn normalize(v: &mut [f64]) {
    let nrm = dot(v, v).sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
}

/// Largest eigenpair of the symmetric tridiagonal matrix with diagonal
/// `alpha` and off-diagonal `beta`: Sturm bisection for the value, shifted
/// inverse iteration for the vector.
fn tridiagonal_top(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    if k == 1 {
        return (alpha[0], vec![1.0]);
    }
    let off = |i: usize| if i < k - 1 { beta[i].abs() } else { 0.0 };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..k {
        let r = off(i) + if i > 0 { beta[i - 1].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale * 1e-3;
    // number of eigenvalues below x
    let below = |x: f64| -> usize {
        let mut count = 0;
        let mut d = alpha[0] - x;
        for i in 0..k {
            if i > 0 {
                d = alpha[i] - x - beta[i - 1] * beta[i - 1] / d;
            }
            if d.abs() < tiny {
                d = -tiny;
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    lo = lo.max(alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - tiny);
    while hi - lo > 2.0 * f64::EPSILON * scale {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if below(mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    // (shift - T) is positive definite for shift above theta
    let shift = theta + 1e-10 * scale;
    let mut s = vec![1.0; k];
    let mut c = vec![0.0; k];
    let mut dd = vec![0.0; k];
    for _ in 0..3 {
        // Thomas algorithm on (shift I - T) v = s
        dd[0] = shift - alpha[0];
        let mut rhs = s.clone();
        for i in 1..k {
            c[i - 1] = -beta[i - 1] / dd[i - 1];
            dd[i] = shift - alpha[i] - c[i - 1] * (-beta[i - 1]);
            rhs[i] -= c[i - 1] * rhs[i - 1];
        }
        s[k - 1] = rhs[k - 1] / dd[k - 1];
        for i in (0..k - 1).rev() {
            s[i] = (rhs[i] + beta[i] * s[i + 1]) / dd[i];
        }
        let nrm = dot(&s, &s).sqrt();
        s.iter_mut().for_each(|v| *v /= nrm);
    }
    (theta, s)
}

fn ritz_vector(basis: &[f64], dim: usize, s: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(dim);
    for (v, c) in basis.chunks_exact(dim).zip(s) {
        out.iter_mut().zip(v).for_each(|(o, vi)| *o += c * vi);
    }
    out
}

/// Largest eigenvalue of the arrowhead matrix `[[diag(e), m], [m', d]]`.
/// `e` must be sorted in decreasing order.
pub fn arrowhead_top(e: &[f64], m: &[f64], d: f64) -> f64 {
    let norm_m = dot(m, m).sqrt();
    let e0 = e.first().copied().unwrap_or(f64::NEG_INFINITY);
    let mut lo = e0.max(d);
    let mut hi = lo + norm_m;
    if norm_m == 0.0 {
        return lo;
    }
    let f = |x: f64| -> (f64, f64) {
        let mut val = x - d;
        let mut der = 1.0;
        for (ek, mk) in e.iter().zip(m) {
            let g = x - ek;
            val -= mk * mk / g;
            der += mk * mk / (g * g);
        }
        (val, der)
    };
    let mut x = hi;
    for _ in 0..200 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi.abs() {
            break;
        }
        let newton = x - fx / dfx;
        if (newton - x).abs() <= 4.0 * f64::EPSILON * x.abs() {
            return newton.clamp(lo, hi);
        }
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
    }
    0.5 * (lo + hi)
}
