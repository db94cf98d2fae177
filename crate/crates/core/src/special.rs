//! Normal and Student-t distribution functions used by the tests.
//! The incomplete beta continued fraction and the error function come from
//! `statrs`; this module fixes the tail conventions.

use statrs::function::{beta::beta_reg, erf};
use std::f64::consts::SQRT_2;

/// Smallest p-value ever reported.
pub const P_FLOOR: f64 = 1e-300;

pub fn clamp_p(p: f64) -> f64 {
    if p.is_nan() {
        1.0
    } else {
        p.clamp(P_FLOOR, 1.0)
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / SQRT_2)
}

/// Upper tail `P(Z > x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erf::erfc(x / SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -SQRT_2 * erf::erfc_inv(2.0 * p)
    }
}

/// `P(|T| > |t|)` for a Student t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    beta_reg(0.5 * df, 0.5, x)
}

/// `P(T <= t)`.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let tail = 0.5 * student_t_two_sided(t, df);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Closed-form CDF of the t distribution for integer degrees of freedom
    /// (finite trigonometric series), used as an independent oracle.
    fn t_cdf_series(t: f64, df: u32) -> f64 {
        let theta = (t / (df as f64).sqrt()).atan();
        let (s, c) = theta.sin_cos();
        let a = if df % 2 == 1 {
            let mut sum = 0.0;
            if df > 1 {
                let mut term = c;
                sum = term;
                let mut k = 3;
                while k <= df - 2 {
                    term *= c * c * (k - 1) as f64 / k as f64;
                    sum += term;
                    k += 2;
                }
            }
            2.0 / std::f64::consts::PI * (theta + s * sum)
        } else {
            let mut term = 1.0;
            let mut sum = 1.0;
            let mut k = 2;
            while k <= df - 2 {
                term *= c * c * (k - 1) as f64 / k as f64;
                sum += term;
                k += 2;
            }
            s * sum
        };
        0.5 + 0.5 * a
    }

    #[test]
    fn t_cdf_matches_series_oracle() {
        for &df in &[5u32, 35, 58] {
            for i in -40..=40 {
                let t = i as f64 * 0.2;
                let got = student_t_cdf(t, df as f64);
                let want = t_cdf_series(t, df);
                assert!((got - want).abs() < 1e-12, "df={df} t={t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-4, 0.025, 0.3, 0.5, 0.8, 0.975, 1.0 - 1e-9] {
            let z = normal_quantile(p);
            assert!((normal_cdf(z) - p).abs() < 1e-10 * p, "p={p}: {}", normal_cdf(z));
        }
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
    }

    #[test]
    fn p_values_are_clamped() {
        assert_eq!(clamp_p(0.0), P_FLOOR);
        assert_eq!(clamp_p(1.5), 1.0);
        assert_eq!(clamp_p(f64::NAN), 1.0);
    }
}
