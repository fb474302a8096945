//! Scalar helpers for Gaussian densities and log-space arithmetic.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{PI, SQRT_2};

/// ln(2π)
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Standard normal density.
#[inline]
pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, accurate in both tails.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Standard normal quantile for `q` in (0, 1).
pub fn std_normal_quantile(q: f64) -> f64 {
    let z = -SQRT_2 * erfc_inv(2.0 * q);
    if !z.is_finite() {
        return z;
    }
    // One Newton step polishes the inverse-erfc approximation.
    let residual = if q < 0.5 {
        std_normal_cdf(z) - q
    } else {
        (1.0 - q) - std_normal_cdf(-z)
    };
    z - residual / std_normal_pdf(z)
}

/// Log-density of N(mean, var) at `x`; `var` must be positive.
#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

#[inline]
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    normal_ln_pdf(x, mean, var).exp()
}

#[inline]
pub fn normal_cdf(x: f64, mean: f64, var: f64) -> f64 {
    std_normal_cdf((x - mean) / var.sqrt())
}

/// ln Σ exp(vᵢ), stable for large magnitudes. Returns −∞ for an empty or all −∞ input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Relative-entropy between two Gaussians, D(N(m1, v1) ‖ N(m2, v2)).
pub fn gaussian_kl(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    0.5 * ((v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / v2 - 1.0)
}
