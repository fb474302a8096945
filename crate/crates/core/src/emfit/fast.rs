//! Two-component fit by matching the first five raw moments.

use nalgebra::{SMatrix, SVector};

use super::{em_fit, flags, EmConfig, FitReport, Stepper};
use crate::distribution::DistributionSpec;
use crate::error::{Error, Result};
use crate::mixture::{gaussian_raw_moments, Component, GaussianMixture};

type Vec5 = SVector<f64, 5>;
type Mat5 = SMatrix<f64, 5, 5>;

/// Standardized moments this close to Gaussian values count as Gaussian.
const GAUSSIAN_TOL: f64 = 1e-7;
/// Residual norm (standardized units) accepted as an exact match.
const MATCH_TOL: f64 = 1e-11;

/// Unconstrained parameters (logit w, μ₁, ln v₁, μ₂, ln v₂).
#[derive(Clone, Copy)]
struct Params(Vec5);

impl Params {
    fn unpack(&self) -> (f64, f64, f64, f64, f64) {
        let x = &self.0;
        (1.0 / (1.0 + (-x[0]).exp()), x[1], x[2].exp(), x[3], x[4].exp())
    }
}

/// Residuals of raw moments 1..=5 and their Jacobian.
fn residuals(p: &Params, target: &[f64; 5]) -> (Vec5, Mat5) {
    let (w, m1, v1, m2, v2) = p.unpack();
    let a = gaussian_raw_moments(m1, v1, 5);
    let b = gaussian_raw_moments(m2, v2, 5);
    let mut r = Vec5::zeros();
    let mut j = Mat5::zeros();
    for k in 1..=5 {
        let kf = k as f64;
        let row = k - 1;
        r[row] = w * a[k] + (1.0 - w) * b[k] - target[row];
        j[(row, 0)] = w * (1.0 - w) * (a[k] - b[k]);
        j[(row, 1)] = w * kf * a[k - 1];
        j[(row, 3)] = (1.0 - w) * kf * b[k - 1];
        if k >= 2 {
            let c = 0.5 * kf * (kf - 1.0);
            j[(row, 2)] = w * v1 * c * a[k - 2];
            j[(row, 4)] = (1.0 - w) * v2 * c * b[k - 2];
        }
    }
    (r, j)
}

/// Levenberg–Marquardt from one start; returns parameters and residual norm.
fn solve(start: Params, target: &[f64; 5]) -> Option<(Params, f64)> {
    let mut p = start;
    let (mut r, mut j) = residuals(&p, target);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for _ in 0..500 {
        if cost.sqrt() < MATCH_TOL {
            break;
        }
        let jt = j.transpose();
        let jtj = jt * j;
        let g = jt * r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for d in 0..5 {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = Params(p.0 + step);
            if trial.0.iter().any(|v| !v.is_finite()) || trial.0[2].abs() > 50.0 || trial.0[4].abs() > 50.0 {
                lambda *= 10.0;
                continue;
            }
            let (tr, tj) = residuals(&trial, target);
            let tc = tr.norm_squared();
            if tc.is_finite() && tc < cost {
                p = trial;
                r = tr;
                j = tj;
                cost = tc;
                lambda = (lambda * 0.3).max(1e-15);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Some((p, cost.sqrt()))
}

/// Starting points with zero mean and unit variance: weight w, separation d.
fn starts() -> Vec<Params> {
    let mut out = Vec::new();
    for &w in &[0.2f64, 0.5, 0.8] {
        for &d in &[0.3f64, 0.6, 0.9] {
            for &sign in &[1.0f64, -1.0] {
                let m1 = -sign * d * ((1.0 - w) / w).sqrt();
                let m2 = sign * d * (w / (1.0 - w)).sqrt();
                let v = (1.0 - d * d).max(0.05);
                out.push(Params(Vec5::new((w / (1.0 - w)).ln(), m1, v.ln(), m2, v.ln())));
            }
        }
    }
    out
}

/// Two-component mixture matching the first five moments of `spec`.
///
/// A Gaussian input yields two identical halves. When no real solution
/// exists the fit falls back to EM with two components.
pub fn fast_fit_two(spec: &DistributionSpec, cfg: &EmConfig) -> Result<FitReport> {
    cfg.validate()?;
    let moments = spec.moments(5, &cfg.quadrature)?;
    let mean = moments.raw[0];
    let var = moments.central[1];
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::Unsupported("fitting needs a finite positive variance".into()));
    }
    let sd = var.sqrt();
    // Standardized raw moments z₁..z₅ (z₁ = 0, z₂ = 1).
    let mut z = [0.0; 5];
    for r in 1..=5 {
        z[r - 1] = moments.central[r - 1] / sd.powi(r as i32);
    }
    z[0] = 0.0;
    z[1] = 1.0;
    let z6 = spec
        .moments(6, &cfg.quadrature)
        .ok()
        .map(|m| m.central[5] / sd.powi(6));
    let floor = cfg.var_floor_rel * var;

    let gaussian = z[2].abs() < GAUSSIAN_TOL && (z[3] - 3.0).abs() < GAUSSIAN_TOL && z[4].abs() < GAUSSIAN_TOL;
    let (standardized, flag) = if gaussian {
        (Some((0.5, 0.0, 1.0, 0.0, 1.0)), flags::FAST_FIT_DEGENERATE)
    } else {
        let mut best: Option<((f64, f64, f64, f64, f64), f64)> = None;
        for start in starts() {
            let Some((p, norm)) = solve(start, &z) else { continue };
            if norm > MATCH_TOL * 10.0 {
                continue;
            }
            let sol = p.unpack();
            let (w, m1, v1, m2, v2) = sol;
            if !(w > 1e-9 && w < 1.0 - 1e-9 && v1 * var >= floor && v2 * var >= floor) {
                continue;
            }
            // Among exact matches prefer the one closest in the sixth moment.
            let score = match z6 {
                Some(t) => {
                    let a = gaussian_raw_moments(m1, v1, 6)[6];
                    let b = gaussian_raw_moments(m2, v2, 6)[6];
                    (w * a + (1.0 - w) * b - t).abs()
                }
                None => norm,
            };
            if best.as_ref().is_none_or(|(_, s)| score < *s) {
                best = Some((sol, score));
            }
        }
        (best.map(|(s, _)| s), flags::FAST_FIT)
    };

    let Some((w, m1, v1, m2, v2)) = standardized else {
        let mut report = em_fit(spec, 2, cfg)?;
        report.flags.insert(0, flags::FAST_FIT_FALLBACK.into());
        return Ok(report);
    };
    let comps = vec![
        Component::new(w, mean + sd * m1, var * v1),
        Component::new(1.0 - w, mean + sd * m2, var * v2),
    ];
    let mixture = GaussianMixture::with_var_floor(comps, floor)?;
    let outcome = Stepper::new(spec, floor, &cfg.quadrature).step(&mixture)?;
    let relative_entropy = match spec.has_atoms() {
        true => None,
        false => spec.entropy(&cfg.quadrature).ok().map(|h| outcome.d0 - h),
    };
    Ok(FitReport {
        mixture,
        d0_trace: vec![outcome.d0],
        relative_entropy,
        iterations: 0,
        converged: true,
        fixed_point_residual: outcome.residual,
        flags: vec![flag.to_string()],
    })
}
