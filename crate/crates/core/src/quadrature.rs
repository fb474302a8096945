//! Adaptive Gauss–Kronrod quadrature for vector-valued integrands.
//!
//! All expectations in the toolkit go through [`integrate`], which refines a
//! set of panels (mandatory breakpoints first) until every component of the
//! integral meets `max(abs_tol, rel_tol·|I|)`. Semi-infinite ranges are
//! handled by [`integrate_tail`], which walks outward in geometrically
//! growing panels until their contribution is negligible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and budget for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Probability mass left outside the core integration range on each side
    /// of an unbounded support before the outward tail walk starts.
    pub tail_mass_cutoff: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            abs_tol: 1e-9,
            rel_tol: 1e-8,
            tail_mass_cutoff: 1e-12,
            max_subdivisions: 1000,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.abs_tol) || !positive(self.rel_tol) {
            return Err(Error::validation("quadrature tolerances must be positive"));
        }
        if !(self.tail_mass_cutoff > 0.0 && self.tail_mass_cutoff < 0.5) {
            return Err(Error::validation("tail_mass_cutoff must lie in (0, 0.5)"));
        }
        if self.max_subdivisions == 0 {
            return Err(Error::validation("max_subdivisions must be at least 1"));
        }
        Ok(())
    }

    /// Tolerance for a component whose current estimate is `value`.
    #[inline]
    pub fn tolerance_for(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Result of a vector quadrature.
#[derive(Debug, Clone)]
pub struct Integral {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub converged: bool,
    pub evaluations: usize,
}

impl Integral {
    fn zeros(dim: usize) -> Self {
        Integral {
            values: vec![0.0; dim],
            errors: vec![0.0; dim],
            converged: true,
            evaluations: 0,
        }
    }

    pub(crate) fn absorb(&mut self, other: &Integral) {
        for k in 0..self.values.len() {
            self.values[k] += other.values[k];
            self.errors[k] += other.errors[k];
        }
        self.converged &= other.converged;
        self.evaluations += other.evaluations;
    }

    /// Turns a non-converged result into [`Error::Quadrature`] (reporting the
    /// worst component).
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            return Ok(self);
        }
        let worst = (0..self.values.len())
            .max_by(|&a, &b| self.errors[a].total_cmp(&self.errors[b]))
            .unwrap_or(0);
        Err(Error::Quadrature {
            estimate: self.values.get(worst).copied().unwrap_or(f64::NAN),
            error_bound: self.errors.get(worst).copied().unwrap_or(f64::NAN),
        })
    }
}

// 7-point Gauss / 15-point Kronrod nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Panel {
    a: f64,
    b: f64,
    values: Vec<f64>,
    errors: Vec<f64>,
    splittable: bool,
}

struct Scratch {
    fx: [Vec<f64>; 15],
}

impl Scratch {
    fn new(dim: usize) -> Self {
        Scratch {
            fx: std::array::from_fn(|_| vec![0.0; dim]),
        }
    }
}

fn eval_point<F>(f: &mut F, x: f64, out: &mut [f64]) -> Result<()>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    out.iter_mut().for_each(|v| *v = 0.0);
    f(x, out)?;
    for v in out.iter() {
        if v.is_nan() {
            return Err(Error::Evaluation {
                location: x,
                message: "integrand is NaN".into(),
            });
        }
        if v.is_infinite() {
            return Err(Error::Divergence(format!("integrand is infinite at x = {x}")));
        }
    }
    Ok(())
}

fn gauss_kronrod<F>(f: &mut F, a: f64, b: f64, dim: usize, scratch: &mut Scratch) -> Result<Panel>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    // fx[0..7] left nodes, fx[7..14] right nodes, fx[14] center.
    for j in 0..7 {
        let dx = half * XGK[j];
        eval_point(f, center - dx, &mut scratch.fx[j])?;
        eval_point(f, center + dx, &mut scratch.fx[7 + j])?;
    }
    eval_point(f, center, &mut scratch.fx[14])?;

    let mut values = vec![0.0; dim];
    let mut errors = vec![0.0; dim];
    for k in 0..dim {
        let fc = scratch.fx[14][k];
        let mut kron = WGK[7] * fc;
        let mut gauss = WG[3] * fc;
        let mut resabs = WGK[7] * fc.abs();
        for j in 0..7 {
            let pair = scratch.fx[j][k] + scratch.fx[7 + j][k];
            kron += WGK[j] * pair;
            resabs += WGK[j] * (scratch.fx[j][k].abs() + scratch.fx[7 + j][k].abs());
            if j % 2 == 1 {
                gauss += WG[j / 2] * pair;
            }
        }
        let mean = 0.5 * kron;
        let mut resasc = WGK[7] * (fc - mean).abs();
        for j in 0..7 {
            resasc += WGK[j] * ((scratch.fx[j][k] - mean).abs() + (scratch.fx[7 + j][k] - mean).abs());
        }
        let kron = kron * half;
        let resabs = resabs * half.abs();
        let resasc = resasc * half.abs();
        let mut err = ((kron - gauss * half).abs()).max(0.0);
        if resasc != 0.0 && err != 0.0 {
            err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
        }
        if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * resabs);
        }
        values[k] = kron;
        errors[k] = err;
    }
    let splittable = (b - a) > 64.0 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    Ok(Panel {
        a,
        b,
        values,
        errors,
        splittable,
    })
}

/// Integrates a `dim`-valued function over `[breaks[0], breaks[last]]`,
/// treating every interior breakpoint as a mandatory panel boundary.
///
/// The integrand writes its values into the provided slice (pre-zeroed).
/// Non-finite integrand values abort with [`Error::Divergence`] (infinite) or
/// [`Error::Evaluation`] (NaN). Running out of subdivisions is reported via
/// `Integral::converged`, not as an error.
pub fn integrate<F>(mut f: F, dim: usize, breaks: &[f64], cfg: &QuadratureConfig) -> Result<Integral>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    integrate_with(&mut f, dim, breaks, cfg, None)
}

fn integrate_with<F>(
    f: &mut F,
    dim: usize,
    breaks: &[f64],
    cfg: &QuadratureConfig,
    reference: Option<&[f64]>,
) -> Result<Integral>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    let mut pts: Vec<f64> = breaks.iter().copied().filter(|x| x.is_finite()).collect();
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 2 {
        return Ok(Integral::zeros(dim));
    }

    let mut scratch = Scratch::new(dim);
    let mut panels = Vec::with_capacity(pts.len() + 16);
    for w in pts.windows(2) {
        panels.push(gauss_kronrod(f, w[0], w[1], dim, &mut scratch)?);
    }
    let mut evaluations = 15 * panels.len();

    let tolerances = |totals: &[f64]| -> Vec<f64> {
        (0..dim)
            .map(|k| {
                let scale = match reference {
                    Some(r) => r[k].abs().max(totals[k].abs()),
                    None => totals[k].abs(),
                };
                cfg.tolerance_for(scale)
            })
            .collect()
    };

    let mut subdivisions = 0;
    loop {
        let mut totals = vec![0.0; dim];
        let mut errs = vec![0.0; dim];
        for p in &panels {
            for k in 0..dim {
                totals[k] += p.values[k];
                errs[k] += p.errors[k];
            }
        }
        let tol = tolerances(&totals);
        let done = (0..dim).all(|k| errs[k] <= tol[k]);
        if done || subdivisions >= cfg.max_subdivisions {
            return Ok(Integral {
                values: totals,
                errors: errs,
                converged: done,
                evaluations,
            });
        }

        let worst = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.splittable)
            .map(|(i, p)| {
                let score = (0..dim)
                    .map(|k| p.errors[k] / tol[k])
                    .fold(0.0, f64::max);
                (i, score)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        let Some((idx, _)) = worst else {
            return Ok(Integral {
                values: totals,
                errors: errs,
                converged: false,
                evaluations,
            });
        };

        let p = panels.swap_remove(idx);
        let mid = 0.5 * (p.a + p.b);
        panels.push(gauss_kronrod(f, p.a, mid, dim, &mut scratch)?);
        panels.push(gauss_kronrod(f, mid, p.b, dim, &mut scratch)?);
        evaluations += 30;
        subdivisions += 1;
    }
}

/// Integrates from `start` towards ±∞ (`direction` > 0 or < 0) in panels of
/// width `width`, `2·width`, `4·width`, … until two consecutive panels
/// contribute less than a tenth of the tolerance implied by `reference`
/// (typically the integral over the core range).
pub fn integrate_tail<F>(
    mut f: F,
    dim: usize,
    start: f64,
    width: f64,
    direction: f64,
    reference: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Integral>
where
    F: FnMut(f64, &mut [f64]) -> Result<()>,
{
    const MAX_PANELS: usize = 64;
    let sign = if direction >= 0.0 { 1.0 } else { -1.0 };
    let mut width = if width.is_finite() && width > 0.0 { width } else { 1.0 };
    let mut total = Integral::zeros(dim);
    let mut lo = start;
    let mut quiet = 0;
    for _ in 0..MAX_PANELS {
        let hi = lo + sign * width;
        if !hi.is_finite() {
            break;
        }
        let (a, b) = if sign > 0.0 { (lo, hi) } else { (hi, lo) };
        let mut inner_cfg = *cfg;
        inner_cfg.max_subdivisions = cfg.max_subdivisions.min(200);
        let mut combined = reference.to_vec();
        for k in 0..dim {
            combined[k] += total.values[k];
        }
        let piece = integrate_with(&mut f, dim, &[a, b], &inner_cfg, Some(&combined))?;
        let negligible = (0..dim).all(|k| {
            let tol = cfg.tolerance_for(combined[k].abs().max(piece.values[k].abs()));
            piece.values[k].abs() <= 0.1 * tol
        });
        total.absorb(&piece);
        if negligible {
            quiet += 1;
            if quiet >= 2 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        width *= 2.0;
    }
    total.converged = false;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(g: impl Fn(f64) -> f64) -> impl FnMut(f64, &mut [f64]) -> Result<()> {
        move |x, out| {
            out[0] = g(x);
            Ok(())
        }
    }

    #[test]
    fn polynomial_is_exact() {
        let cfg = QuadratureConfig::default();
        let r = integrate(scalar(|x| x * x), 1, &[0.0, 1.0], &cfg).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.values[0], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn log_endpoint_singularity() {
        let cfg = QuadratureConfig::default();
        let r = integrate(scalar(f64::ln), 1, &[0.0, 1.0], &cfg).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.values[0], -1.0, epsilon = 1e-9);
    }

    #[test]
    fn vector_components_share_panels() {
        let cfg = QuadratureConfig::default();
        let r = integrate(
            |x: f64, out: &mut [f64]| {
                out[0] = x.sin();
                out[1] = x.cos();
                out[2] = (-x).exp();
                Ok(())
            },
            3,
            &[0.0, 1.0, std::f64::consts::PI],
            &cfg,
        )
        .unwrap();
        assert_abs_diff_eq!(r.values[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.values[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.values[2], 1.0 - (-std::f64::consts::PI).exp(), epsilon = 1e-12);
    }

    #[test]
    fn kink_at_breakpoint() {
        let cfg = QuadratureConfig::default();
        let r = integrate(scalar(|x: f64| x.abs()), 1, &[-1.0, 0.0, 2.0], &cfg).unwrap();
        assert_abs_diff_eq!(r.values[0], 2.5, epsilon = 1e-14);
    }

    #[test]
    fn non_integrable_singularity_does_not_converge() {
        let cfg = QuadratureConfig::default();
        let r = integrate(scalar(|x: f64| 1.0 / x), 1, &[0.0, 1.0], &cfg).unwrap();
        assert!(!r.converged);
        assert!(matches!(r.require_converged(), Err(Error::Quadrature { .. })));
    }

    #[test]
    fn infinite_integrand_is_divergence() {
        let cfg = QuadratureConfig::default();
        let err = integrate(scalar(|_| f64::INFINITY), 1, &[0.0, 1.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
    }

    #[test]
    fn tail_walk_sums_exponential_tail() {
        let cfg = QuadratureConfig::default();
        let core = integrate(scalar(|x: f64| (-x).exp()), 1, &[0.0, 5.0], &cfg).unwrap();
        let tail = integrate_tail(scalar(|x: f64| (-x).exp()), 1, 5.0, 5.0, 1.0, &core.values, &cfg).unwrap();
        assert!(tail.converged);
        assert_abs_diff_eq!(core.values[0] + tail.values[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tail_walk_flags_divergence() {
        let cfg = QuadratureConfig::default();
        let tail = integrate_tail(scalar(|x: f64| 1.0 / x), 1, 1.0, 1.0, 1.0, &[1.0], &cfg).unwrap();
        assert!(!tail.converged);
    }

    #[test]
    fn config_validation() {
        assert!(QuadratureConfig::default().validate().is_ok());
        let bad = QuadratureConfig {
            abs_tol: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
