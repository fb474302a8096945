//! Generalized EM: fits a Gaussian mixture of fixed size to a distribution
//! by minimizing the cross term D₀(X, Y(θ)) = −E[ln f_Y(X | θ)].
//!
//! Every expectation is taken over the input distribution, so an empirical
//! input reduces to ordinary sample EM.

mod fast;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use fast::fast_fit_two;

use crate::distribution::{DistributionSpec, IntegrationPlan};
use crate::error::{Error, Result};
use crate::mixture::{Component, GaussianMixture};
use crate::quadrature::QuadratureConfig;
use crate::special::{log_sum_exp, normal_ln_pdf};

/// Weight below which a component is considered dead.
pub const DEATH_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitStrategy {
    /// Means at the (i − ½)/m quantiles, equal weights, variance Var(X)/m².
    #[default]
    Quantile,
    /// Quantile placement with seeded jitter of the means.
    Random { seed: u64 },
    /// A caller-supplied starting mixture.
    User { mixture: GaussianMixture },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once D₀ decreases by less than this per iteration...
    pub convergence_tol: f64,
    /// ...and the fixed-point residual is at most this.
    pub fixed_point_tol: f64,
    pub init_strategy: InitStrategy,
    /// Variance floor as a fraction of Var(X).
    pub var_floor_rel: f64,
    pub aitken: bool,
    pub aitken_window: usize,
    pub quadrature: QuadratureConfig,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iterations: 500,
            convergence_tol: 1e-9,
            fixed_point_tol: 1e-7,
            init_strategy: InitStrategy::Quantile,
            var_floor_rel: 1e-6,
            aitken: true,
            aitken_window: 3,
            quadrature: QuadratureConfig::default(),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::validation("max_iterations must be at least 1"));
        }
        if !(self.convergence_tol > 0.0 && self.fixed_point_tol > 0.0) {
            return Err(Error::validation("EM tolerances must be positive"));
        }
        if !(self.var_floor_rel > 0.0 && self.var_floor_rel < 1.0) {
            return Err(Error::validation("var_floor_rel must lie in (0, 1)"));
        }
        if self.aitken_window != 3 {
            return Err(Error::validation("Aitken extrapolation uses a window of 3 iterates"));
        }
        self.quadrature.validate()
    }
}

/// Result of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub mixture: GaussianMixture,
    /// D₀ at every accepted iterate, starting with the initial mixture.
    pub d0_trace: Vec<f64>,
    /// D(X, Y) when H(X) exists.
    pub relative_entropy: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub fixed_point_residual: f64,
    pub flags: Vec<String>,
}

impl FitReport {
    /// Final cross term D₀.
    pub fn d0(&self) -> f64 {
        *self.d0_trace.last().expect("trace holds the initial D₀")
    }
}

pub mod flags {
    pub const VARIANCE_CLAMPED: &str = "variance_clamped";
    pub const INIT_FALLBACK: &str = "init_fallback";
    pub const RESTARTED: &str = "restarted_after_component_death";
    pub const COMPONENT_DEATH: &str = "component_death";
    pub const MAX_ITERATIONS: &str = "max_iterations_reached";
    pub const AITKEN_ACCEPTED: &str = "aitken_accepted";
    pub const FAST_FIT: &str = "fast_fit";
    pub const FAST_FIT_DEGENERATE: &str = "fast_fit_degenerate";
    pub const FAST_FIT_FALLBACK: &str = "fast_fit_fallback";
}

/// Starting mixture for `m` components.
pub fn init_mixture(spec: &DistributionSpec, m: usize, strategy: &InitStrategy, cfg: &EmConfig) -> Result<GaussianMixture> {
    let (mean, var) = spec.mean_variance(&cfg.quadrature)?;
    Ok(initialize(spec, m, strategy, mean, var, cfg)?.0)
}

/// Mixture plus whether the quantile placement had to fall back to a grid.
fn initialize(
    spec: &DistributionSpec,
    m: usize,
    strategy: &InitStrategy,
    mean: f64,
    var: f64,
    cfg: &EmConfig,
) -> Result<(GaussianMixture, bool)> {
    if m == 0 {
        return Err(Error::validation("mixture size must be at least 1"));
    }
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::Unsupported("fitting needs a finite positive variance".into()));
    }
    let floor = cfg.var_floor_rel * var;
    if let InitStrategy::User { mixture } = strategy {
        if mixture.len() != m {
            return Err(Error::validation(format!(
                "initial mixture has {} components, expected {m}",
                mixture.len()
            )));
        }
        if mixture.components().iter().any(|c| c.var < floor) {
            return Err(Error::validation("initial variances must be at least the variance floor"));
        }
        return Ok((GaussianMixture::with_var_floor(mixture.components().to_vec(), floor)?, false));
    }
    let sd = var.sqrt();
    let quantiles: Result<Vec<f64>> = (0..m)
        .map(|i| spec.quantile((i as f64 + 0.5) / m as f64))
        .collect();
    let (mut means, fallback) = match quantiles {
        Ok(q) if q.iter().all(|v| v.is_finite()) => (q, false),
        _ => {
            let grid = (0..m).map(|i| mean + sd * (2.0 * (i as f64 + 0.5) / m as f64 - 1.0)).collect();
            (grid, true)
        }
    };
    if let InitStrategy::Random { seed } = strategy {
        let mut rng = ChaCha8Rng::seed_from_u64(*seed);
        for mu in &mut means {
            *mu += sd / m as f64 * rng.random_range(-0.5..0.5);
        }
    }
    let v0 = (var / (m * m) as f64).max(floor);
    let comps = means.into_iter().map(|mu| Component::new(1.0 / m as f64, mu, v0)).collect();
    Ok((GaussianMixture::with_var_floor(comps, floor)?, fallback))
}

/// One EM update together with diagnostics about its starting point.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub mixture: GaussianMixture,
    /// D₀ at the mixture the step started from.
    pub d0: f64,
    /// Largest relative change of any parameter: the starting point's
    /// violation of the fixed-point equations.
    pub residual: f64,
    pub clamped: bool,
}

/// Shared state for repeated steps against one input distribution.
struct Stepper<'a> {
    spec: &'a DistributionSpec,
    plan: IntegrationPlan,
    floor: f64,
    cfg: &'a QuadratureConfig,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a DistributionSpec, floor: f64, cfg: &'a QuadratureConfig) -> Self {
        Stepper {
            spec,
            plan: spec.integration_plan(cfg),
            floor,
            cfg,
        }
    }

    fn step(&self, gm: &GaussianMixture) -> Result<StepOutcome> {
        let comps = gm.components();
        let m = comps.len();
        let ln_p: Vec<f64> = comps.iter().map(|c| c.p.ln()).collect();
        let mut ln_terms = vec![0.0; m];
        // out = [E rᵢ | E rᵢ(X − μᵢ) | E rᵢ(X − μᵢ)² | −E ln f_Y]
        let mut accumulate = |x: f64, w: f64, out: &mut [f64]| {
            for (i, c) in comps.iter().enumerate() {
                ln_terms[i] = ln_p[i] + normal_ln_pdf(x, c.mu, c.var);
            }
            let ln_f = log_sum_exp(&ln_terms);
            for (i, c) in comps.iter().enumerate() {
                let r = w * (ln_terms[i] - ln_f).exp();
                let d = x - c.mu;
                out[i] = r;
                out[m + i] = r * d;
                out[2 * m + i] = r * d * d;
            }
            out[3 * m] = -w * ln_f;
        };
        let mut sums = self.spec.integrate_continuous(
            &self.plan,
            3 * m + 1,
            |pt, out| {
                accumulate(pt.x, pt.weight, out);
                Ok(())
            },
            self.cfg,
        )?;
        let mut buf = vec![0.0; 3 * m + 1];
        for a in self.spec.all_atoms() {
            accumulate(a.x, a.mass, &mut buf);
            sums.iter_mut().zip(&buf).for_each(|(s, b)| *s += b);
        }
        let d0 = sums[3 * m];
        if !d0.is_finite() {
            return Err(Error::Divergence("cross term is infinite at the current mixture".into()));
        }
        let mut next = Vec::with_capacity(m);
        let mut residual: f64 = 0.0;
        let mut clamped = false;
        for (i, c) in comps.iter().enumerate() {
            let s0 = sums[i];
            if !(s0 >= DEATH_THRESHOLD) {
                return Err(Error::ComponentDeath { index: i, weight: s0 });
            }
            let shift = sums[m + i] / s0;
            let mut var = sums[2 * m + i] / s0 - shift * shift;
            if var < self.floor {
                var = self.floor;
                clamped = true;
            }
            let mu = c.mu + shift;
            residual = residual
                .max((s0 - c.p).abs() / c.p)
                .max(shift.abs() / c.var.sqrt())
                .max((var - c.var).abs() / c.var);
            next.push(Component::new(s0, mu, var));
        }
        let total: f64 = next.iter().map(|c| c.p).sum();
        next.iter_mut().for_each(|c| c.p /= total);
        Ok(StepOutcome {
            mixture: GaussianMixture::with_var_floor(next, self.floor)?,
            d0,
            residual,
            clamped,
        })
    }
}

/// One EM update of `gm` against `spec`: responsibilities from the current
/// parameters, then weights, means and (about the new means) variances.
pub fn em_step(spec: &DistributionSpec, gm: &GaussianMixture, cfg: &EmConfig) -> Result<GaussianMixture> {
    Ok(em_step_detailed(spec, gm, cfg)?.mixture)
}

pub fn em_step_detailed(spec: &DistributionSpec, gm: &GaussianMixture, cfg: &EmConfig) -> Result<StepOutcome> {
    cfg.validate()?;
    let (_, var) = spec.mean_variance(&cfg.quadrature)?;
    Stepper::new(spec, cfg.var_floor_rel * var, &cfg.quadrature).step(gm)
}

/// Componentwise Aitken Δ² on (weights, means, variances).
fn aitken_extrapolate(h: &[GaussianMixture; 3], floor: f64) -> Option<GaussianMixture> {
    let delta2 = |x0: f64, x1: f64, x2: f64| {
        let denom = x2 - 2.0 * x1 + x0;
        let num = (x2 - x1) * (x2 - x1);
        if denom.abs() <= 1e-300 || !(num / denom).is_finite() {
            x2
        } else {
            x2 - num / denom
        }
    };
    let [t0, t1, t2] = [flatten(&h[0]), flatten(&h[1]), flatten(&h[2])];
    let ext: Vec<f64> = (0..t0.len()).map(|k| delta2(t0[k], t1[k], t2[k])).collect();
    unflatten(&ext, floor)
}

/// Flattened (p, μ, σ²) per component.
fn flatten(gm: &GaussianMixture) -> Vec<f64> {
    gm.components().iter().flat_map(|c| [c.p, c.mu, c.var]).collect()
}

fn unflatten(v: &[f64], floor: f64) -> Option<GaussianMixture> {
    let comps: Vec<Component> = v.chunks(3).map(|c| Component::new(c[0], c[1], c[2])).collect();
    if comps.iter().any(|c| !(c.p > DEATH_THRESHOLD && c.p < 1.0 && c.var >= floor && c.mu.is_finite())) {
        return None;
    }
    let total: f64 = comps.iter().map(|c| c.p).sum();
    let comps = comps.into_iter().map(|c| Component::new(c.p / total, c.mu, c.var)).collect();
    GaussianMixture::with_var_floor(comps, floor).ok()
}

/// Vector Aitken step along the dominant direction of the window:
/// θ₀ − 2αr + α²v with r = θ₁ − θ₀, v = θ₂ − 2θ₁ + θ₀, α = −|r|/|v|.
/// `alpha_scale` in (0, 1] shrinks the step toward θ₂ (α = −1).
fn squared_extrapolate(h: &[GaussianMixture; 3], alpha_scale: f64, floor: f64) -> Option<GaussianMixture> {
    let [t0, t1, t2] = [flatten(&h[0]), flatten(&h[1]), flatten(&h[2])];
    // Means and variances are compared on the scale of the latest iterate.
    let scale: Vec<f64> = t2
        .chunks(3)
        .flat_map(|c| [1.0, c[2].sqrt(), c[2]])
        .collect();
    let (mut rr, mut vv) = (0.0, 0.0);
    for k in 0..t0.len() {
        let r = (t1[k] - t0[k]) / scale[k];
        let v = (t2[k] - 2.0 * t1[k] + t0[k]) / scale[k];
        rr += r * r;
        vv += v * v;
    }
    if !(vv > 0.0) {
        return None;
    }
    let alpha = -1.0 - alpha_scale * ((rr / vv).sqrt() - 1.0);
    if !(alpha < -1.0) {
        return None;
    }
    let ext: Vec<f64> = (0..t0.len())
        .map(|k| {
            let r = t1[k] - t0[k];
            let v = t2[k] - 2.0 * t1[k] + t0[k];
            t0[k] - 2.0 * alpha * r + alpha * alpha * v
        })
        .collect();
    unflatten(&ext, floor)
}

/// Fits an `m`-component mixture by iterating EM from the configured start.
///
/// A component death triggers one restart from a seeded random start; a
/// second death returns the last iterate with `converged = false`.
pub fn em_fit(spec: &DistributionSpec, m: usize, cfg: &EmConfig) -> Result<FitReport> {
    cfg.validate()?;
    let (mean, var) = spec.mean_variance(&cfg.quadrature)?;
    let (init, fallback) = initialize(spec, m, &cfg.init_strategy, mean, var, cfg)?;
    let stepper = Stepper::new(spec, cfg.var_floor_rel * var, &cfg.quadrature);
    let mut report = match run_em(&stepper, init, cfg) {
        Ok(r) => r,
        Err(RunError::Other(e)) => return Err(e),
        Err(RunError::Death { index, weight, .. }) => {
            let seed = match cfg.init_strategy {
                InitStrategy::Random { seed } => seed.wrapping_add(1),
                _ => 0x9e37_79b9_7f4a_7c15 ^ m as u64,
            };
            let (restart, _) = initialize(spec, m, &InitStrategy::Random { seed }, mean, var, cfg)?;
            let note = format!("{}: component {index} (weight {weight:e})", flags::RESTARTED);
            match run_em(&stepper, restart, cfg) {
                Ok(mut r) => {
                    r.flags.insert(0, note);
                    r
                }
                Err(RunError::Other(e)) => return Err(e),
                Err(RunError::Death { index, weight, last }) => {
                    let mut r = last;
                    if r.d0_trace.is_empty() {
                        r.d0_trace.push(crate::distribution::cross_term(spec, &r.mixture.to_spec(), &cfg.quadrature)?);
                    }
                    r.flags.insert(0, note);
                    r.flags.push(format!("{}: component {index} (weight {weight:e})", flags::COMPONENT_DEATH));
                    r
                }
            }
        }
    };
    if fallback {
        report.flags.insert(0, flags::INIT_FALLBACK.into());
    }
    report.relative_entropy = match spec.has_atoms() {
        true => None,
        false => spec.entropy(&cfg.quadrature).ok().map(|h| report.d0() - h),
    };
    Ok(report)
}

/// Why a run stopped early: a component death (with the report up to the
/// last good iterate) or any other failure.
enum RunError {
    Death { index: usize, weight: f64, last: FitReport },
    Other(Error),
}

impl RunError {
    fn new(e: Error, theta: &GaussianMixture, trace: &[f64], iterations: usize) -> Self {
        match e {
            Error::ComponentDeath { index, weight } => RunError::Death {
                index,
                weight,
                last: FitReport {
                    mixture: theta.clone(),
                    d0_trace: trace.to_vec(),
                    relative_entropy: None,
                    iterations,
                    converged: false,
                    fixed_point_residual: f64::NAN,
                    flags: Vec::new(),
                },
            },
            other => RunError::Other(other),
        }
    }
}

fn run_em(stepper: &Stepper, init: GaussianMixture, cfg: &EmConfig) -> std::result::Result<FitReport, RunError> {
    let mut theta = init;
    let mut current = stepper.step(&theta).map_err(|e| RunError::new(e, &theta, &[], 0))?;
    let mut trace = vec![current.d0];
    let mut clamped = current.clamped;
    let mut aitken_hits = 0usize;
    let mut window: Vec<GaussianMixture> = vec![theta.clone()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut next_theta = current.mixture.clone();
        let mut next = stepper.step(&next_theta).map_err(|e| RunError::new(e, &theta, &trace, iterations))?;
        window.push(next_theta.clone());
        if cfg.aitken && window.len() == 3 {
            let h = [window[0].clone(), window[1].clone(), window[2].clone()];
            // Componentwise first, then the vector form with step halving.
            let candidates = std::iter::once(aitken_extrapolate(&h, stepper.floor))
                .chain([1.0, 0.5, 0.25].map(|s| squared_extrapolate(&h, s, stepper.floor)));
            for ext in candidates.flatten() {
                if let Ok(at_ext) = stepper.step(&ext) {
                    if at_ext.d0 <= next.d0 {
                        next_theta = ext;
                        next = at_ext;
                        aitken_hits += 1;
                        break;
                    }
                }
            }
            window.clear();
            window.push(next_theta.clone());
        }
        clamped |= next.clamped;
        let decrease = trace[trace.len() - 1] - next.d0;
        trace.push(next.d0);
        theta = next_theta;
        current = next;
        if decrease < cfg.convergence_tol && current.residual <= cfg.fixed_point_tol {
            converged = true;
            break;
        }
    }
    let mut report_flags = Vec::new();
    if clamped {
        report_flags.push(flags::VARIANCE_CLAMPED.to_string());
    }
    if aitken_hits > 0 {
        report_flags.push(format!("{}: {aitken_hits}", flags::AITKEN_ACCEPTED));
    }
    if !converged {
        report_flags.push(flags::MAX_ITERATIONS.to_string());
    }
    Ok(FitReport {
        mixture: theta,
        d0_trace: trace,
        relative_entropy: None,
        iterations,
        converged,
        fixed_point_residual: current.residual,
        flags: report_flags,
    })
}

#[cfg(test)]
mod tests;
