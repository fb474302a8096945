//! Monotone transformation chains and the minimum-relative-entropy
//! power/logarithm search.

mod chain;

use serde::{Deserialize, Serialize};

pub use chain::{RoundingNote, TransformChain, TransformStep, LOG_POWER_THRESHOLD};

use crate::distribution::{Body, DistributionSpec, Transformed};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureConfig;
use crate::special::LN_2PI;

/// Largest probability allowed outside a chain domain or declared bounds.
pub const OUTSIDE_MASS_TOL: f64 = 1e-9;

/// Distribution of t(X) for an increasing chain t.
///
/// Atoms map to atoms at their transformed locations. Continuous mass
/// outside the chain domain must stay below [`OUTSIDE_MASS_TOL`] per side.
pub fn pushforward(spec: &DistributionSpec, chain: &TransformChain) -> Result<DistributionSpec> {
    if chain.is_identity() {
        return Ok(spec.clone());
    }
    if !chain.is_increasing() {
        return Err(Error::validation("transformation chains must be increasing"));
    }
    let (dlo, dhi) = chain.domain();
    let mut atoms = Vec::with_capacity(spec.explicit_atoms().len());
    for a in spec.explicit_atoms() {
        atoms.push(map_atom(a.x, a.mass, chain)?);
    }
    let (base, full_chain) = match spec.body() {
        Body::Transformed(t) => (t.base().clone(), t.chain().compose(chain)),
        body => (DistributionSpec::from_body(body.clone()), chain.clone()),
    };
    let domain = full_chain.domain();
    for a in base.all_atoms() {
        map_atom(a.x, a.mass, &full_chain)?;
    }
    if base.continuous_mass() > 0.0 {
        let (slo, shi) = base.continuous_support();
        if slo < domain.0 {
            let below = base.continuous_cdf(domain.0);
            if below > OUTSIDE_MASS_TOL {
                return Err(Error::domain(
                    format!("mass {below:.3e} lies below the transformation domain ({dlo}, {dhi})"),
                    Some((slo, domain.0)),
                ));
            }
        }
        if shi > domain.1 {
            let above = base.continuous_mass() - base.continuous_cdf(domain.1);
            if above > OUTSIDE_MASS_TOL {
                return Err(Error::domain(
                    format!("mass {above:.3e} lies above the transformation domain ({dlo}, {dhi})"),
                    Some((domain.1, shi)),
                ));
            }
        }
    }
    let body = Body::Transformed(Transformed {
        base: Box::new(base),
        chain: full_chain,
        domain,
    });
    let out = DistributionSpec::from_body(body);
    if atoms.is_empty() {
        Ok(out)
    } else {
        out.with_atoms(atoms)
    }
}

fn map_atom(x: f64, mass: f64, chain: &TransformChain) -> Result<crate::distribution::Atom> {
    match chain.apply(x) {
        Ok(y) if y.is_finite() => Ok(crate::distribution::Atom { x: y, mass }),
        Ok(y) => Err(Error::domain(format!("atom at {x} maps to {y}"), Some(chain.domain()))),
        Err(Error::Domain { message, .. }) => Err(Error::domain(
            format!("atom at {x} (mass {mass}) is outside the transformation domain: {message}"),
            Some(chain.domain()),
        )),
        Err(e) => Err(e),
    }
}

/// Relative entropy between t(X) and its moment-matching Gaussian,
/// ½(1 + ln 2π + ln Var t(X)) − H(t(X)), with H(t(X)) = H(X) + E ln t′(X)
/// evaluated through the base distribution.
pub fn transform_gap(spec: &DistributionSpec, chain: &TransformChain, cfg: &QuadratureConfig) -> Result<f64> {
    cfg.validate()?;
    let y = pushforward(spec, chain)?;
    if let Some(a) = y.all_atoms().first() {
        return Err(Error::Unsupported(format!(
            "transform gap needs an atom-free distribution (atom at x = {})",
            a.x
        )));
    }
    if y.continuous_mass() <= 0.0 {
        return Err(Error::Unsupported("distribution has no continuous part".into()));
    }
    let center = y.continuous_quantile(0.5);
    let plan = y.integration_plan(cfg);
    let v = y.integrate_continuous(
        &plan,
        4,
        |pt, out| {
            let d = pt.x - center;
            out[0] = pt.weight;
            out[1] = pt.weight * d;
            out[2] = pt.weight * d * d;
            out[3] = -pt.weight * pt.ln_density;
            Ok(())
        },
        cfg,
    )?;
    let mass = v[0];
    let mean = v[1] / mass;
    let var = v[2] / mass - mean * mean;
    if !(var > 0.0) {
        return Err(Error::Divergence("transformed variance is not positive".into()));
    }
    Ok(0.5 * (1.0 + LN_2PI + var.ln()) - v[3])
}

/// Settings for the one-dimensional power search and the rounding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerSearchConfig {
    pub bracket: (f64, f64),
    pub tolerance: f64,
    pub rounding_threshold: f64,
    pub candidate_round_targets: Vec<f64>,
}

impl Default for PowerSearchConfig {
    fn default() -> Self {
        PowerSearchConfig {
            bracket: (-2.0, 3.0),
            tolerance: 1e-4,
            rounding_threshold: 0.05,
            candidate_round_targets: vec![0.0, 1.0 / 3.0, 0.5, 1.0, 2.0, 3.0, -1.0],
        }
    }
}

impl PowerSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bracket;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::validation("power bracket needs finite p_lo < p_hi"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::validation("power tolerance must be positive"));
        }
        if !(self.rounding_threshold >= 0.0) {
            return Err(Error::validation("rounding threshold must be nonnegative"));
        }
        Ok(())
    }
}

/// Outcome of [`optimal_power`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSearch {
    pub p_star: f64,
    /// ½ ln Var[t_p(X)] − (p − 1) E[ln X] at `p_star`.
    pub objective: f64,
}

/// The reduced power objective: ½ ln Var[t_p(X)] − (p − 1) E[ln X].
///
/// Relative entropy to the moment-matching Gaussian differs from it by a
/// p-independent constant.
pub struct PowerObjective<'a> {
    spec: &'a DistributionSpec,
    mean_log: f64,
    median: f64,
    cfg: QuadratureConfig,
}

impl<'a> PowerObjective<'a> {
    pub fn new(spec: &'a DistributionSpec, cfg: &QuadratureConfig) -> Result<Self> {
        cfg.validate()?;
        require_positive(spec)?;
        let mean_log = spec.expect(f64::ln, cfg)?;
        if !mean_log.is_finite() {
            return Err(Error::Divergence("E[ln X] is not finite".into()));
        }
        Ok(PowerObjective {
            spec,
            mean_log,
            median: spec.quantile(0.5)?,
            cfg: cfg.clone(),
        })
    }

    pub fn mean_log(&self) -> f64 {
        self.mean_log
    }

    /// Var[t_p(X)], shifted about t_p(median) to limit cancellation.
    pub fn transformed_variance(&self, p: f64) -> Result<f64> {
        let step = TransformStep::BoxCox { p };
        let c = step.apply(self.median)?;
        let v = self.spec.expect_vec(
            2,
            |x, out| {
                let d = step.apply(x)? - c;
                out[0] = d;
                out[1] = d * d;
                Ok(())
            },
            &self.cfg,
        )?;
        Ok(v[1] - v[0] * v[0])
    }

    /// Objective value; +∞ where Var[t_p(X)] diverges or cannot be integrated.
    pub fn eval(&self, p: f64) -> Result<f64> {
        match self.transformed_variance(p) {
            Ok(var) if var > 0.0 && var.is_finite() => Ok(0.5 * var.ln() - (p - 1.0) * self.mean_log),
            Ok(var) if var.is_infinite() => Ok(f64::INFINITY),
            Ok(_) => Ok(f64::NEG_INFINITY),
            Err(e) if e.is_numerical() => Ok(f64::INFINITY),
            Err(e) => Err(e),
        }
    }
}

fn require_positive(spec: &DistributionSpec) -> Result<()> {
    let (lo, _) = spec.support();
    if lo < 0.0 {
        return Err(Error::domain(
            format!("power transformations need a nonnegative variable but the support starts at {lo}; precondition with bounds first"),
            Some((lo, 0.0)),
        ));
    }
    let at_zero = spec.atom_mass(0.0);
    if at_zero > 0.0 {
        return Err(Error::domain(
            format!("atom of mass {at_zero} at 0 has no power transform; remove it or shift the variable"),
            Some((0.0, 0.0)),
        ));
    }
    Ok(())
}

const SCAN_POINTS: usize = 31;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Power p minimizing the relative entropy between t_p(X) and its
/// moment-matching Gaussian over the configured bracket.
pub fn optimal_power(spec: &DistributionSpec, search: &PowerSearchConfig, cfg: &QuadratureConfig) -> Result<PowerSearch> {
    search.validate()?;
    let objective = PowerObjective::new(spec, cfg)?;
    let (lo, hi) = search.bracket;
    let step = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + step * i as f64).collect();
    let mut values = Vec::with_capacity(SCAN_POINTS);
    for &p in &grid {
        values.push(objective.eval(p)?);
    }
    if values.iter().any(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::Bracket("power objective is unbounded below on the bracket".into()));
    }
    let best = (0..SCAN_POINTS)
        .filter(|&i| values[i].is_finite())
        .min_by(|&i, &j| values[i].total_cmp(&values[j]))
        .ok_or_else(|| Error::Bracket("power objective is infinite across the whole bracket".into()))?;
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(SCAN_POINTS - 1)];
    let mut best_p = grid[best];
    let mut best_v = values[best];
    let mut consider = |p: f64, v: f64| {
        if v < best_v {
            best_p = p;
            best_v = v;
        }
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = objective.eval(c)?;
    let mut fd = objective.eval(d)?;
    consider(c, fc);
    consider(d, fd);
    while b - a > search.tolerance {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = objective.eval(c)?;
            consider(c, fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = objective.eval(d)?;
            consider(d, fd);
        }
    }
    Ok(PowerSearch {
        p_star: best_p,
        objective: best_v,
    })
}

/// Full relative entropy between t_p(X) and its moment-matching Gaussian.
pub fn power_gap(spec: &DistributionSpec, p: f64, cfg: &QuadratureConfig) -> Result<f64> {
    transform_gap(spec, &TransformChain::single(TransformStep::BoxCox { p })?, cfg)
}

/// Snaps `p` to the nearest interpretable target within the threshold.
pub fn round_power(p: f64, search: &PowerSearchConfig) -> f64 {
    search
        .candidate_round_targets
        .iter()
        .copied()
        .filter(|t| (p - t).abs() <= search.rounding_threshold)
        .min_by(|x, y| (p - x).abs().total_cmp(&(p - y).abs()))
        .unwrap_or(p)
}

/// Box-Cox step for `p`, rounded when configured, with the rounding recorded
/// on the chain.
pub fn append_power(chain: TransformChain, p: f64, round: Option<&PowerSearchConfig>) -> Result<TransformChain> {
    let used = round.map_or(p, |s| round_power(p, s));
    let step_index = chain.steps().len();
    let mut out = chain.then(TransformStep::BoxCox { p: used })?;
    if used != p {
        out.annotate(RoundingNote {
            step: step_index,
            rounded_from: p,
            simple_power: used != 0.0,
        });
    }
    Ok(out)
}

/// Declared practical bounds: a lower bound and an optional upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, Option<f64>)", into = "(f64, Option<f64>)")]
pub struct Bounds {
    pub lower: f64,
    pub upper: Option<f64>,
}

impl From<(f64, Option<f64>)> for Bounds {
    fn from((lower, upper): (f64, Option<f64>)) -> Self {
        Bounds { lower, upper }
    }
}

impl From<Bounds> for (f64, Option<f64>) {
    fn from(b: Bounds) -> Self {
        (b.lower, b.upper)
    }
}

impl Bounds {
    pub fn new(lower: f64, upper: Option<f64>) -> Result<Self> {
        let b = Bounds { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lower.is_finite() {
            return Err(Error::validation("lower bound must be finite"));
        }
        if let Some(u) = self.upper {
            if !(u.is_finite() && u > self.lower) {
                return Err(Error::validation("upper bound must be finite and above the lower bound"));
            }
        }
        Ok(())
    }
}

/// Chain taking the variable onto [0, ∞): scaled odds for two-sided
/// bounds, a shift for a lower bound, identity when already nonnegative.
pub fn precondition(spec: &DistributionSpec, bounds: Option<Bounds>) -> Result<TransformChain> {
    match bounds {
        Some(b) => {
            b.validate()?;
            let below = spec.cdf(b.lower)? - spec.atom_mass(b.lower);
            if below > OUTSIDE_MASS_TOL {
                return Err(Error::domain(
                    format!("mass {below:.3e} lies below the declared lower bound {}", b.lower),
                    Some((spec.support().0, b.lower)),
                ));
            }
            match b.upper {
                Some(u) => {
                    let above = 1.0 - spec.cdf(u)? + spec.atom_mass(u);
                    if above > OUTSIDE_MASS_TOL {
                        return Err(Error::domain(
                            format!("mass {above:.3e} lies at or above the declared upper bound {u}"),
                            Some((u, spec.support().1)),
                        ));
                    }
                    TransformChain::single(TransformStep::ScaledOdds { a: b.lower, b: u })
                }
                None if b.lower == 0.0 => Ok(TransformChain::identity()),
                None => TransformChain::single(TransformStep::Affine {
                    scale: 1.0,
                    shift: -b.lower,
                }),
            }
        }
        None => {
            let (lo, _) = spec.support();
            if lo >= 0.0 {
                Ok(TransformChain::identity())
            } else if lo.is_finite() {
                TransformChain::single(TransformStep::Affine { scale: 1.0, shift: -lo })
            } else {
                Err(Error::domain(
                    "distribution is unbounded below; supply practical bounds",
                    Some((lo, 0.0)),
                ))
            }
        }
    }
}
