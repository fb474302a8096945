//! Univariate distributions and the expectation engine behind every
//! entropy, relative-entropy and moment computation in the crate.
//!
//! A [`DistributionSpec`] is a *body* (analytic family, assessed-CDF spline,
//! empirical sample, Gaussian mixture, or the pushforward of another spec
//! through a [`TransformChain`]) plus optional explicit point masses. The
//! body's continuous part is scaled by whatever mass the explicit atoms leave.

pub mod analytic;
pub mod spline;
mod wire;

use serde::{Deserialize, Serialize};

pub use analytic::{Analytic, Family};
pub use spline::{SplineCdf, TailPolicy};

use crate::error::{Error, Result};
use crate::mixture::{gaussian_raw_moments, GaussianMixture};
use crate::quadrature::{integrate, integrate_tail, Integral, QuadratureConfig};
use crate::transform::TransformChain;

/// A point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub mass: f64,
}

/// Sorts atoms by location and merges coincident ones.
pub(crate) fn merge_atoms(atoms: &mut Vec<Atom>) {
    atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
    for a in atoms.drain(..) {
        match merged.last_mut() {
            Some(last) if last.x == a.x => last.mass += a.mass,
            _ => merged.push(a),
        }
    }
    *atoms = merged;
}

/// Weighted sample values; sorted, deduplicated and normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl Empirical {
    pub fn new(values: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::validation("empirical distribution needs at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("empirical values must be finite"));
        }
        let raw: Vec<f64> = match weights {
            Some(w) => {
                if w.len() != values.len() {
                    return Err(Error::validation(format!(
                        "{} weights for {} values",
                        w.len(),
                        values.len()
                    )));
                }
                if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::validation("empirical weights must be finite and nonnegative"));
                }
                w.to_vec()
            }
            None => vec![1.0; values.len()],
        };
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::validation("empirical weights sum to zero"));
        }
        let mut atoms: Vec<Atom> = values
            .iter()
            .zip(&raw)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&x, &w)| Atom { x, mass: w / total })
            .collect();
        merge_atoms(&mut atoms);
        Ok(Empirical {
            values: atoms.iter().map(|a| a.x).collect(),
            weights: atoms.iter().map(|a| a.mass).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Pushforward of a spec through a monotone increasing chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Transformed {
    pub(crate) base: Box<DistributionSpec>,
    pub(crate) chain: TransformChain,
    /// Interval of the base variable on which the chain is defined.
    pub(crate) domain: (f64, f64),
}

impl Transformed {
    pub fn base(&self) -> &DistributionSpec {
        &self.base
    }

    pub fn chain(&self) -> &TransformChain {
        &self.chain
    }

    fn base_mass_in_domain(&self) -> f64 {
        let (lo, hi) = self.domain;
        (self.base.continuous_cdf(hi) - self.base.continuous_cdf(lo)).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Body {
    Analytic(Analytic),
    SplineCdf(SplineCdf),
    Empirical(Empirical),
    Mixture(GaussianMixture),
    Transformed(Transformed),
}

impl Body {
    /// Mass carried by the body's own continuous part.
    fn cont_mass(&self) -> f64 {
        match self {
            Body::Analytic(_) | Body::SplineCdf(_) => 1.0,
            Body::Empirical(_) => 0.0,
            Body::Mixture(gm) => gm.continuous_mass(),
            Body::Transformed(t) => t.base_mass_in_domain(),
        }
    }

    fn cont_density(&self, x: f64) -> f64 {
        match self {
            Body::Analytic(a) => a.density(x),
            Body::SplineCdf(s) => s.density(x),
            Body::Empirical(_) => 0.0,
            Body::Mixture(gm) => gm.density(x),
            Body::Transformed(t) => match t.chain.invert(x) {
                Ok(u) if u > t.domain.0 && u < t.domain.1 => match t.chain.derivative(u) {
                    Ok(d) if d > 0.0 => t.base.continuous_density(u) / d,
                    _ => 0.0,
                },
                _ => 0.0,
            },
        }
    }

    fn ln_cont_density(&self, x: f64) -> f64 {
        match self {
            Body::Analytic(a) => a.ln_density(x),
            Body::SplineCdf(s) => s.density(x).ln(),
            Body::Empirical(_) => f64::NEG_INFINITY,
            Body::Mixture(gm) => gm.ln_density(x),
            Body::Transformed(t) => match t.chain.invert(x) {
                Ok(u) if u > t.domain.0 && u < t.domain.1 => match t.chain.ln_derivative(u) {
                    Ok(ld) => t.base.ln_continuous_density(u) - ld,
                    Err(_) => f64::NEG_INFINITY,
                },
                _ => f64::NEG_INFINITY,
            },
        }
    }

    fn cont_cdf(&self, x: f64) -> f64 {
        match self {
            Body::Analytic(a) => a.cdf(x),
            Body::SplineCdf(s) => s.cdf(x),
            Body::Empirical(_) => 0.0,
            Body::Mixture(gm) => gm.continuous_cdf(x),
            Body::Transformed(t) => {
                let (lo, hi) = t.domain;
                let floor = t.base.continuous_cdf(lo);
                let (ylo, yhi) = (t.chain.apply_limit(lo), t.chain.apply_limit(hi));
                if x <= ylo {
                    0.0
                } else if x >= yhi {
                    t.base_mass_in_domain()
                } else {
                    let u = t.chain.invert_limit(x).clamp(lo, hi);
                    (t.base.continuous_cdf(u) - floor).max(0.0)
                }
            }
        }
    }

    fn atoms(&self) -> Vec<Atom> {
        match self {
            Body::Analytic(_) | Body::SplineCdf(_) => Vec::new(),
            Body::Empirical(e) => e
                .values
                .iter()
                .zip(&e.weights)
                .map(|(&x, &mass)| Atom { x, mass })
                .collect(),
            Body::Mixture(gm) => gm.atoms(),
            Body::Transformed(t) => t
                .base
                .all_atoms()
                .into_iter()
                .map(|a| Atom {
                    x: t.chain.apply_limit(a.x),
                    mass: a.mass,
                })
                .collect(),
        }
    }

    fn cont_support(&self) -> (f64, f64) {
        match self {
            Body::Analytic(a) => a.support(),
            Body::SplineCdf(s) => s.support(),
            Body::Empirical(_) => (f64::INFINITY, f64::NEG_INFINITY),
            Body::Mixture(gm) => {
                if gm.continuous_mass() > 0.0 {
                    (f64::NEG_INFINITY, f64::INFINITY)
                } else {
                    (f64::INFINITY, f64::NEG_INFINITY)
                }
            }
            Body::Transformed(t) => {
                let (blo, bhi) = t.base.continuous_support();
                (
                    t.chain.apply_limit(blo.max(t.domain.0)),
                    t.chain.apply_limit(bhi.min(t.domain.1)),
                )
            }
        }
    }

    /// Quantile of the normalized continuous part.
    fn cont_quantile(&self, q: f64) -> f64 {
        match self {
            Body::Analytic(a) => a.quantile(q),
            Body::SplineCdf(s) => s.quantile(q),
            Body::Empirical(_) => f64::NAN,
            Body::Mixture(gm) => gm.continuous_quantile(q),
            Body::Transformed(t) => {
                let u = t.base.continuous_quantile(q).clamp(t.domain.0, t.domain.1);
                t.chain.apply_limit(u)
            }
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            Body::Analytic(a) => a.kinks(),
            Body::SplineCdf(s) => s.knots().to_vec(),
            _ => Vec::new(),
        }
    }
}

/// A point handed to continuous-part integrands: location, the density of
/// the integration measure there, and the log of the spec's own density.
///
/// For pushforward specs the integration runs over the base variable, so
/// `weight` is the base density while `x` and `ln_density` refer to the
/// transformed variable.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub x: f64,
    pub weight: f64,
    pub ln_density: f64,
}

/// Panels and tail starting points for integrating a spec's continuous part.
#[derive(Debug, Clone, Default)]
pub struct IntegrationPlan {
    breaks: Vec<f64>,
    lower_tail: Option<(f64, f64)>,
    upper_tail: Option<(f64, f64)>,
}

impl IntegrationPlan {
    pub fn breaks(&self) -> &[f64] {
        &self.breaks
    }
}

const PLAN_LEVELS: [f64; 17] = [
    1e-9,
    1e-6,
    1e-4,
    1e-3,
    0.01,
    0.05,
    0.15,
    0.3,
    0.5,
    0.7,
    0.85,
    0.95,
    0.99,
    0.999,
    1.0 - 1e-4,
    1.0 - 1e-6,
    1.0 - 1e-9,
];

/// Raw and central moments, `raw[r-1] = E[Xʳ]`, `central[r-1] = E[(X−μ)ʳ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub raw: Vec<f64>,
    pub central: Vec<f64>,
}

impl Moments {
    pub fn mean(&self) -> f64 {
        self.raw[0]
    }

    pub fn variance(&self) -> Option<f64> {
        self.central.get(1).copied()
    }
}

/// A univariate distribution: a body plus optional explicit point masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "wire::SpecWire", into = "wire::SpecWire")]
pub struct DistributionSpec {
    pub(crate) body: Body,
    pub(crate) atoms: Vec<Atom>,
}

impl DistributionSpec {
    pub(crate) fn from_body(body: Body) -> Self {
        DistributionSpec {
            body,
            atoms: Vec::new(),
        }
    }

    pub fn analytic(family: Family, params: &[f64]) -> Result<Self> {
        Ok(Self::from_body(Body::Analytic(Analytic::from_params(family, params)?)))
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::analytic(Family::Uniform, &[lo, hi])
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::analytic(Family::Exponential, &[rate])
    }

    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        Self::analytic(Family::Gaussian, &[mean, var])
    }

    pub fn lognormal(mu: f64, var: f64) -> Result<Self> {
        Self::analytic(Family::Lognormal, &[mu, var])
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        Self::analytic(Family::Beta, &[alpha, beta])
    }

    pub fn triangular(lo: f64, mode: f64, hi: f64) -> Result<Self> {
        Self::analytic(Family::Triangular, &[lo, mode, hi])
    }

    pub fn empirical(values: &[f64], weights: Option<&[f64]>) -> Result<Self> {
        Ok(Self::from_body(Body::Empirical(Empirical::new(values, weights)?)))
    }

    pub fn mixture(gm: GaussianMixture) -> Self {
        Self::from_body(Body::Mixture(gm))
    }

    pub fn spline(spline: SplineCdf) -> Self {
        Self::from_body(Body::SplineCdf(spline))
    }

    /// Attaches point masses; the body keeps the remaining probability.
    pub fn with_atoms(mut self, atoms: Vec<Atom>) -> Result<Self> {
        for a in &atoms {
            if !a.x.is_finite() || !(a.mass > 0.0 && a.mass <= 1.0) {
                return Err(Error::validation(format!(
                    "atom at {} has invalid mass {}",
                    a.x, a.mass
                )));
            }
        }
        let mut all = self.atoms;
        all.extend(atoms);
        merge_atoms(&mut all);
        let total: f64 = all.iter().map(|a| a.mass).sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::validation(format!("atom masses sum to {total} > 1")));
        }
        self.atoms = all;
        Ok(self)
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    /// Explicitly attached atoms.
    pub fn explicit_atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Probability left to the body after the explicit atoms.
    pub fn body_weight(&self) -> f64 {
        (1.0 - self.atoms.iter().map(|a| a.mass).sum::<f64>()).max(0.0)
    }

    /// Every point mass: explicit atoms plus those inside the body.
    pub fn all_atoms(&self) -> Vec<Atom> {
        let w = self.body_weight();
        let mut atoms = self.atoms.clone();
        if w > 0.0 {
            atoms.extend(self.body.atoms().into_iter().map(|a| Atom {
                x: a.x,
                mass: w * a.mass,
            }));
        }
        merge_atoms(&mut atoms);
        atoms
    }

    pub fn has_atoms(&self) -> bool {
        !self.all_atoms().is_empty()
    }

    pub fn continuous_mass(&self) -> f64 {
        self.body_weight() * self.body.cont_mass()
    }

    /// Continuous-part density (atoms excluded; integrates to `continuous_mass`).
    pub fn continuous_density(&self, x: f64) -> f64 {
        let w = self.body_weight();
        if w == 0.0 {
            return 0.0;
        }
        w * self.body.cont_density(x)
    }

    pub fn ln_continuous_density(&self, x: f64) -> f64 {
        let w = self.body_weight();
        if w == 0.0 {
            return f64::NEG_INFINITY;
        }
        w.ln() + self.body.ln_cont_density(x)
    }

    pub fn continuous_cdf(&self, x: f64) -> f64 {
        self.body_weight() * self.body.cont_cdf(x)
    }

    /// Density of the continuous part at a finite `x`.
    pub fn density(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Evaluation {
                location: x,
                message: "density requested at a non-finite point".into(),
            });
        }
        let d = self.continuous_density(x);
        if d.is_nan() {
            return Err(Error::Evaluation {
                location: x,
                message: "density is not evaluable".into(),
            });
        }
        Ok(d)
    }

    /// CDF including atoms located at or below `x`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x.is_nan() {
            return Err(Error::Evaluation {
                location: x,
                message: "cdf requested at NaN".into(),
            });
        }
        let atoms: f64 = self.all_atoms().iter().filter(|a| a.x <= x).map(|a| a.mass).sum();
        Ok((self.continuous_cdf(x) + atoms).clamp(0.0, 1.0))
    }

    /// Mass of the atoms located exactly at `x`.
    pub fn atom_mass(&self, x: f64) -> f64 {
        self.all_atoms().iter().filter(|a| a.x == x).map(|a| a.mass).sum()
    }

    /// Support interval of the continuous part (empty, lo > hi, when absent).
    pub fn continuous_support(&self) -> (f64, f64) {
        if self.continuous_mass() > 0.0 {
            self.body.cont_support()
        } else {
            (f64::INFINITY, f64::NEG_INFINITY)
        }
    }

    /// Smallest interval holding the continuous part and every atom.
    pub fn support(&self) -> (f64, f64) {
        let (mut lo, mut hi) = self.continuous_support();
        for a in self.all_atoms() {
            lo = lo.min(a.x);
            hi = hi.max(a.x);
        }
        (lo, hi)
    }

    /// Quantile of the normalized continuous part, `q` in (0, 1).
    pub fn continuous_quantile(&self, q: f64) -> f64 {
        self.body.cont_quantile(q)
    }

    /// Generalized inverse of the full CDF: the smallest x with F(x) ≥ q.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::validation(format!("quantile level {q} outside (0, 1)")));
        }
        let atoms = self.all_atoms();
        if atoms.is_empty() {
            return Ok(self.continuous_quantile(q));
        }
        if self.continuous_mass() == 0.0 {
            let mut acc = 0.0;
            for a in &atoms {
                acc += a.mass;
                if acc >= q - 1e-12 {
                    return Ok(a.x);
                }
            }
            return Ok(atoms[atoms.len() - 1].x);
        }
        let mut lo = atoms[0].x.min(self.continuous_quantile(1e-12));
        let mut hi = atoms[atoms.len() - 1].x.max(self.continuous_quantile(1.0 - 1e-12));
        lo = lo.max(-1e300);
        hi = hi.min(1e300);
        if self.cdf(lo)? >= q {
            return Ok(lo);
        }
        for _ in 0..1200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid)? >= q {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        // Snap onto an atom when the crossing happens there.
        Ok(atoms
            .iter()
            .find(|a| a.x >= lo && a.x <= hi)
            .map(|a| a.x)
            .unwrap_or(hi))
    }

    /// Plan for integrating the continuous part.
    pub fn integration_plan(&self, cfg: &QuadratureConfig) -> IntegrationPlan {
        self.plan_within((f64::NEG_INFINITY, f64::INFINITY), cfg)
    }

    fn plan_within(&self, restrict: (f64, f64), cfg: &QuadratureConfig) -> IntegrationPlan {
        if self.continuous_mass() <= 0.0 {
            return IntegrationPlan::default();
        }
        if let Body::Transformed(t) = &self.body {
            return t.base.plan_within(t.domain, cfg);
        }
        let (slo, shi) = self.body.cont_support();
        let (lo, hi) = (slo.max(restrict.0), shi.min(restrict.1));
        let q = |p: f64| self.body.cont_quantile(p);
        let a = if lo.is_finite() { lo } else { q(cfg.tail_mass_cutoff) };
        let b = if hi.is_finite() { hi } else { q(1.0 - cfg.tail_mass_cutoff) };
        if !(a < b) {
            return IntegrationPlan::default();
        }
        let mut breaks = vec![a, b];
        breaks.extend(PLAN_LEVELS.iter().map(|&p| q(p)));
        breaks.extend(self.body.kinks());
        breaks.retain(|x| x.is_finite() && *x >= a && *x <= b);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let median = q(0.5);
        let scale = (b - a).max(f64::MIN_POSITIVE);
        let lower_tail = (!lo.is_finite()).then(|| (a, (median - a).max(1e-3 * scale)));
        let upper_tail = (!hi.is_finite()).then(|| (b, (b - median).max(1e-3 * scale)));
        IntegrationPlan {
            breaks,
            lower_tail,
            upper_tail,
        }
    }

    /// Integrates a vector-valued function of [`QuadPoint`] over the
    /// continuous part. The integrand is expected to multiply by
    /// `point.weight` itself. Returns the raw result, converged or not.
    pub fn integrate_continuous_raw<F>(
        &self,
        plan: &IntegrationPlan,
        dim: usize,
        mut f: F,
        cfg: &QuadratureConfig,
    ) -> Result<Integral>
    where
        F: FnMut(&QuadPoint, &mut [f64]) -> Result<()>,
    {
        let w = self.body_weight();
        if w == 0.0 || plan.breaks.len() < 2 {
            return Ok(Integral {
                values: vec![0.0; dim],
                errors: vec![0.0; dim],
                converged: true,
                evaluations: 0,
            });
        }
        match &self.body {
            Body::Transformed(t) => {
                let ln_w = w.ln();
                t.base.integrate_untransformed(
                    plan,
                    dim,
                    |pb, out| {
                        // Rounding can place nodes on a domain endpoint; that mass is nil.
                        if !(pb.x > t.domain.0 && pb.x < t.domain.1) {
                            return Ok(());
                        }
                        let y = t.chain.apply(pb.x)?;
                        let ln_d = pb.ln_density - t.chain.ln_derivative(pb.x)? + ln_w;
                        let pt = QuadPoint {
                            x: y,
                            weight: w * pb.weight,
                            ln_density: ln_d,
                        };
                        f(&pt, out)
                    },
                    cfg,
                )
            }
            _ => self.integrate_untransformed(plan, dim, f, cfg),
        }
    }

    // Pushforward bodies always wrap an untransformed base, so this never recurses.
    fn integrate_untransformed<F>(
        &self,
        plan: &IntegrationPlan,
        dim: usize,
        mut f: F,
        cfg: &QuadratureConfig,
    ) -> Result<Integral>
    where
        F: FnMut(&QuadPoint, &mut [f64]) -> Result<()>,
    {
        let w = self.body_weight();
        let body = &self.body;
        if matches!(body, Body::Transformed(_)) {
            return Err(Error::Unsupported("nested pushforward bodies are not integrable".into()));
        }
        let mut wrapped = |x: f64, out: &mut [f64]| -> Result<()> {
            let d = w * body.cont_density(x);
            if !(d > 0.0) {
                return Ok(());
            }
            let pt = QuadPoint {
                x,
                weight: d,
                ln_density: d.ln(),
            };
            f(&pt, out)
        };
        let mut total = integrate(&mut wrapped, dim, &plan.breaks, cfg)?;
        let core = total.values.clone();
        if let Some((start, width)) = plan.lower_tail {
            let tail = integrate_tail(&mut wrapped, dim, start, width, -1.0, &core, cfg)?;
            total.absorb(&tail);
        }
        if let Some((start, width)) = plan.upper_tail {
            let tail = integrate_tail(&mut wrapped, dim, start, width, 1.0, &core, cfg)?;
            total.absorb(&tail);
        }
        Ok(total)
    }

    /// As [`integrate_continuous_raw`](Self::integrate_continuous_raw) but
    /// failing with [`Error::Quadrature`] when tolerances are not met.
    pub fn integrate_continuous<F>(
        &self,
        plan: &IntegrationPlan,
        dim: usize,
        f: F,
        cfg: &QuadratureConfig,
    ) -> Result<Vec<f64>>
    where
        F: FnMut(&QuadPoint, &mut [f64]) -> Result<()>,
    {
        Ok(self.integrate_continuous_raw(plan, dim, f, cfg)?.require_converged()?.values)
    }

    /// E[g(X)] for a vector-valued `g`: quadrature over the continuous part
    /// plus exact summation over atoms.
    pub fn expect_vec<G>(&self, dim: usize, mut g: G, cfg: &QuadratureConfig) -> Result<Vec<f64>>
    where
        G: FnMut(f64, &mut [f64]) -> Result<()>,
    {
        cfg.validate()?;
        let plan = self.integration_plan(cfg);
        let mut values = self.integrate_continuous(
            &plan,
            dim,
            |pt, out| {
                g(pt.x, out)?;
                out.iter_mut().for_each(|v| *v *= pt.weight);
                Ok(())
            },
            cfg,
        )?;
        let mut buf = vec![0.0; dim];
        for a in self.all_atoms() {
            buf.iter_mut().for_each(|v| *v = 0.0);
            g(a.x, &mut buf)?;
            for k in 0..dim {
                if !buf[k].is_finite() {
                    return Err(Error::Divergence(format!(
                        "integrand is {} at atom x = {}",
                        buf[k], a.x
                    )));
                }
                values[k] += a.mass * buf[k];
            }
        }
        Ok(values)
    }

    /// E[g(X)].
    pub fn expect<G>(&self, g: G, cfg: &QuadratureConfig) -> Result<f64>
    where
        G: Fn(f64) -> f64,
    {
        Ok(self.expect_vec(
            1,
            |x, out| {
                out[0] = g(x);
                Ok(())
            },
            cfg,
        )?[0])
    }

    /// Differential entropy −E[ln f(X)]; defined for atom-free specs only.
    pub fn entropy(&self, cfg: &QuadratureConfig) -> Result<f64> {
        cfg.validate()?;
        if let Some(a) = self.all_atoms().first() {
            return Err(Error::Unsupported(format!(
                "entropy is undefined for a distribution with an atom at x = {} (mass {})",
                a.x, a.mass
            )));
        }
        let plan = self.integration_plan(cfg);
        let v = self.integrate_continuous(
            &plan,
            1,
            |pt, out| {
                out[0] = -pt.weight * pt.ln_density;
                Ok(())
            },
            cfg,
        )?;
        Ok(v[0])
    }

    /// Raw and central moments of orders 1..=max_order.
    pub fn moments(&self, max_order: u32, cfg: &QuadratureConfig) -> Result<Moments> {
        if max_order == 0 {
            return Err(Error::validation("max_order must be at least 1"));
        }
        cfg.validate()?;
        let n = max_order as usize;
        if let Some(m) = self.closed_form_moments(max_order) {
            return Ok(m);
        }
        let plan = self.integration_plan(cfg);
        let raw = self.moment_pass(&plan, n, 0.0, cfg)?;
        let mut central = self.moment_pass(&plan, n, raw[0], cfg)?;
        central[0] = 0.0;
        Ok(Moments { raw, central })
    }

    fn moment_pass(&self, plan: &IntegrationPlan, n: usize, center: f64, cfg: &QuadratureConfig) -> Result<Vec<f64>> {
        let integral = self.integrate_continuous_raw(
            plan,
            n,
            |pt, out| {
                let d = pt.x - center;
                let mut pow = pt.weight;
                for v in out.iter_mut() {
                    pow *= d;
                    *v = pow;
                }
                Ok(())
            },
            cfg,
        );
        let integral = match integral {
            Err(Error::Divergence(_)) => return Err(Error::Divergence("moment of order 1 diverges".into())),
            other => other?,
        };
        if !integral.converged {
            let order = (0..n)
                .find(|&k| integral.errors[k] > cfg.tolerance_for(integral.values[k]))
                .unwrap_or(n - 1);
            return Err(Error::Divergence(format!("moment of order {} diverges", order + 1)));
        }
        let mut values = integral.values;
        for a in self.all_atoms() {
            let d = a.x - center;
            let mut pow = a.mass;
            for v in values.iter_mut() {
                pow *= d;
                *v += pow;
            }
        }
        Ok(values)
    }

    fn closed_form_moments(&self, max_order: u32) -> Option<Moments> {
        let n = max_order as usize;
        let w = self.body_weight();
        // (weight, mean, variance) triples; atoms have zero variance.
        let mut parts: Vec<(f64, f64, f64)> = self.atoms.iter().map(|a| (a.mass, a.x, 0.0)).collect();
        match &self.body {
            Body::Mixture(gm) => parts.extend(gm.components().iter().map(|c| (w * c.p, c.mu, c.var))),
            Body::Empirical(e) => parts.extend(e.values.iter().zip(&e.weights).map(|(&x, &p)| (w * p, x, 0.0))),
            _ => return None,
        }
        let raw_about = |c: f64| -> Vec<f64> {
            let mut acc = vec![0.0; n];
            for &(p, mu, var) in &parts {
                let m = gaussian_raw_moments(mu - c, var, max_order);
                for r in 0..n {
                    acc[r] += p * m[r + 1];
                }
            }
            acc
        };
        let raw = raw_about(0.0);
        let mut central = raw_about(raw[0]);
        central[0] = 0.0;
        Some(Moments { raw, central })
    }

    /// (E X, Var X).
    pub fn mean_variance(&self, cfg: &QuadratureConfig) -> Result<(f64, f64)> {
        let m = self.moments(2, cfg)?;
        Ok((m.raw[0], m.central[1]))
    }
}

/// Cross term D₀(X, Y) = −E[ln f_Y(X)].
///
/// Returns `f64::INFINITY` when X puts mass where Y has zero density.
pub fn cross_term(x: &DistributionSpec, y: &DistributionSpec, cfg: &QuadratureConfig) -> Result<f64> {
    cfg.validate()?;
    if let Some(a) = y.all_atoms().first() {
        return Err(Error::Unsupported(format!(
            "second distribution has an atom at x = {}; its density is undefined there",
            a.x
        )));
    }
    if x.continuous_mass() > 0.0 {
        let (xl, xh) = x.continuous_support();
        let (yl, yh) = y.continuous_support();
        let slack = 1e-12 * xl.abs().max(xh.abs()).max(1.0);
        if (xl.is_finite() || yl.is_finite()) && xl < yl - slack {
            return Ok(f64::INFINITY);
        }
        if (xh.is_finite() || yh.is_finite()) && xh > yh + slack {
            return Ok(f64::INFINITY);
        }
    }
    let result = x.expect_vec(
        1,
        |v, out| {
            out[0] = -y.ln_continuous_density(v);
            Ok(())
        },
        cfg,
    );
    match result {
        Ok(v) => Ok(v[0]),
        Err(Error::Divergence(_)) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Relative entropy D(X, Y) = D₀(X, Y) − H(X); X must be atom-free.
pub fn relative_entropy(x: &DistributionSpec, y: &DistributionSpec, cfg: &QuadratureConfig) -> Result<f64> {
    if let Some(a) = x.all_atoms().first() {
        return Err(Error::Unsupported(format!(
            "relative entropy needs an atom-free first argument (atom at x = {})",
            a.x
        )));
    }
    let d0 = cross_term(x, y, cfg)?;
    if d0 == f64::INFINITY {
        return Ok(d0);
    }
    Ok(d0 - x.entropy(cfg)?)
}

/// Spline CDF through assessed cumulative points. `n_equiv` defaults to the
/// number of points.
pub fn spline_from_points(
    points: &[(f64, f64)],
    n_equiv: Option<u32>,
    tail_policy: TailPolicy,
) -> Result<DistributionSpec> {
    Ok(DistributionSpec::spline(SplineCdf::new(points, n_equiv, tail_policy)?))
}
