//! Mixtures of Gaussians, including zero-variance (atom) components.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distribution::{Atom, DistributionSpec};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureConfig;
use crate::special::{log_sum_exp, normal_cdf, normal_ln_pdf};

/// Relative size of the default variance floor.
pub const DEFAULT_VAR_FLOOR_REL: f64 = 1e-10;

/// One weighted Gaussian component. `var == 0` denotes a point mass at `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub p: f64,
    pub mu: f64,
    pub var: f64,
}

impl Component {
    pub fn new(p: f64, mu: f64, var: f64) -> Self {
        Component { p, mu, var }
    }

    pub fn is_atom(&self) -> bool {
        self.var == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MixtureWire {
    components: Vec<Component>,
}

/// Weights on the simplex with per-component means and variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureWire", into = "MixtureWire")]
pub struct GaussianMixture {
    components: Vec<Component>,
    var_floor: f64,
}

impl TryFrom<MixtureWire> for GaussianMixture {
    type Error = Error;

    fn try_from(w: MixtureWire) -> Result<Self> {
        GaussianMixture::new(w.components)
    }
}

impl From<GaussianMixture> for MixtureWire {
    fn from(gm: GaussianMixture) -> Self {
        MixtureWire {
            components: gm.components,
        }
    }
}

impl GaussianMixture {
    /// Validates and builds a mixture. Weights summing to 1 within 1e-6 are
    /// renormalized exactly; the variance floor defaults to 1e-10 of the
    /// overall mixture variance.
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let mut gm = GaussianMixture {
            components,
            var_floor: 0.0,
        };
        gm.normalize()?;
        gm.var_floor = DEFAULT_VAR_FLOOR_REL * gm.variance();
        gm.check_floor()?;
        Ok(gm)
    }

    /// Builds a mixture with an explicit variance floor.
    pub fn with_var_floor(components: Vec<Component>, var_floor: f64) -> Result<Self> {
        if !(var_floor >= 0.0 && var_floor.is_finite()) {
            return Err(Error::validation("var_floor must be nonnegative"));
        }
        let mut gm = GaussianMixture { components, var_floor };
        gm.normalize()?;
        gm.check_floor()?;
        Ok(gm)
    }

    pub fn single(mu: f64, var: f64) -> Result<Self> {
        Self::new(vec![Component::new(1.0, mu, var)])
    }

    fn normalize(&mut self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::validation("a mixture needs at least one component"));
        }
        for (i, c) in self.components.iter().enumerate() {
            if !(c.p.is_finite() && c.mu.is_finite() && c.var.is_finite()) {
                return Err(Error::validation(format!("component {i} has non-finite parameters")));
            }
            if !(0.0..=1.0).contains(&c.p) {
                return Err(Error::validation(format!("component {i} weight {} outside [0, 1]", c.p)));
            }
            if c.var < 0.0 {
                return Err(Error::validation(format!("component {i} has negative variance")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.p).sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::validation(format!("mixture weights sum to {total}, not 1")));
        }
        for c in &mut self.components {
            c.p /= total;
        }
        Ok(())
    }

    fn check_floor(&self) -> Result<()> {
        for (i, c) in self.components.iter().enumerate() {
            if c.var != 0.0 && c.var < self.var_floor {
                return Err(Error::validation(format!(
                    "component {i} variance {} is below the floor {}",
                    c.var, self.var_floor
                )));
            }
        }
        Ok(())
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn var_floor(&self) -> f64 {
        self.var_floor
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.p).collect()
    }

    pub fn means(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.mu).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.var).collect()
    }

    /// Total weight of the positive-variance components.
    pub fn continuous_mass(&self) -> f64 {
        self.components.iter().filter(|c| !c.is_atom()).map(|c| c.p).sum()
    }

    /// Zero-variance components as point masses (merged by location).
    pub fn atoms(&self) -> Vec<Atom> {
        let mut atoms: Vec<Atom> = self
            .components
            .iter()
            .filter(|c| c.is_atom() && c.p > 0.0)
            .map(|c| Atom { x: c.mu, mass: c.p })
            .collect();
        crate::distribution::merge_atoms(&mut atoms);
        atoms
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.p * c.mu).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.components
            .iter()
            .map(|c| c.p * (c.var + (c.mu - mean).powi(2)))
            .sum()
    }

    /// E[Xʳ] in closed form.
    pub fn raw_moment(&self, r: u32) -> f64 {
        self.components
            .iter()
            .map(|c| c.p * gaussian_raw_moments(c.mu, c.var, r)[r as usize])
            .sum()
    }

    /// Log of the continuous-part density (atoms excluded).
    pub fn ln_density(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .filter(|c| !c.is_atom() && c.p > 0.0)
            .map(|c| c.p.ln() + normal_ln_pdf(x, c.mu, c.var))
            .collect();
        log_sum_exp(&terms)
    }

    /// Continuous-part density pᵢ-weighted sum; atoms are excluded.
    pub fn density(&self, x: f64) -> f64 {
        self.components
            .iter()
            .filter(|c| !c.is_atom())
            .map(|c| c.p * normal_ln_pdf(x, c.mu, c.var).exp())
            .sum()
    }

    /// Full CDF; zero-variance components contribute steps.
    pub fn cdf(&self, x: f64) -> f64 {
        let total: f64 = self
            .components
            .iter()
            .map(|c| {
                if c.is_atom() {
                    if c.mu <= x {
                        c.p
                    } else {
                        0.0
                    }
                } else {
                    c.p * normal_cdf(x, c.mu, c.var)
                }
            })
            .sum();
        total.clamp(0.0, 1.0)
    }

    /// CDF of the continuous part only (tends to `continuous_mass()`).
    pub fn continuous_cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .filter(|c| !c.is_atom())
            .map(|c| c.p * normal_cdf(x, c.mu, c.var))
            .sum()
    }

    /// Posterior selector probabilities pᵢfᵢ(x)/f(x) at `x`.
    pub fn responsibilities(&self, x: f64) -> Result<Vec<f64>> {
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| {
                if c.is_atom() || c.p == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    c.p.ln() + normal_ln_pdf(x, c.mu, c.var)
                }
            })
            .collect();
        let total = log_sum_exp(&logs);
        if !total.is_finite() {
            return Err(Error::DegeneratePoint(x));
        }
        Ok(logs.iter().map(|l| (l - total).exp()).collect())
    }

    /// Quantile of the normalized continuous part.
    pub(crate) fn continuous_quantile(&self, q: f64) -> f64 {
        let mass = self.continuous_mass();
        let target = q * mass;
        let cont: Vec<&Component> = self.components.iter().filter(|c| !c.is_atom()).collect();
        let mut lo = cont
            .iter()
            .map(|c| c.mu - 40.0 * c.var.sqrt())
            .fold(f64::INFINITY, f64::min);
        let mut hi = cont
            .iter()
            .map(|c| c.mu + 40.0 * c.var.sqrt())
            .fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.continuous_cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// `count` draws: a selector draw followed by a component draw.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        self.sample_with_labels(count, seed).into_iter().map(|(x, _)| x).collect()
    }

    /// Draws paired with the selected component index.
    pub fn sample_with_labels(&self, count: usize, seed: u64) -> Vec<(f64, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cumulative = Vec::with_capacity(self.components.len());
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.p;
            cumulative.push(acc);
        }
        (0..count)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let i = cumulative
                    .partition_point(|&c| c <= u)
                    .min(self.components.len() - 1);
                let c = &self.components[i];
                let x = if c.is_atom() {
                    c.mu
                } else {
                    let z: f64 = rng.sample(StandardNormal);
                    c.mu + c.var.sqrt() * z
                };
                (x, i)
            })
            .collect()
    }

    /// The same mixture as a distribution spec.
    pub fn to_spec(&self) -> DistributionSpec {
        DistributionSpec::mixture(self.clone())
    }
}

/// Raw moments E[Xʳ], r = 0..=max, of N(mu, var) via the recursion
/// mᵣ = μ·mᵣ₋₁ + (r−1)·v·mᵣ₋₂.
pub fn gaussian_raw_moments(mu: f64, var: f64, max: u32) -> Vec<f64> {
    let mut m = vec![0.0; max as usize + 1];
    m[0] = 1.0;
    if max >= 1 {
        m[1] = mu;
    }
    for r in 2..=max as usize {
        m[r] = mu * m[r - 1] + (r as f64 - 1.0) * var * m[r - 2];
    }
    m
}

/// Single Gaussian with the mean and variance of `spec`.
pub fn moment_match_gaussian(spec: &DistributionSpec, cfg: &QuadratureConfig) -> Result<GaussianMixture> {
    let (mean, var) = spec.mean_variance(cfg)?;
    if !var.is_finite() {
        return Err(Error::Divergence("variance is infinite".into()));
    }
    if var <= 0.0 {
        return Err(Error::Unsupported("distribution has zero variance".into()));
    }
    GaussianMixture::with_var_floor(vec![Component::new(1.0, mean, var)], 0.0)
}
