//! Mixture size selection: grow the mixture while the relative-entropy
//! gain pays for the extra components at cost exponent k and equivalent
//! sample size n.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::distribution::DistributionSpec;
use crate::emfit::{em_fit, EmConfig, FitReport, InitStrategy};
use crate::error::{Error, Result};
use crate::mixture::{Component, GaussianMixture};

pub mod flags {
    pub const HIT_MAX_M: &str = "hit_max_m";
    pub const FIT_FAILED: &str = "fit_failed";
    pub const SPLIT_INIT: &str = "split_init";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SizeSearchWire", into = "SizeSearchWire")]
pub struct SizeSearchConfig {
    /// Cost exponent: utility falls as m^(−k).
    pub k: f64,
    /// Equivalent sample size.
    pub n: f64,
    pub max_m: usize,
    /// Extra increments that must also satisfy the stop rule.
    pub lookahead: usize,
    /// Ratio r of a geometric prior P(m) ∝ r^(m−1).
    pub geometric_prior_ratio: Option<f64>,
}

impl SizeSearchConfig {
    pub fn new(k: f64, n: f64) -> Result<Self> {
        let cfg = SizeSearchConfig {
            k,
            n,
            max_m: 10,
            lookahead: 1,
            geometric_prior_ratio: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config from the combined ratio k/n with n = 1.
    pub fn from_ratio(kn: f64) -> Result<Self> {
        Self::new(kn, 1.0)
    }

    pub fn kn_ratio(&self) -> f64 {
        self.k / self.n
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::validation("k must be finite and nonnegative"));
        }
        if !(self.n > 0.0 && self.n.is_finite()) {
            return Err(Error::validation("n must be finite and positive"));
        }
        if self.max_m == 0 {
            return Err(Error::validation("max_m must be at least 1"));
        }
        if let Some(r) = self.geometric_prior_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::validation("geometric_prior_ratio must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Minimum D decrease from m to m + 1 that justifies the larger size.
    pub fn threshold(&self, m: usize) -> f64 {
        let mf = m as f64;
        let base = self.kn_ratio() * ((mf + 1.0) / mf).ln();
        match self.geometric_prior_ratio {
            Some(r) => base + (1.0 / r).ln() / self.n,
            None => base,
        }
    }
}

/// JSON form: k and n separately, or `kn_ratio` with n (default 1).
#[derive(Serialize, Deserialize)]
struct SizeSearchWire {
    #[serde(default)]
    k: Option<f64>,
    #[serde(default)]
    n: Option<f64>,
    #[serde(default)]
    kn_ratio: Option<f64>,
    #[serde(default = "default_max_m")]
    max_m: usize,
    #[serde(default = "default_lookahead")]
    lookahead: usize,
    #[serde(default)]
    geometric_prior_ratio: Option<f64>,
}

fn default_max_m() -> usize {
    10
}

fn default_lookahead() -> usize {
    1
}

impl TryFrom<SizeSearchWire> for SizeSearchConfig {
    type Error = Error;

    fn try_from(w: SizeSearchWire) -> Result<Self> {
        let n = w.n.unwrap_or(1.0);
        let k = match (w.k, w.kn_ratio) {
            (Some(k), None) => k,
            (None, Some(kn)) => kn * n,
            (Some(k), Some(kn)) => {
                if (k / n - kn).abs() > 1e-12 * kn.abs().max(1.0) {
                    return Err(Error::validation("k / n disagrees with kn_ratio"));
                }
                k
            }
            (None, None) => return Err(Error::validation("size search needs k or kn_ratio")),
        };
        let cfg = SizeSearchConfig {
            k,
            n,
            max_m: w.max_m,
            lookahead: w.lookahead,
            geometric_prior_ratio: w.geometric_prior_ratio,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<SizeSearchConfig> for SizeSearchWire {
    fn from(c: SizeSearchConfig) -> Self {
        SizeSearchWire {
            k: Some(c.k),
            n: Some(c.n),
            kn_ratio: Some(c.kn_ratio()),
            max_m: c.max_m,
            lookahead: c.lookahead,
            geometric_prior_ratio: c.geometric_prior_ratio,
        }
    }
}

/// True when going from m to m + 1 components gains less than the threshold.
///
/// D₀ values may stand in for D since H(X) cancels in the difference.
/// Exact ties stop. With k = 0 and no prior the threshold is zero and a
/// nonnegative gain never stops the search.
pub fn stop_predicate(d_m: f64, d_m1: f64, m: usize, cfg: &SizeSearchConfig) -> bool {
    let threshold = cfg.threshold(m);
    if threshold == 0.0 {
        return false;
    }
    d_m - d_m1 <= threshold
}

/// Likelihood-style accuracy exp(−n·D₀).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub log_value: f64,
    /// None when exp(log_value) is not representable.
    pub value: Option<f64>,
    pub overflow: bool,
}

pub fn accuracy_measure(d0: f64, n: f64) -> Result<Accuracy> {
    if !d0.is_finite() || !(n > 0.0 && n.is_finite()) {
        return Err(Error::validation("accuracy needs finite D₀ and positive n"));
    }
    let log_value = -n * d0;
    let value = log_value.exp();
    let representable = value.is_finite() && (value > 0.0 || log_value == f64::NEG_INFINITY);
    Ok(Accuracy {
        log_value,
        value: representable.then_some(value),
        overflow: !representable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSearchResult {
    pub chosen_m: usize,
    pub reports: BTreeMap<usize, FitReport>,
    pub flags: Vec<String>,
}

impl SizeSearchResult {
    pub fn chosen(&self) -> &FitReport {
        &self.reports[&self.chosen_m]
    }
}

/// Splits the widest component into two halves at μ ± σ/2.
pub fn split_widest(gm: &GaussianMixture) -> Result<GaussianMixture> {
    let comps = gm.components();
    let widest = (0..comps.len())
        .max_by(|&a, &b| comps[a].var.total_cmp(&comps[b].var))
        .ok_or_else(|| Error::validation("cannot split an empty mixture"))?;
    let mut out = Vec::with_capacity(comps.len() + 1);
    for (i, c) in comps.iter().enumerate() {
        if i == widest {
            let half = 0.5 * c.var.sqrt();
            out.push(Component::new(0.5 * c.p, c.mu - half, c.var));
            out.push(Component::new(0.5 * c.p, c.mu + half, c.var));
        } else {
            out.push(*c);
        }
    }
    GaussianMixture::with_var_floor(out, gm.var_floor())
}

/// Best of the configured start and a split of the size-(m−1) fit.
fn fit_size(
    spec: &DistributionSpec,
    m: usize,
    smaller: Option<&FitReport>,
    em_cfg: &EmConfig,
) -> Result<FitReport> {
    let direct = em_fit(spec, m, em_cfg);
    let split = smaller.map(|r| {
        split_widest(&r.mixture).and_then(|start| {
            let cfg = EmConfig {
                init_strategy: InitStrategy::User { mixture: start },
                ..em_cfg.clone()
            };
            em_fit(spec, m, &cfg)
        })
    });
    match (direct, split) {
        (Ok(d), Some(Ok(mut s))) => {
            if s.d0() < d.d0() {
                s.flags.insert(0, flags::SPLIT_INIT.into());
                Ok(s)
            } else {
                Ok(d)
            }
        }
        (Ok(d), _) => Ok(d),
        (Err(_), Some(Ok(mut s))) => {
            s.flags.insert(0, flags::SPLIT_INIT.into());
            Ok(s)
        }
        (Err(e), _) => Err(e),
    }
}

/// Fits m = 1, 2, … and stops at the first m whose next `lookahead + 1`
/// increments all satisfy [`stop_predicate`]; increments past `max_m` are
/// not checked. Reaching `max_m` sets the `hit_max_m` flag.
pub fn select_size(spec: &DistributionSpec, em_cfg: &EmConfig, cfg: &SizeSearchConfig) -> Result<SizeSearchResult> {
    cfg.validate()?;
    em_cfg.validate()?;
    let mut reports: BTreeMap<usize, FitReport> = BTreeMap::new();
    let mut flags_out = Vec::new();
    let mut last_good: Option<usize> = None;

    let mut ensure = |m: usize, reports: &mut BTreeMap<usize, FitReport>, flags_out: &mut Vec<String>| -> Result<()> {
        if m > cfg.max_m || reports.contains_key(&m) {
            return Ok(());
        }
        let smaller = last_good.and_then(|g| reports.get(&g));
        match fit_size(spec, m, smaller, em_cfg) {
            Ok(r) => {
                reports.insert(m, r);
                last_good = Some(m);
                Ok(())
            }
            Err(e) if m == 1 => Err(e),
            Err(e) => {
                flags_out.push(format!("{}: m = {m}: {e}", flags::FIT_FAILED));
                Ok(())
            }
        }
    };

    for m in 1..=cfg.max_m {
        let last = (m + cfg.lookahead + 1).min(cfg.max_m);
        for j in m..=last {
            ensure(j, &mut reports, &mut flags_out)?;
        }
        if m == cfg.max_m {
            break;
        }
        let stops = (m..last).all(|j| match (reports.get(&j), reports.get(&(j + 1))) {
            (Some(a), Some(b)) => stop_predicate(a.d0(), b.d0(), j, cfg),
            _ => false,
        });
        if stops && reports.contains_key(&m) {
            return Ok(SizeSearchResult {
                chosen_m: m,
                reports,
                flags: flags_out,
            });
        }
    }
    // The search ran out of sizes: report the largest size that fitted.
    flags_out.push(flags::HIT_MAX_M.into());
    let chosen_m = *reports.keys().next_back().expect("m = 1 always fits or errors");
    Ok(SizeSearchResult {
        chosen_m,
        reports,
        flags: flags_out,
    })
}
