//! End-to-end procedure: precondition, optimal power, pushforward, fit.
//! Also the read-only queries the command line and service expose.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distribution::{DistributionSpec, Moments};
use crate::emfit::{em_fit, fast_fit_two, EmConfig, FitReport};
use crate::error::{Error, Result};
use crate::mixture::{moment_match_gaussian, GaussianMixture};
use crate::quadrature::QuadratureConfig;
use crate::sizesearch::{select_size, SizeSearchConfig};
use crate::transform::{
    append_power, optimal_power, precondition, pushforward, transform_gap, Bounds, PowerSearchConfig, TransformChain,
};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TransformMode {
    #[default]
    None,
    /// Precondition onto [0, ∞) and apply the optimal power.
    Auto,
    Explicit { chain: TransformChain },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FitMode {
    Em { m: usize },
    FastTwo,
    SizeSearch(SizeSearchConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRequest {
    pub spec: DistributionSpec,
    #[serde(default)]
    pub bounds: Option<Bounds>,
    #[serde(default)]
    pub transform: TransformMode,
    pub fit: FitMode,
    #[serde(default)]
    pub em_cfg: EmConfig,
    #[serde(default)]
    pub round_power: bool,
    #[serde(default)]
    pub power_search: PowerSearchConfig,
}

impl PipelineRequest {
    pub fn new(spec: DistributionSpec, fit: FitMode) -> Self {
        PipelineRequest {
            spec,
            bounds: None,
            transform: TransformMode::None,
            fit,
            em_cfg: EmConfig::default(),
            round_power: false,
            power_search: PowerSearchConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.em_cfg.validate()?;
        self.power_search.validate()?;
        if let Some(b) = &self.bounds {
            b.validate()?;
        }
        if let TransformMode::Explicit { chain } = &self.transform {
            if !chain.is_increasing() {
                return Err(Error::validation("an explicit chain must be increasing"));
            }
        }
        match &self.fit {
            FitMode::Em { m } if *m == 0 => Err(Error::validation("m must be at least 1")),
            FitMode::SizeSearch(cfg) => cfg.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validate,
    Precondition,
    PowerSearch,
    Pushforward,
    Fit,
    SizeSearch,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Validate => "validate",
            Stage::Precondition => "precondition",
            Stage::PowerSearch => "power_search",
            Stage::Pushforward => "pushforward",
            Stage::Fit => "fit",
            Stage::SizeSearch => "size_search",
        };
        f.write_str(name)
    }
}

/// A module error tagged with the pipeline stage that raised it.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub stage: Stage,
    pub error: Error,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.error)
    }
}

impl std::error::Error for PipelineError {}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|error| PipelineError { stage, error })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub chain_used: TransformChain,
    pub p_star: Option<f64>,
    pub fit_reports: BTreeMap<usize, FitReport>,
    pub chosen_m: Option<usize>,
    /// Named scalars: entropy of the input and the gap to the
    /// moment-matching Gaussian before and after the transform.
    pub diagnostics: Vec<(String, f64)>,
    pub flags: Vec<String>,
}

impl PipelineResult {
    /// The report for the chosen size, or the only report.
    pub fn report(&self) -> Option<&FitReport> {
        match self.chosen_m {
            Some(m) => self.fit_reports.get(&m),
            None => self.fit_reports.values().next(),
        }
    }
}

/// Runs the request. Fitting happens on the transformed variable.
pub fn run_pipeline(req: &PipelineRequest) -> std::result::Result<PipelineResult, PipelineError> {
    req.validate().at(Stage::Validate)?;
    let quad = &req.em_cfg.quadrature;
    let mut diagnostics = Vec::new();
    let mut flags = Vec::new();
    if !req.spec.has_atoms() {
        if let Ok(h) = req.spec.entropy(quad) {
            diagnostics.push(("entropy".to_string(), h));
        }
    }
    let before = transform_gap(&req.spec, &TransformChain::identity(), quad);

    let (chain, p_star) = match &req.transform {
        TransformMode::None => (TransformChain::identity(), None),
        TransformMode::Explicit { chain } => (chain.clone(), None),
        TransformMode::Auto => {
            let pre = precondition(&req.spec, req.bounds).at(Stage::Precondition)?;
            let positive = pushforward(&req.spec, &pre).at(Stage::Pushforward)?;
            let found = optimal_power(&positive, &req.power_search, quad).at(Stage::PowerSearch)?;
            let round = req.round_power.then_some(&req.power_search);
            let chain = append_power(pre, found.p_star, round).at(Stage::PowerSearch)?;
            (chain, Some(found.p_star))
        }
    };
    let y = pushforward(&req.spec, &chain).at(Stage::Pushforward)?;

    match before {
        Ok(g) => diagnostics.push(("gap_before_transform".to_string(), g)),
        Err(e) => flags.push(format!("gap_before_transform unavailable: {e}")),
    }
    if !chain.is_identity() {
        match transform_gap(&req.spec, &chain, quad) {
            Ok(g) => diagnostics.push(("gap_after_transform".to_string(), g)),
            Err(e) => flags.push(format!("gap_after_transform unavailable: {e}")),
        }
    }

    let mut fit_reports = BTreeMap::new();
    let chosen_m = match &req.fit {
        FitMode::Em { m } => {
            fit_reports.insert(*m, em_fit(&y, *m, &req.em_cfg).at(Stage::Fit)?);
            None
        }
        FitMode::FastTwo => {
            fit_reports.insert(2, fast_fit_two(&y, &req.em_cfg).at(Stage::Fit)?);
            None
        }
        FitMode::SizeSearch(cfg) => {
            let out = select_size(&y, &req.em_cfg, cfg).at(Stage::SizeSearch)?;
            flags.extend(out.flags);
            fit_reports = out.reports;
            Some(out.chosen_m)
        }
    };
    Ok(PipelineResult {
        chain_used: chain,
        p_star,
        fit_reports,
        chosen_m,
        diagnostics,
        flags,
    })
}

/// Summary statistics of a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub support: (f64, f64),
    pub atom_mass: f64,
    pub entropy: Option<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    /// Raw and central moments up to the highest finite order ≤ 4.
    pub moments: Option<Moments>,
    /// Relative entropy to the moment-matching Gaussian.
    pub gap_to_gaussian: Option<f64>,
    pub quartiles: [f64; 3],
}

pub fn analyze(spec: &DistributionSpec, cfg: &QuadratureConfig) -> Result<Analysis> {
    cfg.validate()?;
    let moments = (1..=4).rev().find_map(|k| spec.moments(k, cfg).ok());
    let mean = moments.as_ref().map(Moments::mean);
    let variance = moments.as_ref().and_then(Moments::variance);
    let entropy = match spec.has_atoms() {
        true => None,
        false => spec.entropy(cfg).ok(),
    };
    let gap_to_gaussian = match (entropy, variance) {
        (Some(_), Some(_)) => transform_gap(spec, &TransformChain::identity(), cfg).ok(),
        _ => None,
    };
    Ok(Analysis {
        support: spec.support(),
        atom_mass: spec.all_atoms().iter().fold(0.0, |acc, a| acc + a.mass),
        entropy,
        mean,
        variance,
        moments,
        gap_to_gaussian,
        quartiles: [spec.quantile(0.25)?, spec.quantile(0.5)?, spec.quantile(0.75)?],
    })
}

/// Evaluation points: explicit, or an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Points(Vec<f64>),
    Range { lo: f64, hi: f64, points: usize },
}

/// Default number of plotting points.
pub const DEFAULT_GRID_POINTS: usize = 201;

impl Grid {
    /// 201 points between the 0.1% and 99.9% quantiles.
    pub fn default_for(spec: &DistributionSpec) -> Result<Grid> {
        Ok(Grid::Range {
            lo: spec.quantile(1e-3)?,
            hi: spec.quantile(1.0 - 1e-3)?,
            points: DEFAULT_GRID_POINTS,
        })
    }

    pub fn points(&self) -> Result<Vec<f64>> {
        match self {
            Grid::Points(xs) => {
                if xs.iter().any(|x| !x.is_finite()) {
                    return Err(Error::validation("grid points must be finite"));
                }
                Ok(xs.clone())
            }
            Grid::Range { lo, hi, points } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) || *points < 2 {
                    return Err(Error::validation("grid range needs finite lo ≤ hi and at least 2 points"));
                }
                let h = (hi - lo) / (*points - 1) as f64;
                Ok((0..*points).map(|i| if i + 1 == *points { *hi } else { lo + h * i as f64 }).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub spec: DistributionSpec,
    #[serde(default)]
    pub grid: Option<Grid>,
    /// A fitted mixture to overlay.
    #[serde(default)]
    pub mixture: Option<GaussianMixture>,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

/// Density and CDF curves aligned with `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    pub density: Vec<f64>,
    pub cdf: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResult {
    pub x: Vec<f64>,
    pub spec: Curves,
    pub mixture: Option<Curves>,
    /// Moment-matching Gaussian, when the variance is finite.
    pub gaussian: Option<Curves>,
}

fn curves(xs: &[f64], density: impl Fn(f64) -> Result<f64>, cdf: impl Fn(f64) -> Result<f64>) -> Result<Curves> {
    Ok(Curves {
        density: xs.iter().map(|&x| density(x)).collect::<Result<_>>()?,
        cdf: xs.iter().map(|&x| cdf(x)).collect::<Result<_>>()?,
    })
}

pub fn evaluate(req: &EvaluateRequest) -> Result<EvaluateResult> {
    req.quadrature.validate()?;
    let grid = match &req.grid {
        Some(g) => g.clone(),
        None => Grid::default_for(&req.spec)?,
    };
    let x = grid.points()?;
    let spec = curves(&x, |t| req.spec.density(t), |t| req.spec.cdf(t))?;
    let mixture = req
        .mixture
        .as_ref()
        .map(|gm| curves(&x, |t| Ok(gm.density(t)), |t| Ok(gm.cdf(t))))
        .transpose()?;
    let gaussian = match moment_match_gaussian(&req.spec, &req.quadrature) {
        Ok(g) => Some(curves(&x, |t| Ok(g.density(t)), |t| Ok(g.cdf(t)))?),
        Err(_) => None,
    };
    Ok(EvaluateResult {
        x,
        spec,
        mixture,
        gaussian,
    })
}
