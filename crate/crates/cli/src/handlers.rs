//! Request handling shared by the command line and the HTTP service, so
//! both produce the same bytes for the same request.

use std::fmt;

use mogfit_core::json::{to_canonical_string, to_canonical_string_pretty};
use mogfit_core::pipeline::{analyze, evaluate, EvaluateRequest};
use mogfit_core::transform::{optimal_power, transform_gap, PowerSearchConfig};
use mogfit_core::{
    precondition, pushforward, run_pipeline, spline_from_points, Bounds, DistributionSpec, Error, PipelineError,
    PipelineRequest, QuadratureConfig, TailPolicy, TransformChain,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Environment variable overriding the default quadrature tolerance.
pub const QUADRATURE_TOL_ENV: &str = "MOGFIT_QUADRATURE_TOL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Bad input: exit code 2, HTTP 400.
    Validation,
    /// The numerics failed: exit code 3, HTTP 422.
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolError {
    pub kind: ErrorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub message: String,
}

impl ToolError {
    pub fn validation(message: impl Into<String>) -> Self {
        ToolError {
            kind: ErrorKind::Validation,
            stage: None,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical => 3,
        }
    }

    /// `{"error": {...}}` in canonical form.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Envelope<'a> {
            error: &'a ToolError,
        }
        to_canonical_string(&Envelope { error: self }).expect("error envelope serializes")
    }
}

impl fmt::Display for ToolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            ErrorKind::Validation => "validation",
            ErrorKind::Numerical => "numerical",
        };
        match &self.stage {
            Some(stage) => write!(f, "{kind} error at stage {stage}: {}", self.message),
            None => write!(f, "{kind} error: {}", self.message),
        }
    }
}

impl std::error::Error for ToolError {}

impl From<Error> for ToolError {
    fn from(e: Error) -> Self {
        ToolError {
            kind: if e.is_numerical() { ErrorKind::Numerical } else { ErrorKind::Validation },
            stage: None,
            message: e.to_string(),
        }
    }
}

impl From<PipelineError> for ToolError {
    fn from(e: PipelineError) -> Self {
        ToolError {
            stage: Some(e.stage.to_string()),
            ..ToolError::from(e.error)
        }
    }
}

/// Parse failures report the line and column of the offending text.
pub fn malformed(e: &serde_json::Error) -> ToolError {
    let what = match e.classify() {
        serde_json::error::Category::Data => "invalid request",
        _ => "malformed JSON",
    };
    ToolError::validation(format!("{what} at line {}, column {}: {e}", e.line(), e.column()))
}

/// Quadrature settings implied by the environment: the variable sets the
/// relative tolerance and an absolute tolerance ten times smaller.
pub fn quadrature_from_env() -> Result<Option<QuadratureConfig>, ToolError> {
    match std::env::var(QUADRATURE_TOL_ENV) {
        Ok(raw) => {
            let tol: f64 = raw
                .trim()
                .parse()
                .map_err(|_| ToolError::validation(format!("{QUADRATURE_TOL_ENV} is not a number: {raw:?}")))?;
            let cfg = QuadratureConfig {
                rel_tol: tol,
                abs_tol: tol / 10.0,
                ..QuadratureConfig::default()
            };
            cfg.validate()?;
            Ok(Some(cfg))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(ToolError::validation(format!("{QUADRATURE_TOL_ENV}: {e}"))),
    }
}

/// Fills tolerances the request leaves unset at `path` from `env`.
fn apply_quadrature_default(value: &mut Value, path: &[&str], env: &QuadratureConfig) {
    let Some(root) = value.as_object_mut() else { return };
    let mut node = root;
    for key in path {
        let entry = node.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
        let Some(next) = entry.as_object_mut() else { return };
        node = next;
    }
    node.entry("rel_tol").or_insert(env.rel_tol.into());
    node.entry("abs_tol").or_insert(env.abs_tol.into());
}

fn parse_with_defaults<T: for<'de> Deserialize<'de>>(
    body: &str,
    quadrature_path: &[&str],
    env: Option<&QuadratureConfig>,
) -> Result<T, ToolError> {
    let mut value: Value = serde_json::from_str(body).map_err(|e| malformed(&e))?;
    if let Some(env) = env {
        apply_quadrature_default(&mut value, quadrature_path, env);
    }
    serde_json::from_value(value).map_err(|e| ToolError::validation(format!("invalid request: {e}")))
}

fn render(value: &impl Serialize, pretty: bool) -> Result<String, ToolError> {
    let out = if pretty { to_canonical_string_pretty(value) } else { to_canonical_string(value) };
    out.map(|s| s + "\n").map_err(|e| ToolError::validation(format!("cannot serialize result: {e}")))
}

pub fn parse_pipeline(body: &str, env: Option<&QuadratureConfig>) -> Result<PipelineRequest, ToolError> {
    parse_with_defaults(body, &["em_cfg", "quadrature"], env)
}

pub fn pipeline(req: &PipelineRequest, pretty: bool) -> Result<String, ToolError> {
    render(&run_pipeline(req)?, pretty)
}

pub fn parse_spec(body: &str) -> Result<DistributionSpec, ToolError> {
    serde_json::from_str(body).map_err(|e| malformed(&e))
}

/// Body of `/v1/spline` and input of `assess-spline`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SplineRequest {
    pub points: Vec<(f64, f64)>,
    #[serde(default)]
    pub n_equiv: Option<u32>,
    #[serde(default)]
    pub tail_policy: TailPolicy,
}

pub fn parse_spline(body: &str) -> Result<SplineRequest, ToolError> {
    serde_json::from_str(body).map_err(|e| malformed(&e))
}

pub fn spline(req: &SplineRequest, pretty: bool) -> Result<String, ToolError> {
    render(&spline_from_points(&req.points, req.n_equiv, req.tail_policy)?, pretty)
}

pub fn parse_evaluate(body: &str, env: Option<&QuadratureConfig>) -> Result<EvaluateRequest, ToolError> {
    parse_with_defaults(body, &["quadrature"], env)
}

pub fn evaluate_json(req: &EvaluateRequest, pretty: bool) -> Result<String, ToolError> {
    render(&evaluate(req)?, pretty)
}

pub fn analyze_json(spec: &DistributionSpec, cfg: &QuadratureConfig, pretty: bool) -> Result<String, ToolError> {
    render(&analyze(spec, cfg)?, pretty)
}

/// Output of `mogfit transform`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformReport {
    pub chain: TransformChain,
    pub p_star: f64,
    /// Reduced objective at `p_star`.
    pub objective: f64,
    pub gap_before: Option<f64>,
    pub gap_after: Option<f64>,
}

pub fn transform(
    spec: &DistributionSpec,
    bounds: Option<Bounds>,
    round: bool,
    search: &PowerSearchConfig,
    cfg: &QuadratureConfig,
) -> Result<TransformReport, ToolError> {
    fn stage(name: &'static str) -> impl Fn(Error) -> ToolError {
        move |e| ToolError {
            stage: Some(name.to_string()),
            ..ToolError::from(e)
        }
    }
    let pre = precondition(spec, bounds).map_err(stage("precondition"))?;
    let positive = pushforward(spec, &pre).map_err(stage("pushforward"))?;
    let found = optimal_power(&positive, search, cfg).map_err(stage("power_search"))?;
    let chain = mogfit_core::transform::append_power(pre, found.p_star, round.then_some(search))
        .map_err(stage("power_search"))?;
    Ok(TransformReport {
        p_star: found.p_star,
        objective: found.objective,
        gap_before: transform_gap(spec, &TransformChain::identity(), cfg).ok(),
        gap_after: transform_gap(spec, &chain, cfg).ok(),
        chain,
    })
}

pub fn transform_json(report: &TransformReport, pretty: bool) -> Result<String, ToolError> {
    render(report, pretty)
}

/// Body of `/v1/health`.
pub fn health() -> String {
    format!("{{\"status\":\"ok\",\"version\":\"{}\"}}\n", env!("CARGO_PKG_VERSION"))
}
