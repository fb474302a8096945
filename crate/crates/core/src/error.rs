use thiserror::Error;

/// Errors raised by the numerical toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Malformed or inconsistent input.
    #[error("validation error: {0}")]
    Validation(String),

    /// A value or distribution lies outside the domain of an operation.
    #[error("domain error: {message}{}", fmt_interval(.interval))]
    Domain {
        message: String,
        interval: Option<(f64, f64)>,
    },

    /// The operation is not defined for this kind of input.
    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// A function could not be evaluated at a point.
    #[error("numerical evaluation failed at x = {location}: {message}")]
    Evaluation { location: f64, message: String },

    /// Adaptive quadrature exhausted its budget.
    #[error("quadrature did not converge (estimate {estimate}, error bound {error_bound})")]
    Quadrature { estimate: f64, error_bound: f64 },

    /// An expectation or moment is infinite.
    #[error("divergent quantity: {0}")]
    Divergence(String),

    /// The mixture density vanishes where responsibilities are requested.
    #[error("mixture density is zero at x = {0}")]
    DegeneratePoint(f64),

    /// An EM update drove a component weight to (numerically) zero.
    #[error("component {index} died (weight {weight:e})")]
    ComponentDeath { index: usize, weight: f64 },

    /// The power search bracket does not contain a usable minimum.
    #[error("bracket error: {0}")]
    Bracket(String),
}

fn fmt_interval(interval: &Option<(f64, f64)>) -> String {
    match interval {
        Some((a, b)) => format!(" (offending interval [{a}, {b}])"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>, interval: Option<(f64, f64)>) -> Self {
        Error::Domain {
            message: msg.into(),
            interval,
        }
    }

    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Evaluation { .. }
                | Error::Quadrature { .. }
                | Error::Divergence(_)
                | Error::DegeneratePoint(_)
                | Error::ComponentDeath { .. }
                | Error::Bracket(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
