use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::special::{normal_ln_pdf, std_normal_cdf, std_normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Uniform,
    Exponential,
    Gaussian,
    Lognormal,
    Beta,
    Triangular,
}

/// Closed-form univariate families.
///
/// Parameter order on the wire: `uniform [lo, hi]`, `exponential [rate]`,
/// `gaussian [mean, variance]`, `lognormal [mu, sigma²]` of the underlying
/// normal, `beta [alpha, beta]`, `triangular [lo, mode, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Analytic {
    Uniform { lo: f64, hi: f64 },
    Exponential { rate: f64 },
    Gaussian { mean: f64, var: f64 },
    Lognormal { mu: f64, var: f64 },
    Beta { alpha: f64, beta: f64 },
    Triangular { lo: f64, mode: f64, hi: f64 },
}

impl Analytic {
    pub fn from_params(family: Family, params: &[f64]) -> Result<Self> {
        let want = match family {
            Family::Exponential => 1,
            Family::Triangular => 3,
            _ => 2,
        };
        if params.len() != want {
            return Err(Error::validation(format!(
                "{family:?} takes {want} parameters, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::validation("distribution parameters must be finite"));
        }
        let a = match family {
            Family::Uniform => Analytic::Uniform {
                lo: params[0],
                hi: params[1],
            },
            Family::Exponential => Analytic::Exponential { rate: params[0] },
            Family::Gaussian => Analytic::Gaussian {
                mean: params[0],
                var: params[1],
            },
            Family::Lognormal => Analytic::Lognormal {
                mu: params[0],
                var: params[1],
            },
            Family::Beta => Analytic::Beta {
                alpha: params[0],
                beta: params[1],
            },
            Family::Triangular => Analytic::Triangular {
                lo: params[0],
                mode: params[1],
                hi: params[2],
            },
        };
        a.validate()?;
        Ok(a)
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Analytic::Uniform { lo, hi } => lo < hi,
            Analytic::Exponential { rate } => rate > 0.0,
            Analytic::Gaussian { var, .. } | Analytic::Lognormal { var, .. } => var > 0.0,
            Analytic::Beta { alpha, beta } => alpha > 0.0 && beta > 0.0,
            Analytic::Triangular { lo, mode, hi } => lo < hi && lo <= mode && mode <= hi,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::validation(format!("invalid parameters for {self:?}")))
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Analytic::Uniform { .. } => Family::Uniform,
            Analytic::Exponential { .. } => Family::Exponential,
            Analytic::Gaussian { .. } => Family::Gaussian,
            Analytic::Lognormal { .. } => Family::Lognormal,
            Analytic::Beta { .. } => Family::Beta,
            Analytic::Triangular { .. } => Family::Triangular,
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            Analytic::Uniform { lo, hi } => vec![lo, hi],
            Analytic::Exponential { rate } => vec![rate],
            Analytic::Gaussian { mean, var } => vec![mean, var],
            Analytic::Lognormal { mu, var } => vec![mu, var],
            Analytic::Beta { alpha, beta } => vec![alpha, beta],
            Analytic::Triangular { lo, mode, hi } => vec![lo, mode, hi],
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Analytic::Uniform { lo, hi } | Analytic::Triangular { lo, hi, .. } => (lo, hi),
            Analytic::Exponential { .. } | Analytic::Lognormal { .. } => (0.0, f64::INFINITY),
            Analytic::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Analytic::Beta { .. } => (0.0, 1.0),
        }
    }

    /// Interior points where the density has a kink.
    pub fn kinks(&self) -> Vec<f64> {
        match *self {
            Analytic::Triangular { mode, .. } => vec![mode],
            _ => Vec::new(),
        }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return f64::NEG_INFINITY;
        }
        match *self {
            Analytic::Uniform { lo, hi } => -(hi - lo).ln(),
            Analytic::Exponential { rate } => rate.ln() - rate * x,
            Analytic::Gaussian { mean, var } => normal_ln_pdf(x, mean, var),
            Analytic::Lognormal { mu, var } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    normal_ln_pdf(x.ln(), mu, var) - x.ln()
                }
            }
            Analytic::Beta { alpha, beta } => {
                let ln_b = ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta);
                (alpha - 1.0) * x.ln() + (beta - 1.0) * (-x).ln_1p() - ln_b
            }
            Analytic::Triangular { lo, mode, hi } => {
                let d = if x < mode {
                    2.0 * (x - lo) / ((hi - lo) * (mode - lo))
                } else if x > mode {
                    2.0 * (hi - x) / ((hi - lo) * (hi - mode))
                } else {
                    2.0 / (hi - lo)
                };
                d.ln()
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        self.ln_density(x).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match *self {
            Analytic::Uniform { lo, hi } => (x - lo) / (hi - lo),
            Analytic::Exponential { rate } => -(-rate * x).exp_m1(),
            Analytic::Gaussian { mean, var } => std_normal_cdf((x - mean) / var.sqrt()),
            Analytic::Lognormal { mu, var } => std_normal_cdf((x.ln() - mu) / var.sqrt()),
            Analytic::Beta { alpha, beta } => beta_reg(alpha, beta, x),
            Analytic::Triangular { lo, mode, hi } => {
                if x <= mode {
                    (x - lo).powi(2) / ((hi - lo) * (mode - lo))
                } else {
                    1.0 - (hi - x).powi(2) / ((hi - lo) * (hi - mode))
                }
            }
        }
    }

    /// Inverse CDF for `q` in (0, 1).
    pub fn quantile(&self, q: f64) -> f64 {
        match *self {
            Analytic::Uniform { lo, hi } => lo + q * (hi - lo),
            Analytic::Exponential { rate } => -(-q).ln_1p() / rate,
            Analytic::Gaussian { mean, var } => mean + var.sqrt() * std_normal_quantile(q),
            Analytic::Lognormal { mu, var } => (mu + var.sqrt() * std_normal_quantile(q)).exp(),
            Analytic::Triangular { lo, mode, hi } => {
                let split = (mode - lo) / (hi - lo);
                if q <= split {
                    lo + (q * (hi - lo) * (mode - lo)).sqrt()
                } else {
                    hi - ((1.0 - q) * (hi - lo) * (hi - mode)).sqrt()
                }
            }
            Analytic::Beta { .. } => {
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < q {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= f64::EPSILON * hi {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }
}
