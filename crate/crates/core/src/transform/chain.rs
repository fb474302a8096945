use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Powers with |p| below this are evaluated as the logarithm.
pub const LOG_POWER_THRESHOLD: f64 = 1e-8;

/// One monotone step of a transformation chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformStep {
    /// `scale·x + shift`
    Affine { scale: f64, shift: f64 },
    /// `(x − a)/(b − x)`, mapping `[a, b)` onto `[0, ∞)`.
    ScaledOdds { a: f64, b: f64 },
    /// `(x^p − 1)/p`, or `ln x` at `p = 0`; positive inputs only.
    BoxCox { p: f64 },
}

fn is_log(p: f64) -> bool {
    p.abs() < LOG_POWER_THRESHOLD
}

impl TransformStep {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TransformStep::Affine { scale, shift } => {
                if !scale.is_finite() || !shift.is_finite() || scale == 0.0 {
                    return Err(Error::validation("affine step needs a finite nonzero scale"));
                }
            }
            TransformStep::ScaledOdds { a, b } => {
                if !(a.is_finite() && b.is_finite() && a < b) {
                    return Err(Error::validation("scaled odds step needs finite a < b"));
                }
            }
            TransformStep::BoxCox { p } => {
                if !p.is_finite() {
                    return Err(Error::validation("box-cox power must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Open/closed domain as an interval `(lo, hi)`.
    pub fn domain(&self) -> (f64, f64) {
        match *self {
            TransformStep::Affine { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            TransformStep::ScaledOdds { a, b } => (a, b),
            TransformStep::BoxCox { .. } => (0.0, f64::INFINITY),
        }
    }

    /// Image of the domain (closure endpoints).
    pub fn image(&self) -> (f64, f64) {
        match *self {
            TransformStep::Affine { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            TransformStep::ScaledOdds { .. } => (0.0, f64::INFINITY),
            TransformStep::BoxCox { p } if is_log(p) => (f64::NEG_INFINITY, f64::INFINITY),
            TransformStep::BoxCox { p } if p > 0.0 => (-1.0 / p, f64::INFINITY),
            TransformStep::BoxCox { p } => (f64::NEG_INFINITY, -1.0 / p),
        }
    }

    pub fn is_increasing(&self) -> bool {
        !matches!(*self, TransformStep::Affine { scale, .. } if scale < 0.0)
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        match *self {
            TransformStep::Affine { scale, shift } => Ok(scale * x + shift),
            TransformStep::ScaledOdds { a, b } => {
                if !(x >= a && x < b) {
                    return Err(Error::domain(
                        format!("scaled odds applied to {x} outside [{a}, {b})"),
                        Some((a, b)),
                    ));
                }
                Ok((x - a) / (b - x))
            }
            TransformStep::BoxCox { p } => {
                if !(x > 0.0) {
                    return Err(Error::domain(
                        format!("box-cox applied to non-positive value {x}"),
                        Some((0.0, f64::INFINITY)),
                    ));
                }
                Ok(box_cox(x, p))
            }
        }
    }

    /// `apply` extended continuously to the closed domain, including ±∞.
    pub fn apply_limit(&self, x: f64) -> f64 {
        match *self {
            TransformStep::Affine { scale, shift } => scale * x + shift,
            TransformStep::ScaledOdds { a, b } => {
                if x >= b {
                    f64::INFINITY
                } else if x <= a {
                    0.0
                } else {
                    (x - a) / (b - x)
                }
            }
            TransformStep::BoxCox { p } => {
                if x <= 0.0 {
                    self.image().0
                } else if x == f64::INFINITY {
                    self.image().1
                } else {
                    box_cox(x, p)
                }
            }
        }
    }

    pub fn invert(&self, y: f64) -> Result<f64> {
        match *self {
            TransformStep::Affine { scale, shift } => Ok((y - shift) / scale),
            TransformStep::ScaledOdds { a, b } => {
                if !(y >= 0.0 && y.is_finite()) {
                    return Err(Error::domain(
                        format!("scaled odds inverse needs y >= 0, got {y}"),
                        Some((0.0, f64::INFINITY)),
                    ));
                }
                Ok((a + b * y) / (1.0 + y))
            }
            TransformStep::BoxCox { p } => {
                if is_log(p) {
                    return Ok(y.exp());
                }
                let base = p * y;
                if !(base > -1.0) {
                    let (lo, hi) = self.image();
                    return Err(Error::domain(format!("box-cox inverse undefined at {y}"), Some((lo, hi))));
                }
                Ok((base.ln_1p() / p).exp())
            }
        }
    }

    /// `invert` extended to the closure of the image.
    pub fn invert_limit(&self, y: f64) -> f64 {
        let (lo, hi) = self.image();
        match *self {
            TransformStep::Affine { .. } => self.invert(y).unwrap_or(f64::NAN),
            TransformStep::ScaledOdds { a, b } => {
                if y == f64::INFINITY {
                    b
                } else if y <= 0.0 {
                    a
                } else {
                    (a + b * y) / (1.0 + y)
                }
            }
            TransformStep::BoxCox { .. } => {
                if y <= lo {
                    0.0
                } else if y >= hi {
                    f64::INFINITY
                } else {
                    self.invert(y).unwrap_or(f64::NAN)
                }
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.ln_derivative(x).exp()
    }

    /// ln t′(x) for an increasing step.
    pub fn ln_derivative(&self, x: f64) -> f64 {
        match *self {
            TransformStep::Affine { scale, .. } => scale.abs().ln(),
            TransformStep::ScaledOdds { a, b } => (b - a).ln() - 2.0 * (b - x).ln(),
            TransformStep::BoxCox { p } => (p - 1.0) * x.ln(),
        }
    }
}

/// t_p(x) with expm1-based evaluation near p = 0.
fn box_cox(x: f64, p: f64) -> f64 {
    let l = x.ln();
    if is_log(p) {
        l
    } else {
        (p * l).exp_m1() / p
    }
}

/// Record that a Box-Cox power was rounded to a nearby interpretable value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundingNote {
    pub step: usize,
    pub rounded_from: f64,
    /// The plain power `x^p` may be substituted (p ≠ 0).
    pub simple_power: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChainWire {
    steps: Vec<TransformStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    annotations: Vec<RoundingNote>,
}

/// Ordered composition of monotone steps, applied first to last.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "ChainWire", into = "ChainWire")]
pub struct TransformChain {
    steps: Vec<TransformStep>,
    annotations: Vec<RoundingNote>,
}

impl TryFrom<ChainWire> for TransformChain {
    type Error = Error;

    fn try_from(w: ChainWire) -> Result<Self> {
        let mut chain = TransformChain::new(w.steps)?;
        chain.annotations = w.annotations;
        Ok(chain)
    }
}

impl From<TransformChain> for ChainWire {
    fn from(c: TransformChain) -> Self {
        ChainWire {
            steps: c.steps,
            annotations: c.annotations,
        }
    }
}

impl TransformChain {
    pub fn new(steps: Vec<TransformStep>) -> Result<Self> {
        for s in &steps {
            s.validate()?;
        }
        Ok(TransformChain {
            steps,
            annotations: Vec::new(),
        })
    }

    pub fn identity() -> Self {
        TransformChain::default()
    }

    pub fn single(step: TransformStep) -> Result<Self> {
        TransformChain::new(vec![step])
    }

    pub fn steps(&self) -> &[TransformStep] {
        &self.steps
    }

    pub fn annotations(&self) -> &[RoundingNote] {
        &self.annotations
    }

    pub fn is_identity(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn then(mut self, step: TransformStep) -> Result<Self> {
        step.validate()?;
        self.steps.push(step);
        Ok(self)
    }

    pub(crate) fn annotate(&mut self, note: RoundingNote) {
        self.annotations.push(note);
    }

    /// `self` followed by `next`.
    pub fn compose(&self, next: &TransformChain) -> TransformChain {
        let offset = self.steps.len();
        let mut steps = self.steps.clone();
        steps.extend_from_slice(&next.steps);
        let mut annotations = self.annotations.clone();
        annotations.extend(next.annotations.iter().map(|n| RoundingNote {
            step: n.step + offset,
            ..*n
        }));
        TransformChain { steps, annotations }
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        self.steps.iter().try_fold(x, |v, s| s.apply(v))
    }

    pub fn invert(&self, y: f64) -> Result<f64> {
        self.steps.iter().rev().try_fold(y, |v, s| s.invert(v))
    }

    pub fn apply_limit(&self, x: f64) -> f64 {
        self.steps.iter().fold(x, |v, s| s.apply_limit(v))
    }

    pub fn invert_limit(&self, y: f64) -> f64 {
        self.steps.iter().rev().fold(y, |v, s| s.invert_limit(v))
    }

    /// ln |dt/dx| of the whole chain at `x` (chain rule through the steps).
    pub fn ln_derivative(&self, x: f64) -> Result<f64> {
        let mut v = x;
        let mut total = 0.0;
        for s in &self.steps {
            total += s.ln_derivative(v);
            v = s.apply(v)?;
        }
        Ok(total)
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        Ok(self.ln_derivative(x)?.exp())
    }

    /// Interval of inputs on which every step is defined, in the coordinates
    /// of the chain's input.
    pub fn domain(&self) -> (f64, f64) {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for (i, step) in self.steps.iter().enumerate() {
            let (mut a, mut b) = step.domain();
            for prev in self.steps[..i].iter().rev() {
                let (ilo, ihi) = prev.image();
                a = prev.invert_limit(a.clamp(ilo, ihi));
                b = prev.invert_limit(b.clamp(ilo, ihi));
            }
            lo = lo.max(a);
            hi = hi.min(b);
        }
        (lo, hi)
    }

    pub fn is_increasing(&self) -> bool {
        self.steps.iter().all(TransformStep::is_increasing)
    }
}
