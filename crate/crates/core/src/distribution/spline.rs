//! CDF through assessed points: a shape-preserving cubic Hermite interpolant
//! with either linear (bounded) or exponential tails.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// Extend the end slopes linearly until the CDF reaches 0 and 1.
    #[default]
    Bounded,
    /// Exponential tails matching the end density and the remaining mass.
    ExponentialTails,
}

/// Monotone cubic interpolant of assessed cumulative points.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCdf {
    xs: Vec<f64>,
    fs: Vec<f64>,
    slopes: Vec<f64>,
    tail_policy: TailPolicy,
    n_equiv: u32,
}

impl SplineCdf {
    /// Builds the interpolant. Requires at least three points, strictly
    /// increasing in both coordinates with every F in (0, 1).
    pub fn new(points: &[(f64, f64)], n_equiv: Option<u32>, tail_policy: TailPolicy) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::validation(format!(
                "spline needs at least 3 assessed points, got {}",
                points.len()
            )));
        }
        let mut offending = Vec::new();
        for (i, &(x, f)) in points.iter().enumerate() {
            if !x.is_finite() || !f.is_finite() || f <= 0.0 || f >= 1.0 {
                offending.push(format!("#{i} ({x}, {f}) outside (0,1) or non-finite"));
            }
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) || !(w[1].1 > w[0].1) {
                offending.push(format!(
                    "#{i}->#{} ({}, {}) -> ({}, {}) not strictly increasing",
                    i + 1,
                    w[0].0,
                    w[0].1,
                    w[1].0,
                    w[1].1
                ));
            }
        }
        if !offending.is_empty() {
            return Err(Error::validation(format!(
                "assessed points are not a valid CDF: {}",
                offending.join("; ")
            )));
        }
        let n_equiv = n_equiv.unwrap_or(points.len() as u32);
        if n_equiv == 0 {
            return Err(Error::validation("n_equiv must be positive"));
        }

        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let fs: Vec<f64> = points.iter().map(|p| p.1).collect();
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (fs[i + 1] - fs[i]) / h[i]).collect();

        let mut slopes = vec![0.0; n];
        for k in 1..n - 1 {
            // Fritsch–Butland weighted harmonic mean; secants are all positive.
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            slopes[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
        // End slopes equal the end secants so the tails join with a continuous density.
        slopes[0] = delta[0];
        slopes[n - 1] = delta[n - 2];

        Ok(SplineCdf {
            xs,
            fs,
            slopes,
            tail_policy,
            n_equiv,
        })
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.xs.iter().copied().zip(self.fs.iter().copied()).collect()
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn tail_policy(&self) -> TailPolicy {
        self.tail_policy
    }

    pub fn n_equiv(&self) -> u32 {
        self.n_equiv
    }

    fn last(&self) -> usize {
        self.xs.len() - 1
    }

    /// Support of the distribution; infinite sides for exponential tails.
    pub fn support(&self) -> (f64, f64) {
        match self.tail_policy {
            TailPolicy::Bounded => {
                let n = self.last();
                (
                    self.xs[0] - self.fs[0] / self.slopes[0],
                    self.xs[n] + (1.0 - self.fs[n]) / self.slopes[n],
                )
            }
            TailPolicy::ExponentialTails => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn interval(&self, x: f64) -> usize {
        let i = self.xs.partition_point(|&k| k <= x);
        i.saturating_sub(1).min(self.last() - 1)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let n = self.last();
        if x < self.xs[0] {
            let (f0, d0) = (self.fs[0], self.slopes[0]);
            return match self.tail_policy {
                TailPolicy::Bounded => (f0 + d0 * (x - self.xs[0])).max(0.0),
                TailPolicy::ExponentialTails => f0 * (d0 / f0 * (x - self.xs[0])).exp(),
            };
        }
        if x > self.xs[n] {
            let (fnn, dn) = (self.fs[n], self.slopes[n]);
            return match self.tail_policy {
                TailPolicy::Bounded => (fnn + dn * (x - self.xs[n])).min(1.0),
                TailPolicy::ExponentialTails => {
                    let rest = 1.0 - fnn;
                    1.0 - rest * (-dn / rest * (x - self.xs[n])).exp()
                }
            };
        }
        let i = self.interval(x);
        if x == self.xs[i + 1] {
            return self.fs[i + 1];
        }
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (2.0 * t3 - 3.0 * t2 + 1.0) * self.fs[i]
            + (t3 - 2.0 * t2 + t) * h * self.slopes[i]
            + (-2.0 * t3 + 3.0 * t2) * self.fs[i + 1]
            + (t3 - t2) * h * self.slopes[i + 1];
        value.clamp(self.fs[i], self.fs[i + 1])
    }

    pub fn density(&self, x: f64) -> f64 {
        let n = self.last();
        if x < self.xs[0] {
            let (f0, d0) = (self.fs[0], self.slopes[0]);
            return match self.tail_policy {
                TailPolicy::Bounded => {
                    if f0 + d0 * (x - self.xs[0]) >= 0.0 {
                        d0
                    } else {
                        0.0
                    }
                }
                TailPolicy::ExponentialTails => d0 * (d0 / f0 * (x - self.xs[0])).exp(),
            };
        }
        if x > self.xs[n] {
            let (fnn, dn) = (self.fs[n], self.slopes[n]);
            return match self.tail_policy {
                TailPolicy::Bounded => {
                    if fnn + dn * (x - self.xs[n]) <= 1.0 {
                        dn
                    } else {
                        0.0
                    }
                }
                TailPolicy::ExponentialTails => dn * (-dn / (1.0 - fnn) * (x - self.xs[n])).exp(),
            };
        }
        let i = self.interval(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let value = (6.0 * t2 - 6.0 * t) * (self.fs[i] - self.fs[i + 1]) / h
            + (3.0 * t2 - 4.0 * t + 1.0) * self.slopes[i]
            + (3.0 * t2 - 2.0 * t) * self.slopes[i + 1];
        value.max(0.0)
    }

    /// Inverse CDF for `q` in (0, 1).
    pub fn quantile(&self, q: f64) -> f64 {
        let n = self.last();
        if q <= self.fs[0] {
            let (x0, f0, d0) = (self.xs[0], self.fs[0], self.slopes[0]);
            return match self.tail_policy {
                TailPolicy::Bounded => x0 - (f0 - q) / d0,
                TailPolicy::ExponentialTails => x0 + (q / f0).ln() * f0 / d0,
            };
        }
        if q >= self.fs[n] {
            let (xn, fnn, dn) = (self.xs[n], self.fs[n], self.slopes[n]);
            return match self.tail_policy {
                TailPolicy::Bounded => xn + (q - fnn) / dn,
                TailPolicy::ExponentialTails => {
                    let rest = 1.0 - fnn;
                    xn - ((1.0 - q) / rest).ln() * rest / dn
                }
            };
        }
        let i = self.fs.partition_point(|&f| f <= q).saturating_sub(1).min(n - 1);
        // Bisection with Newton steps inside [x_i, x_{i+1}].
        let (mut lo, mut hi) = (self.xs[i], self.xs[i + 1]);
        let mut x = lo + (q - self.fs[i]) / (self.fs[i + 1] - self.fs[i]) * (hi - lo);
        for _ in 0..100 {
            let r = self.cdf(x) - q;
            if r == 0.0 {
                return x;
            }
            if r > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.density(x);
            let newton = x - r / d;
            x = if d > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                break;
            }
        }
        x
    }
}
