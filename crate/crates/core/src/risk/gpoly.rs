use serde::{Deserialize, Serialize};

use super::RiskError;

/// Slack used when checking slope ordering and bounds on computed knot values.
pub const SLOPE_TOLERANCE: f64 = 1e-9;

/// An increasing convex piecewise-linear function on [0, cap].
///
/// It is constant at `values[0]` left of 0 and continues linearly with slope
/// `max_slope` right of `cap`. On an equidistant grid this is a point of the
/// knot-value polytope used by the outer search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPoly {
    cap: f64,
    knots: Vec<f64>,
    values: Vec<f64>,
    max_slope: f64,
}

impl GPoly {
    /// Equidistant knots `s_k = k·cap/(m−1)`. With `cap == 0` the grid
    /// collapses to the single knot 0 carrying `values[0]`.
    pub fn on_grid(cap: f64, values: Vec<f64>, max_slope: f64) -> Result<Self, RiskError> {
        if !(cap >= 0.0) || !cap.is_finite() {
            return Err(RiskError::InvalidGPoly(format!("cap {cap}")));
        }
        if cap == 0.0 {
            let y0 = *values
                .first()
                .ok_or_else(|| RiskError::InvalidGPoly("no values".into()))?;
            return Self::with_knots(vec![0.0], vec![y0], max_slope);
        }
        if values.len() < 2 {
            return Err(RiskError::InvalidGPoly("need at least two knots".into()));
        }
        let knots = equidistant_knots(cap, values.len());
        Self::with_knots(knots, values, max_slope)
    }

    /// Arbitrary knots `0 = s_1 < … < s_m = cap`.
    pub fn with_knots(
        knots: Vec<f64>,
        values: Vec<f64>,
        max_slope: f64,
    ) -> Result<Self, RiskError> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(RiskError::InvalidGPoly(format!(
                "{} knots, {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots[0] != 0.0 {
            return Err(RiskError::InvalidGPoly("first knot must be 0".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(RiskError::InvalidGPoly(
                "knots must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) || !(max_slope >= 0.0) || !max_slope.is_finite() {
            return Err(RiskError::InvalidGPoly(
                "non-finite value or bad slope bound".into(),
            ));
        }
        Ok(GPoly {
            cap: *knots.last().unwrap(),
            knots,
            values,
            max_slope,
        })
    }

    /// The identity on [0, cap] with unit slope beyond.
    pub fn identity(cap: f64) -> Result<Self, RiskError> {
        Self::on_grid(cap, vec![0.0, cap], 1.0)
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_slope(&self) -> f64 {
        self.max_slope
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    pub fn slopes(&self) -> Vec<f64> {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(s, y)| (y[1] - y[0]) / (s[1] - s[0]))
            .collect()
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return self.values[0];
        }
        if s >= self.cap {
            return self.values[self.values.len() - 1] + self.max_slope * (s - self.cap);
        }
        let k = self.knots.partition_point(|&x| x <= s) - 1;
        let (s0, s1) = (self.knots[k], self.knots[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        y0 + (y1 - y0) * ((s - s0) / (s1 - s0))
    }

    /// Returns `Ok(())` when the knot values are increasing, convex, have
    /// slopes in `[0, max_slope]` and `values[0] ∈ [0, cap]`.
    pub fn check_feasible(&self) -> Result<(), RiskError> {
        let y0 = self.values[0];
        if y0 < -SLOPE_TOLERANCE || y0 > self.cap + SLOPE_TOLERANCE {
            return Err(RiskError::InvalidGPoly(format!(
                "intercept {y0} outside [0, {}]",
                self.cap
            )));
        }
        self.check_shape()
    }

    /// Shape constraints only: slopes non-negative, increasing, bounded.
    pub fn check_shape(&self) -> Result<(), RiskError> {
        let slopes = self.slopes();
        let mut prev = 0.0;
        for (k, &c) in slopes.iter().enumerate() {
            if c < prev - SLOPE_TOLERANCE {
                return Err(RiskError::InvalidGPoly(format!(
                    "slope {k} = {c} below preceding slope {prev}"
                )));
            }
            if c > self.max_slope + SLOPE_TOLERANCE {
                return Err(RiskError::InvalidGPoly(format!(
                    "slope {k} = {c} above bound {}",
                    self.max_slope
                )));
            }
            prev = c;
        }
        Ok(())
    }
}

pub fn equidistant_knots(cap: f64, m: usize) -> Vec<f64> {
    let h = cap / (m - 1) as f64;
    (0..m)
        .map(|k| if k + 1 == m { cap } else { k as f64 * h })
        .collect()
}
