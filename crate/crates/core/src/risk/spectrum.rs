use serde::{Deserialize, Serialize};

use super::RiskError;

/// Tolerance on the unit-integral condition for caller-supplied spectra.
/// Accepted spectra are rescaled so the integral is one to rounding error.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// A right-continuous, increasing, piecewise-constant spectrum on [0, 1].
///
/// `values[j]` is the weight on `[breakpoints[j], breakpoints[j + 1])`; the
/// value at 1 is the last entry, so the spectrum is bounded and has no jump
/// at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpectrum", into = "RawSpectrum")]
pub struct StepSpectrum {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawSpectrum {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<RawSpectrum> for StepSpectrum {
    type Error = RiskError;

    fn try_from(raw: RawSpectrum) -> Result<Self, Self::Error> {
        StepSpectrum::new(raw.breakpoints, raw.values)
    }
}

impl From<StepSpectrum> for RawSpectrum {
    fn from(s: StepSpectrum) -> Self {
        RawSpectrum {
            breakpoints: s.breakpoints,
            values: s.values,
        }
    }
}

/// Jump locations and ES-mixture weights of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureMeasure {
    pub levels: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MixtureMeasure {
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.levels
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }
}

impl StepSpectrum {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, RiskError> {
        let invalid = |msg: String| Err(RiskError::InvalidSpectrum(msg));
        if values.is_empty() || breakpoints.len() != values.len() + 1 {
            return invalid(format!(
                "need J+1 breakpoints for J values, got {} and {}",
                breakpoints.len(),
                values.len()
            ));
        }
        if breakpoints[0] != 0.0 || *breakpoints.last().unwrap() != 1.0 {
            return invalid("breakpoints must start at 0 and end at 1".into());
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return invalid("breakpoints must be strictly increasing".into());
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return invalid("values must be finite and non-negative".into());
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return invalid("values must be increasing".into());
        }
        let integral: f64 = values
            .iter()
            .zip(breakpoints.windows(2))
            .map(|(v, w)| v * (w[1] - w[0]))
            .sum();
        if (integral - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return invalid(format!("spectrum integrates to {integral}, expected 1"));
        }
        let values = if (integral - 1.0).abs() > 1e-12 {
            values.into_iter().map(|v| v / integral).collect()
        } else {
            values
        };
        Ok(StepSpectrum {
            breakpoints,
            values,
        })
    }

    /// φ ≡ 1, the spectrum of the expectation.
    pub fn expectation() -> Self {
        StepSpectrum {
            breakpoints: vec![0.0, 1.0],
            values: vec![1.0],
        }
    }

    /// Spectrum of Expected Shortfall at level `alpha`.
    pub fn expected_shortfall(alpha: f64) -> Result<Self, RiskError> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(RiskError::Domain(format!(
                "ES level {alpha} outside [0, 1)"
            )));
        }
        if alpha == 0.0 {
            return Ok(Self::expectation());
        }
        Ok(StepSpectrum {
            breakpoints: vec![0.0, alpha, 1.0],
            values: vec![0.0, 1.0 / (1.0 - alpha)],
        })
    }

    /// Spectrum of Σ w_i ES_{α_i}; weights must be positive and sum to one.
    pub fn mixture(components: &[(f64, f64)]) -> Result<Self, RiskError> {
        if components.is_empty() {
            return Err(RiskError::InvalidSpectrum("empty mixture".into()));
        }
        let mut comps: Vec<(f64, f64)> = components.to_vec();
        for &(alpha, w) in &comps {
            if !(0.0..1.0).contains(&alpha) {
                return Err(RiskError::Domain(format!(
                    "ES level {alpha} outside [0, 1)"
                )));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(RiskError::InvalidSpectrum(format!("mixture weight {w}")));
            }
        }
        let total: f64 = comps.iter().map(|c| c.1).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(RiskError::InvalidSpectrum(format!(
                "mixture weights sum to {total}"
            )));
        }
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut breakpoints = vec![0.0];
        let mut values = Vec::new();
        let mut level = 0.0;
        for &(alpha, w) in &comps {
            if alpha > *breakpoints.last().unwrap() {
                values.push(level);
                breakpoints.push(alpha);
            }
            level += w / (1.0 - alpha);
        }
        values.push(level);
        breakpoints.push(1.0);
        Self::new(breakpoints, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates `(u_j, u_{j+1}, φ_j)` over the steps.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.breakpoints
            .windows(2)
            .zip(&self.values)
            .map(|(w, &v)| (w[0], w[1], v))
    }

    /// φ(u) for u in [0, 1].
    pub fn value_at(&self, u: f64) -> f64 {
        let j = self.breakpoints[1..].partition_point(|&b| b <= u);
        self.values[j.min(self.values.len() - 1)]
    }

    /// φ(1), the bound on the spectrum.
    pub fn max_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// The distortion ∫_0^u φ(s) ds.
    pub fn distortion(&self, u: f64) -> Result<f64, RiskError> {
        if !(0.0..=1.0).contains(&u) {
            return Err(RiskError::Domain(format!(
                "distortion argument {u} outside [0, 1]"
            )));
        }
        let mut acc = 0.0;
        for (lo, hi, v) in self.steps() {
            if u <= lo {
                break;
            }
            acc += v * (hi.min(u) - lo);
        }
        Ok(acc.min(1.0))
    }

    /// The ES-mixture measure: one atom per jump of φ, including a jump at 0
    /// when φ_0 > 0, weighted by (1 − u_j)·Δφ_j.
    pub fn mixture_measure(&self) -> MixtureMeasure {
        let mut levels = Vec::new();
        let mut weights = Vec::new();
        let mut prev = 0.0;
        for (lo, _, v) in self.steps() {
            let jump = v - prev;
            if jump > 0.0 {
                levels.push(lo);
                weights.push((1.0 - lo) * jump);
            }
            prev = v;
        }
        MixtureMeasure { levels, weights }
    }
}
