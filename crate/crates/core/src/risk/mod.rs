//! Spectral risk measures on finite distributions.

mod distribution;
mod gpoly;
mod measures;
mod spectrum;

use thiserror::Error;

pub use distribution::{DiscreteDistribution, INPUT_SUM_TOLERANCE, MIN_PROBABILITY};
pub use gpoly::{equidistant_knots, GPoly, SLOPE_TOLERANCE};
pub(crate) use measures::DistortionTable;
pub use measures::{
    expected_shortfall, minimizer_g, ru_objective, spectral_risk, spectral_risk_via_mixture,
};
pub use spectrum::{MixtureMeasure, StepSpectrum, NORMALIZATION_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
    #[error("invalid piecewise-linear function: {0}")]
    InvalidGPoly(String),
}
