use serde::{Deserialize, Serialize};

use super::ReinsuranceError;
use crate::risk::DiscreteDistribution;

/// A retained-loss function f with 0 ≤ f(y) ≤ y and f, id − f increasing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Treaty {
    /// f(y) = min{y, a}.
    StopLoss { a: f64 },
    /// f(y) = b·y.
    Proportional { b: f64 },
    /// f(y) = y, no reinsurance.
    Identity,
}

impl Treaty {
    pub fn validate(&self) -> Result<(), ReinsuranceError> {
        match *self {
            Treaty::StopLoss { a } if !(a >= 0.0) || a.is_nan() => Err(ReinsuranceError::Config(
                format!("stop-loss retention {a} must be non-negative"),
            )),
            Treaty::Proportional { b } if !(0.0..=1.0).contains(&b) => Err(
                ReinsuranceError::Config(format!("proportional share {b} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }

    pub fn retained(&self, y: f64) -> f64 {
        match *self {
            Treaty::StopLoss { a } => y.min(a),
            Treaty::Proportional { b } => b * y,
            Treaty::Identity => y,
        }
    }

    /// True when the treaty retains every atom of `claims` in full.
    pub fn is_identity_on(&self, claims: &DiscreteDistribution) -> bool {
        claims.atoms().iter().all(|&y| self.retained(y) == y)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Treaty::StopLoss { .. } => "stop_loss",
            Treaty::Proportional { .. } => "proportional",
            Treaty::Identity => "identity",
        }
    }

    /// The retention a, the share b, or +∞ for the identity.
    pub fn parameter(&self) -> f64 {
        match *self {
            Treaty::StopLoss { a } => a,
            Treaty::Proportional { b } => b,
            Treaty::Identity => f64::INFINITY,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            Treaty::StopLoss { a } => format!("stop_loss(a={a})"),
            Treaty::Proportional { b } => format!("proportional(b={b})"),
            Treaty::Identity => "identity".into(),
        }
    }
}

/// A premium principle π_R acting on the ceded loss Y − f(Y).
pub trait PremiumPrinciple: Sync {
    fn premium(&self, treaty: &Treaty, claims: &DiscreteDistribution) -> f64;
}

/// π_R(f) = (1 + θ)·E[Y − f(Y)].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedValuePrinciple {
    pub safety_loading: f64,
}

impl PremiumPrinciple for ExpectedValuePrinciple {
    fn premium(&self, treaty: &Treaty, claims: &DiscreteDistribution) -> f64 {
        (1.0 + self.safety_loading) * claims.expect(|y| y - treaty.retained(y))
    }
}

pub fn premium(treaty: &Treaty, claims: &DiscreteDistribution, theta: f64) -> f64 {
    ExpectedValuePrinciple {
        safety_loading: theta,
    }
    .premium(treaty, claims)
}
