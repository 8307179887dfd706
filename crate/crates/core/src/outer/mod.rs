//! The outer problem: minimizing J(g) + ∫ g*(φ(u)) du over increasing
//! convex piecewise-linear g on an equidistant grid.

mod anneal;
mod conjugate;

use thiserror::Error;

pub use anneal::{
    anneal, objective_k, KEvaluation, OuterConfig, OuterResult, RestartSummary, CACHE_QUANTUM,
};
pub use conjugate::{
    conjugate_closed_form, conjugate_integral, cost_cap, error_bound, grid_size_from_epsilon,
    isotonic_project, project_pm, Projection, MAX_KNOTS,
};

use crate::mdp::MdpError;
use crate::risk::RiskError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OuterError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}
