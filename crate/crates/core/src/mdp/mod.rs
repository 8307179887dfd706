//! Finite Markov decision models and their solution on the extended state
//! space (x, s, t) of state, accumulated discounted cost and discount weight.

mod model;
mod monotone;
mod solve;
mod table;

use thiserror::Error;

pub use model::{
    extend_transition, ExtendedState, Horizon, MdpModel, StageData, Stages, Transition,
};
pub use monotone::{validate_monotone, Check, MonotoneReport, MonotoneVariant, Witness};
pub use solve::{
    apply_l, bellman_step, evaluate_policy, membership_violation, min_slope_increment,
    policy_cost_distribution, solve, solve_finite, solve_infinite, Discretization, InnerOptions,
    MyopicPolicy, SMode, SolveReport,
};
pub use table::{FnPolicy, MarkovPolicy, Policy, Slice, StageGrid, ValueTable};

use crate::risk::RiskError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MdpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("state {state} has no admissible action")]
    EmptyAdmissible { state: usize },
    #[error("action {action} is not admissible in state {state} at stage {stage}")]
    Inadmissible {
        stage: usize,
        state: usize,
        action: usize,
    },
    #[error("policy undefined at stage {stage}, state {state}, s = {s}, t = {t}")]
    PolicyUndefined {
        stage: usize,
        state: usize,
        s: f64,
        t: f64,
    },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("size {size} exceeds the cap {cap}")]
    CapExceeded { size: usize, cap: usize },
    #[error("value iteration stopped after {iterations} iterations with residual {residual}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error(transparent)]
    Risk(#[from] RiskError),
}
