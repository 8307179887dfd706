//! Scenario files, exhaustive oracles, run reports and the command line.

mod cli;
mod oracle;
mod random;
mod report;
mod scenario;

use thiserror::Error;

pub use cli::{run_cli, OUT_DIR_ENV};
pub use oracle::{
    oracle_exact_optimum, oracle_expected_optimum, oracle_outer_gap, policy_count, GapRow,
    OracleDecision, OracleResult, DEFAULT_LATTICE_CAP, DEFAULT_POLICY_CAP,
};
pub use random::{random_micro_mdp, MicroLimits};
pub use report::{
    run_gap_study, run_oracle, run_reinsurance, run_solve_inner, run_solve_outer, version_stamp,
    Overrides, PolicyEntry, RunReport,
};
pub use scenario::{
    Built, GSpec, HorizonSpec, ModelSection, OracleSection, ScenarioFile, ScenarioKind,
    SpectrumSpec, StageSection, TransitionEntry,
};

use crate::mdp::MdpError;
use crate::outer::OuterError;
use crate::reinsurance::ReinsuranceError;
use crate::risk::RiskError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("{what} count {count} exceeds the cap {cap}")]
    CapRefused {
        what: &'static str,
        count: f64,
        cap: f64,
    },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Outer(#[from] OuterError),
    #[error(transparent)]
    Reinsurance(#[from] ReinsuranceError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("output error: {0}")]
    Output(String),
}

impl HarnessError {
    /// 2 for invalid input, 3 for a refused cap, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::CapRefused { .. } => 3,
            HarnessError::Mdp(MdpError::CapExceeded { .. })
            | HarnessError::Outer(OuterError::Mdp(MdpError::CapExceeded { .. }))
            | HarnessError::Reinsurance(ReinsuranceError::Mdp(MdpError::CapExceeded { .. })) => 3,
            HarnessError::Mdp(MdpError::NotConverged { .. })
            | HarnessError::Outer(OuterError::Mdp(MdpError::NotConverged { .. }))
            | HarnessError::Output(_) => 1,
            _ => 2,
        }
    }
}
