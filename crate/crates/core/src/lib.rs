#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod harness;
pub mod mdp;
pub mod outer;
pub mod reinsurance;
pub mod risk;
