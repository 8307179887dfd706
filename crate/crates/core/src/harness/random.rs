use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::{Horizon, MdpModel, StageData, Stages, Transition};

/// Size limits for random micro models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroLimits {
    pub max_states: usize,
    pub max_actions: usize,
    pub max_atoms: usize,
    pub max_horizon: usize,
    pub max_cost: f64,
}

impl Default for MicroLimits {
    fn default() -> Self {
        MicroLimits {
            max_states: 3,
            max_actions: 3,
            max_atoms: 3,
            max_horizon: 3,
            max_cost: 2.0,
        }
    }
}

fn random_stage<R: Rng>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    lim: &MicroLimits,
) -> StageData {
    let n_atoms = rng.random_range(1..=lim.max_atoms);
    let weights: Vec<f64> = (0..n_atoms).map(|_| 0.1 + rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let admissible: Vec<Vec<usize>> = (0..n_states)
        .map(|_| {
            let mut set: Vec<usize> = (0..n_actions).filter(|_| rng.random_bool(0.7)).collect();
            if set.is_empty() {
                set.push(rng.random_range(0..n_actions));
            }
            set
        })
        .collect();
    let mut table = vec![Transition { next: 0, cost: 0.0 }; n_states * n_actions * n_atoms];
    for tr in &mut table {
        tr.next = rng.random_range(0..n_states);
        // Costs on a 1/8 lattice make ties, and hence tie-breaking, common.
        tr.cost = if rng.random_bool(0.5) {
            (rng.random::<f64>() * lim.max_cost * 8.0).round() / 8.0
        } else {
            rng.random::<f64>() * lim.max_cost
        };
    }
    let atoms = (0..n_atoms).map(|k| k as f64).collect();
    StageData::build(n_states, n_actions, atoms, probs, admissible, |x, a, z| {
        Ok(table[(x * n_actions + a) * n_atoms + z])
    })
    .expect("random stage data is valid")
}

/// A random finite-horizon model within `lim`, started from state 0.
/// Data is stationary or per stage, and β ∈ {0.8, 0.9, 1}.
pub fn random_micro_mdp<R: Rng>(rng: &mut R, lim: &MicroLimits) -> MdpModel {
    let n_states = rng.random_range(1..=lim.max_states);
    let n_actions = rng.random_range(1..=lim.max_actions);
    let horizon = rng.random_range(1..=lim.max_horizon);
    let discount = [0.8, 0.9, 1.0][rng.random_range(0..3)];
    let stages = if rng.random_bool(0.5) {
        Stages::Stationary(random_stage(rng, n_states, n_actions, lim))
    } else {
        Stages::PerStage(
            (0..horizon)
                .map(|_| random_stage(rng, n_states, n_actions, lim))
                .collect(),
        )
    };
    let terminal: Vec<f64> = (0..n_states)
        .map(|_| {
            if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random::<f64>() * lim.max_cost
            }
        })
        .collect();
    MdpModel::new(
        (0..n_states).map(|x| x as f64).collect(),
        (0..n_actions).map(|a| format!("a{a}")).collect(),
        stages,
        terminal,
        discount,
        Horizon::Finite(horizon),
        None,
    )
    .expect("random model is valid")
}
