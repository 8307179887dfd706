use serde::{Deserialize, Serialize};

use super::MdpError;
use crate::risk::INPUT_SUM_TOLERANCE;

/// Planning horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// Successor state and realized one-stage cost for a fixed `(x, a, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub next: usize,
    pub cost: f64,
}

/// Decision-stage data: admissible sets, disturbance law and transitions.
///
/// The cost is stored per `(x, a, z)`. Since the successor is a function of
/// `(x, a, z)`, this covers every cost of the form `c(x, a, x')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageData {
    n_states: usize,
    n_actions: usize,
    admissible: Vec<Vec<usize>>,
    atoms: Vec<f64>,
    probs: Vec<f64>,
    transitions: Vec<Option<Transition>>,
}

impl StageData {
    /// Builds stage data by querying `f(x, a, z)` for every admissible pair
    /// and every disturbance atom. Admissible lists are sorted and deduplicated.
    pub fn build<F>(
        n_states: usize,
        n_actions: usize,
        atoms: Vec<f64>,
        probs: Vec<f64>,
        mut admissible: Vec<Vec<usize>>,
        mut f: F,
    ) -> Result<Self, MdpError>
    where
        F: FnMut(usize, usize, usize) -> Result<Transition, MdpError>,
    {
        let invalid = |m: String| Err(MdpError::InvalidModel(m));
        if atoms.len() != probs.len() || atoms.is_empty() {
            return invalid(format!(
                "{} atoms and {} probabilities",
                atoms.len(),
                probs.len()
            ));
        }
        if probs.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return invalid("disturbance probabilities must be positive".into());
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > INPUT_SUM_TOLERANCE {
            return invalid(format!("disturbance probabilities sum to {total}"));
        }
        let probs = if (total - 1.0).abs() > 1e-12 {
            probs.into_iter().map(|p| p / total).collect()
        } else {
            probs
        };
        if admissible.len() != n_states {
            return invalid(format!(
                "admissible sets given for {} of {n_states} states",
                admissible.len()
            ));
        }
        let n_z = atoms.len();
        let mut transitions = vec![None; n_states * n_actions * n_z];
        for (x, set) in admissible.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            if set.is_empty() {
                return Err(MdpError::EmptyAdmissible { state: x });
            }
            if let Some(a) = set.iter().find(|&&a| a >= n_actions) {
                return invalid(format!("state {x}: action index {a} out of range"));
            }
            for &a in set.iter() {
                for z in 0..n_z {
                    let tr = f(x, a, z)?;
                    if tr.next >= n_states {
                        return invalid(format!(
                            "transition ({x}, {a}, {z}) leads to unknown state {}",
                            tr.next
                        ));
                    }
                    if !(tr.cost >= 0.0) || !tr.cost.is_finite() {
                        return invalid(format!(
                            "cost {} at ({x}, {a}, {z}) is negative or not finite",
                            tr.cost
                        ));
                    }
                    transitions[(x * n_actions + a) * n_z + z] = Some(tr);
                }
            }
        }
        Ok(StageData {
            n_states,
            n_actions,
            admissible,
            atoms,
            probs,
            transitions,
        })
    }

    pub fn admissible(&self, x: usize) -> &[usize] {
        &self.admissible[x]
    }

    pub fn is_admissible(&self, x: usize, a: usize) -> bool {
        self.admissible[x].binary_search(&a).is_ok()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    /// Transition for an admissible `(x, a)`; `None` otherwise.
    pub fn transition(&self, x: usize, a: usize, z: usize) -> Option<Transition> {
        if x >= self.n_states || a >= self.n_actions || z >= self.atoms.len() {
            return None;
        }
        self.transitions[(x * self.n_actions + a) * self.atoms.len() + z]
    }

    fn max_cost(&self) -> f64 {
        self.transitions
            .iter()
            .flatten()
            .map(|t| t.cost)
            .fold(0.0, f64::max)
    }
}

/// Stage data shared by all stages, or given per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Stages {
    Stationary(StageData),
    PerStage(Vec<StageData>),
}

/// A finite Markov decision model with non-negative costs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpModel {
    states: Vec<f64>,
    actions: Vec<String>,
    stages: Stages,
    terminal_cost: Vec<f64>,
    discount: f64,
    horizon: Horizon,
    cost_cap: f64,
}

impl MdpModel {
    /// Validates and assembles a model. Without an explicit `cost_cap` the
    /// largest stage or terminal cost is used.
    pub fn new(
        states: Vec<f64>,
        actions: Vec<String>,
        stages: Stages,
        terminal_cost: Vec<f64>,
        discount: f64,
        horizon: Horizon,
        cost_cap: Option<f64>,
    ) -> Result<Self, MdpError> {
        let invalid = |m: String| Err(MdpError::InvalidModel(m));
        if states.is_empty() || actions.is_empty() {
            return invalid("need at least one state and one action".into());
        }
        if states.iter().any(|s| !s.is_finite()) {
            return invalid("state labels must be finite".into());
        }
        if !(discount > 0.0) || !discount.is_finite() {
            return invalid(format!("discount {discount} must be positive"));
        }
        if terminal_cost.len() != states.len() {
            return invalid(format!(
                "{} terminal costs for {} states",
                terminal_cost.len(),
                states.len()
            ));
        }
        if terminal_cost.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return invalid("terminal costs must be finite and non-negative".into());
        }
        let all: Vec<&StageData> = match &stages {
            Stages::Stationary(d) => vec![d],
            Stages::PerStage(v) => v.iter().collect(),
        };
        for d in &all {
            if d.n_states != states.len() || d.n_actions != actions.len() {
                return invalid("stage data dimensions do not match the model".into());
            }
        }
        match (horizon, &stages) {
            (Horizon::Finite(n), Stages::PerStage(v)) if v.len() != n => {
                return invalid(format!("{} stages of data for horizon {n}", v.len()));
            }
            (Horizon::Infinite, Stages::PerStage(_)) => {
                return invalid("an infinite horizon needs stationary data".into());
            }
            (Horizon::Infinite, _) => {
                if discount >= 1.0 {
                    return Err(MdpError::Domain(format!(
                        "an infinite horizon needs discount < 1, got {discount}"
                    )));
                }
                if terminal_cost.iter().any(|&c| c != 0.0) {
                    return invalid("an infinite horizon needs zero terminal cost".into());
                }
            }
            _ => {}
        }
        let observed = all
            .iter()
            .map(|d| d.max_cost())
            .chain(terminal_cost.iter().copied())
            .fold(0.0, f64::max);
        let cost_cap = cost_cap.unwrap_or(observed);
        if !cost_cap.is_finite() || cost_cap < observed {
            return invalid(format!(
                "cost cap {cost_cap} below the largest cost {observed}"
            ));
        }
        Ok(MdpModel {
            states,
            actions,
            stages,
            terminal_cost,
            discount,
            horizon,
            cost_cap,
        })
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn actions(&self) -> &[String] {
        &self.actions
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn stages(&self) -> &Stages {
        &self.stages
    }

    pub fn is_stationary(&self) -> bool {
        matches!(self.stages, Stages::Stationary(_))
    }

    /// Data governing the decision taken at stage `n`.
    pub fn stage(&self, n: usize) -> &StageData {
        match &self.stages {
            Stages::Stationary(d) => d,
            Stages::PerStage(v) => &v[n],
        }
    }

    pub fn terminal_cost(&self) -> &[f64] {
        &self.terminal_cost
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    /// c̄, an upper bound on every stage and terminal cost.
    pub fn cost_cap(&self) -> f64 {
        self.cost_cap
    }

    /// ĉ = Σ_{k=0}^{N} β^k c̄, or c̄/(1 − β) for an infinite horizon.
    pub fn total_cost_bound(&self) -> f64 {
        match self.horizon {
            Horizon::Finite(n) => {
                let mut t = 1.0;
                let mut acc = 0.0;
                for _ in 0..=n {
                    acc += t * self.cost_cap;
                    t *= self.discount;
                }
                acc
            }
            Horizon::Infinite => self.cost_cap / (1.0 - self.discount),
        }
    }

    pub(crate) fn check_state(&self, x: usize) -> Result<(), MdpError> {
        if x < self.n_states() {
            Ok(())
        } else {
            Err(MdpError::InvalidModel(format!("unknown state index {x}")))
        }
    }
}

/// A point (x, s, t) of the extended state space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedState {
    pub x: usize,
    pub s: f64,
    pub t: f64,
}

impl ExtendedState {
    pub fn origin(x: usize) -> Self {
        ExtendedState { x, s: 0.0, t: 1.0 }
    }
}

/// `(T(x, a, z), s + t·c(x, a, z), β·t)` for the decision at stage `n`.
pub fn extend_transition(
    model: &MdpModel,
    n: usize,
    es: ExtendedState,
    a: usize,
    z: usize,
) -> Result<ExtendedState, MdpError> {
    let data = model.stage(n);
    let tr = data.transition(es.x, a, z).ok_or(MdpError::Inadmissible {
        stage: n,
        state: es.x,
        action: a,
    })?;
    Ok(ExtendedState {
        x: tr.next,
        s: es.s + es.t * tr.cost,
        t: model.discount() * es.t,
    })
}
