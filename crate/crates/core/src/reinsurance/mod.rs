//! Dynamic reinsurance with surplus dynamics X' = X + Z − f(Y) − π_R(f),
//! built as a finite Markov decision model.

mod order;
mod treaty;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use order::{convex_order_check, stop_loss_transform, ConvexOrderCheck};
pub use treaty::{premium, ExpectedValuePrinciple, PremiumPrinciple, Treaty};

use crate::mdp::{Horizon, MarkovPolicy, MdpError, MdpModel, StageData, Stages, Transition};
use crate::outer::{anneal, OuterConfig, OuterError, OuterResult};
use crate::risk::{equidistant_knots, DiscreteDistribution, RiskError, StepSpectrum};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReinsuranceError {
    #[error("invalid reinsurance configuration: {0}")]
    Config(String),
    #[error("no admissible treaty at surplus {surplus}")]
    NoAdmissibleTreaty { surplus: f64 },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Outer(#[from] OuterError),
    #[error(transparent)]
    Risk(#[from] RiskError),
}

/// Discretization of the surplus axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurplusGrid {
    /// Every surplus reachable from x₀ within the horizon, merged at 1e-9.
    Reachable { max_points: usize },
    /// Equidistant points on [min, max]; successors snap to the nearest point.
    Uniform { min: f64, max: f64, points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReinsuranceConfig {
    pub claims: DiscreteDistribution,
    pub premium_income: DiscreteDistribution,
    pub safety_loading: f64,
    pub discount: f64,
    pub horizon: usize,
    pub initial_surplus: f64,
    pub treaties: Vec<Treaty>,
    #[serde(default)]
    pub budget_constrained: bool,
    pub cost_of_capital_rate: f64,
    pub surplus_grid: SurplusGrid,
}

impl ReinsuranceConfig {
    pub fn validate(&self) -> Result<(), ReinsuranceError> {
        let bad = |m: String| Err(ReinsuranceError::Config(m));
        if self.claims.min_atom() < 0.0 || self.premium_income.min_atom() < 0.0 {
            return bad("claims and premium income must be non-negative".into());
        }
        if !(self.safety_loading > 0.0) || !self.safety_loading.is_finite() {
            return bad(format!(
                "safety loading {} must be positive",
                self.safety_loading
            ));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return bad(format!("discount {} outside (0, 1]", self.discount));
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if !(self.cost_of_capital_rate > 0.0 && self.cost_of_capital_rate <= 1.0) {
            return bad(format!(
                "cost-of-capital rate {} outside (0, 1]",
                self.cost_of_capital_rate
            ));
        }
        if !self.initial_surplus.is_finite() {
            return bad("initial surplus must be finite".into());
        }
        for t in &self.treaties {
            t.validate()?;
        }
        match self.surplus_grid {
            SurplusGrid::Reachable { max_points: 0 } => {
                bad("reachable grid needs max_points > 0".into())
            }
            SurplusGrid::Uniform { min, max, points } if !(min < max) || points < 2 => {
                bad("uniform grid needs min < max and at least two points".into())
            }
            _ => Ok(()),
        }
    }

    /// The configured treaties plus the identity treaty when no listed
    /// treaty already retains every claim.
    pub fn treaty_list(&self) -> Vec<Treaty> {
        let mut out = self.treaties.clone();
        if !out.iter().any(|t| t.is_identity_on(&self.claims)) {
            out.push(Treaty::Identity);
        }
        out
    }
}

/// A built instance together with its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReinsuranceModel {
    pub model: MdpModel,
    pub treaties: Vec<Treaty>,
    pub premiums: Vec<f64>,
    /// Index of the state nearest the initial surplus.
    pub x0: usize,
    /// Largest distance between an exact successor surplus and its grid
    /// point, over transitions that can occur within the horizon.
    pub snap_error: f64,
    pub z_hat: f64,
}

const MERGE_SCALE: f64 = 1e9;

fn merge_key(x: f64) -> i64 {
    (x * MERGE_SCALE).round() as i64
}

fn nearest(states: &[f64], x: f64) -> usize {
    let k = states.partition_point(|&p| p < x);
    if k == 0 {
        0
    } else if k == states.len() || x - states[k - 1] <= states[k] - x {
        k - 1
    } else {
        k
    }
}

/// Surplus dynamics as a finite model. Disturbance atom `iy·|Z| + iz`
/// carries the claim `Y = y_iy` and income `Z = z_iz`; the one-stage cost is
/// `f(y) + π_R(f) + ẑ − z`.
pub fn build_mdp(cfg: &ReinsuranceConfig) -> Result<ReinsuranceModel, ReinsuranceError> {
    cfg.validate()?;
    let treaties = cfg.treaty_list();
    let pricing = ExpectedValuePrinciple {
        safety_loading: cfg.safety_loading,
    };
    let premiums: Vec<f64> = treaties
        .iter()
        .map(|t| pricing.premium(t, &cfg.claims))
        .collect();
    let z_hat = cfg.premium_income.max_atom();

    let mut atoms_y = Vec::new();
    let mut atoms_z = Vec::new();
    let mut probs = Vec::new();
    for (y, py) in cfg.claims.iter() {
        for (z, pz) in cfg.premium_income.iter() {
            atoms_y.push(y);
            atoms_z.push(z);
            probs.push(py * pz);
        }
    }
    let successor = |x: f64, a: usize, k: usize| {
        x + atoms_z[k] - treaties[a].retained(atoms_y[k]) - premiums[a]
    };

    let admissible_at = |x: f64| -> Vec<usize> {
        (0..treaties.len())
            .filter(|&a| !cfg.budget_constrained || premiums[a] <= x.max(0.0))
            .collect()
    };

    let states: Vec<f64> = match cfg.surplus_grid {
        SurplusGrid::Reachable { max_points } => {
            let mut all: BTreeMap<i64, f64> = BTreeMap::new();
            let mut layer: BTreeMap<i64, f64> = BTreeMap::new();
            layer.insert(merge_key(cfg.initial_surplus), cfg.initial_surplus);
            for n in 0..=cfg.horizon {
                for (&k, &x) in &layer {
                    all.entry(k).or_insert(x);
                }
                if all.len() > max_points {
                    return Err(ReinsuranceError::Config(format!(
                        "more than {max_points} reachable surplus values; use a uniform grid"
                    )));
                }
                if n == cfg.horizon {
                    break;
                }
                let mut next = BTreeMap::new();
                for &x in layer.values() {
                    for a in admissible_at(x) {
                        for k in 0..probs.len() {
                            let x2 = successor(x, a, k);
                            next.entry(merge_key(x2)).or_insert(x2);
                        }
                    }
                }
                layer = next;
            }
            all.into_values().collect()
        }
        SurplusGrid::Uniform { min, max, points } => equidistant_knots(max - min, points)
            .into_iter()
            .map(|v| min + v)
            .collect(),
    };

    let mut admissible = Vec::with_capacity(states.len());
    for &x in &states {
        let set = admissible_at(x);
        if set.is_empty() {
            return Err(ReinsuranceError::NoAdmissibleTreaty { surplus: x });
        }
        admissible.push(set);
    }

    // Over grid states from which a decision is taken within the horizon.
    let x0 = nearest(&states, cfg.initial_surplus);
    let mut snap_error: f64 = 0.0;
    let mut seen = vec![false; states.len()];
    let mut layer = vec![x0];
    for _ in 0..cfg.horizon {
        let mut next = Vec::new();
        for &i in &layer {
            for &a in &admissible[i] {
                for k in 0..probs.len() {
                    let x2 = successor(states[i], a, k);
                    let j = nearest(&states, x2);
                    snap_error = snap_error.max((states[j] - x2).abs());
                    if !seen[j] {
                        seen[j] = true;
                        next.push(j);
                    }
                }
            }
        }
        seen.iter_mut().for_each(|v| *v = false);
        layer = next;
    }

    let n_atoms = probs.len();
    let data = StageData::build(
        states.len(),
        treaties.len(),
        (0..n_atoms).map(|k| k as f64).collect(),
        probs,
        admissible,
        |x, a, k| {
            let f = &treaties[a];
            let cost = f.retained(atoms_y[k]) + premiums[a] + (z_hat - atoms_z[k]);
            Ok(Transition {
                next: nearest(&states, successor(states[x], a, k)),
                cost: cost.max(0.0),
            })
        },
    )?;
    let y_max = cfg.claims.max_atom();
    let cost_cap = treaties
        .iter()
        .zip(&premiums)
        .map(|(t, p)| t.retained(y_max) + p)
        .fold(0.0, f64::max)
        + z_hat;
    let n_states = states.len();
    let model = MdpModel::new(
        states,
        treaties.iter().map(Treaty::label).collect(),
        Stages::Stationary(data),
        vec![0.0; n_states],
        cfg.discount,
        Horizon::Finite(cfg.horizon),
        Some(cost_cap),
    )?;
    Ok(ReinsuranceModel {
        model,
        treaties,
        premiums,
        x0,
        snap_error,
        z_hat,
    })
}

/// One row of an emitted treaty policy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRow {
    pub stage: usize,
    pub surplus: f64,
    pub s: f64,
    pub t: f64,
    pub treaty_kind: String,
    pub parameter: f64,
}

pub fn policy_rows(rm: &ReinsuranceModel, policy: &MarkovPolicy) -> Vec<PolicyRow> {
    let mut rows = Vec::new();
    for (n, grid) in policy.stages.iter().enumerate() {
        for (x, slice) in grid.slices.iter().enumerate() {
            for (j, &t) in grid.t_levels.iter().enumerate() {
                for (i, &s) in slice.s.iter().enumerate() {
                    let treaty = &rm.treaties[slice.get(j, i)];
                    rows.push(PolicyRow {
                        stage: n,
                        surplus: rm.model.states()[x],
                        s,
                        t,
                        treaty_kind: treaty.kind().to_string(),
                        parameter: treaty.parameter(),
                    });
                }
            }
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostOfCapitalReport {
    /// r_CoC times the best outer value.
    pub value: f64,
    /// r_CoC times the Γ_m restriction bound.
    pub error_bound: f64,
    pub snap_error: f64,
    pub outer: OuterResult,
    pub policy: Vec<PolicyRow>,
}

/// Runs the outer pipeline on the built model and scales by r_CoC.
pub fn solve_cost_of_capital(
    cfg: &ReinsuranceConfig,
    spec: &StepSpectrum,
    epsilon: Option<f64>,
    outer: &OuterConfig,
) -> Result<CostOfCapitalReport, ReinsuranceError> {
    let rm = build_mdp(cfg)?;
    let mut ocfg = outer.clone();
    if let Some(e) = epsilon {
        ocfg.epsilon = Some(e);
        ocfg.m = None;
    }
    let result = anneal(&rm.model, spec, rm.x0, &ocfg)?;
    let r = cfg.cost_of_capital_rate;
    Ok(CostOfCapitalReport {
        value: r * result.best_value,
        error_bound: r * result.error_bound,
        snap_error: rm.snap_error,
        policy: policy_rows(&rm, &result.inner_report.policy),
        outer: result,
    })
}
