//! Brute-force optima over history-dependent deterministic policies.
//!
//! A deterministic policy is a choice of action at every node of the
//! scenario tree, where a node at depth n is the disturbance path
//! (z_0, …, z_{n−1}). Together with the policy the path fixes the whole
//! history, so these choices cover every history-dependent rule.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::scenario::OracleSection;
use super::HarnessError;
use crate::mdp::{Horizon, InnerOptions, MdpError, MdpModel};
use crate::outer::{cost_cap, error_bound, objective_k};
use crate::risk::{DiscreteDistribution, DistortionTable, GPoly, StepSpectrum};

pub const DEFAULT_POLICY_CAP: f64 = 2e6;
pub const DEFAULT_LATTICE_CAP: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDecision {
    pub stage: usize,
    /// Disturbance indices observed before the decision.
    pub history: Vec<usize>,
    pub state: usize,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub policy_count: f64,
    pub decisions: Vec<OracleDecision>,
    /// Law of the total discounted cost under the minimizing policy.
    pub cost_distribution: DiscreteDistribution,
}

struct Node {
    depth: usize,
    history: Vec<usize>,
    /// Index of the first child node, or of the first leaf at depth N − 1.
    first: usize,
}

struct Tree {
    horizon: usize,
    nodes: Vec<Node>,
    leaf_probs: Vec<f64>,
}

fn horizon_of(model: &MdpModel) -> Result<usize, HarnessError> {
    match model.horizon() {
        Horizon::Finite(n) => Ok(n),
        Horizon::Infinite => Err(HarnessError::Mdp(MdpError::Domain(
            "the oracle needs a finite horizon".into(),
        ))),
    }
}

fn build_tree(model: &MdpModel, cap: f64) -> Result<Tree, HarnessError> {
    let horizon = horizon_of(model)?;
    let mut leaves = 1.0;
    for n in 0..horizon {
        leaves *= model.stage(n).n_atoms() as f64;
    }
    if leaves > cap {
        return Err(HarnessError::CapRefused {
            what: "scenario tree leaf",
            count: leaves,
            cap,
        });
    }
    let mut nodes = Vec::new();
    let mut probs = Vec::new();
    let mut leaf_probs = Vec::new();
    if horizon == 0 {
        leaf_probs.push(1.0);
        return Ok(Tree {
            horizon,
            nodes,
            leaf_probs,
        });
    }
    nodes.push(Node {
        depth: 0,
        history: Vec::new(),
        first: 0,
    });
    probs.push(1.0);
    let mut k = 0;
    while k < nodes.len() {
        let depth = nodes[k].depth;
        let data = model.stage(depth);
        if depth + 1 < horizon {
            nodes[k].first = nodes.len();
            for (z, &p) in data.probs().iter().enumerate() {
                let mut history = nodes[k].history.clone();
                history.push(z);
                nodes.push(Node {
                    depth: depth + 1,
                    history,
                    first: 0,
                });
                probs.push(probs[k] * p);
            }
        } else {
            nodes[k].first = leaf_probs.len();
            for &p in data.probs() {
                leaf_probs.push(probs[k] * p);
            }
        }
        k += 1;
    }
    Ok(Tree {
        horizon,
        nodes,
        leaf_probs,
    })
}

/// Number of deterministic history-dependent policies from `x0`.
pub fn policy_count(model: &MdpModel, x0: usize) -> Result<f64, HarnessError> {
    let horizon = horizon_of(model)?;
    if x0 >= model.n_states() {
        return Err(HarnessError::Scenario(format!("unknown state {x0}")));
    }
    fn count(
        model: &MdpModel,
        n: usize,
        x: usize,
        horizon: usize,
        memo: &mut HashMap<(usize, usize), f64>,
    ) -> f64 {
        if n == horizon {
            return 1.0;
        }
        if let Some(&c) = memo.get(&(n, x)) {
            return c;
        }
        let data = model.stage(n);
        let mut total = 0.0;
        for &a in data.admissible(x) {
            let mut product = 1.0;
            for z in 0..data.n_atoms() {
                let next = data
                    .transition(x, a, z)
                    .expect("admissible entries are total")
                    .next;
                product *= count(model, n + 1, next, horizon, memo);
            }
            total += product;
        }
        memo.insert((n, x), total);
        total
    }
    Ok(count(model, 0, x0, horizon, &mut HashMap::new()))
}

enum Score<'a> {
    Spectral(DistortionTable<'a>),
    Expected(&'a GPoly),
}

impl Score<'_> {
    fn eval(&self, costs: &[f64], probs: &[f64], scratch: &mut Vec<(f64, f64)>) -> f64 {
        match self {
            Score::Spectral(table) => {
                scratch.clear();
                scratch.extend(costs.iter().copied().zip(probs.iter().copied()));
                scratch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
                risk_of_sorted_pairs(scratch, table)
            }
            Score::Expected(g) => {
                scratch.clear();
                scratch.extend(costs.iter().zip(probs).map(|(&c, &p)| (p * g.eval(c), 0.0)));
                scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
                scratch.iter().map(|t| t.0).sum()
            }
        }
    }
}

/// ρ_φ of sorted (cost, probability) pairs; repeated costs are allowed.
fn risk_of_sorted_pairs(pairs: &[(f64, f64)], table: &DistortionTable<'_>) -> f64 {
    let mut cum = 0.0;
    let mut prev = 0.0;
    let mut risk = 0.0;
    for (i, &(x, p)) in pairs.iter().enumerate() {
        cum += p;
        let phi = table.eval(if i + 1 == pairs.len() { 1.0 } else { cum });
        risk += x * (phi - prev);
        prev = phi;
    }
    risk
}

/// Mutable walk over one policy's tree.
struct Walker<'a> {
    model: &'a MdpModel,
    tree: &'a Tree,
    x: Vec<usize>,
    s: Vec<f64>,
    t: Vec<f64>,
    leaf_costs: Vec<f64>,
}

impl<'a> Walker<'a> {
    fn new(model: &'a MdpModel, tree: &'a Tree, x0: usize) -> Self {
        let k = tree.nodes.len();
        let mut w = Walker {
            model,
            tree,
            x: vec![0; k],
            s: vec![0.0; k],
            t: vec![0.0; k],
            leaf_costs: vec![0.0; tree.leaf_probs.len()],
        };
        if k > 0 {
            w.x[0] = x0;
            w.t[0] = 1.0;
        } else {
            w.leaf_costs[0] = model.terminal_cost()[x0];
        }
        w
    }

    fn admissible(&self, k: usize) -> &'a [usize] {
        self.model
            .stage(self.tree.nodes[k].depth)
            .admissible(self.x[k])
    }

    /// Takes action `a` at node `k` and fills its children or leaves.
    fn apply(&mut self, k: usize, a: usize) {
        let node = &self.tree.nodes[k];
        let data = self.model.stage(node.depth);
        let (x, s, t) = (self.x[k], self.s[k], self.t[k]);
        let beta = self.model.discount();
        let last = node.depth + 1 == self.tree.horizon;
        for z in 0..data.n_atoms() {
            let tr = data
                .transition(x, a, z)
                .expect("admissible entries are total");
            let s2 = s + t * tr.cost;
            let t2 = beta * t;
            if last {
                self.leaf_costs[node.first + z] = s2 + t2 * self.model.terminal_cost()[tr.next];
            } else {
                let c = node.first + z;
                self.x[c] = tr.next;
                self.s[c] = s2;
                self.t[c] = t2;
            }
        }
    }
}

/// Best (value, choices) over all policies whose root action is `root`.
fn enumerate_from(
    model: &MdpModel,
    tree: &Tree,
    x0: usize,
    root: Option<usize>,
    score: &Score<'_>,
) -> (f64, Vec<usize>) {
    let mut w = Walker::new(model, tree, x0);
    let mut scratch = Vec::with_capacity(tree.leaf_probs.len());
    let k_nodes = tree.nodes.len();
    if k_nodes == 0 {
        return (
            score.eval(&w.leaf_costs, &tree.leaf_probs, &mut scratch),
            Vec::new(),
        );
    }
    let start = usize::from(root.is_some());
    let mut actions = vec![0usize; k_nodes];
    if let Some(a) = root {
        actions[0] = a;
        w.apply(0, a);
    }
    let mut choice = vec![0usize; k_nodes];
    let mut best = (f64::INFINITY, Vec::new());
    let mut k = start;
    loop {
        while k < k_nodes {
            let a = w.admissible(k)[choice[k]];
            actions[k] = a;
            w.apply(k, a);
            k += 1;
        }
        let v = score.eval(&w.leaf_costs, &tree.leaf_probs, &mut scratch);
        if v < best.0 {
            best = (v, actions.clone());
        }
        loop {
            if k == start {
                return best;
            }
            k -= 1;
            if choice[k] + 1 < w.admissible(k).len() {
                choice[k] += 1;
                break;
            }
            choice[k] = 0;
        }
    }
}

fn run(
    model: &MdpModel,
    x0: usize,
    cap: f64,
    score: &Score<'_>,
) -> Result<OracleResult, HarnessError> {
    let count = policy_count(model, x0)?;
    if count > cap {
        return Err(HarnessError::CapRefused {
            what: "policy",
            count,
            cap,
        });
    }
    let tree = build_tree(model, cap)?;
    let (value, actions) = if tree.nodes.is_empty() {
        enumerate_from(model, &tree, x0, None, score)
    } else {
        let roots = model.stage(0).admissible(x0).to_vec();
        let results: Vec<(f64, Vec<usize>)> = roots
            .par_iter()
            .map(|&a| enumerate_from(model, &tree, x0, Some(a), score))
            .collect();
        let mut best = 0;
        for (i, r) in results.iter().enumerate() {
            if r.0 < results[best].0 {
                best = i;
            }
        }
        results.into_iter().nth(best).unwrap()
    };

    let mut w = Walker::new(model, &tree, x0);
    let mut decisions = Vec::with_capacity(actions.len());
    for (k, &a) in actions.iter().enumerate() {
        let node = &tree.nodes[k];
        decisions.push(OracleDecision {
            stage: node.depth,
            history: node.history.clone(),
            state: w.x[k],
            action: a,
        });
        w.apply(k, a);
    }
    let cost_distribution = DiscreteDistribution::from_weighted(
        w.leaf_costs
            .iter()
            .copied()
            .zip(tree.leaf_probs.iter().copied()),
    )?;
    Ok(OracleResult {
        value,
        policy_count: count,
        decisions,
        cost_distribution,
    })
}

/// min over all deterministic history-dependent policies of ρ_φ(C_N).
///
/// Refuses when the policy count or the number of scenario-tree leaves
/// exceeds `cap`.
pub fn oracle_exact_optimum(
    model: &MdpModel,
    spec: &StepSpectrum,
    x0: usize,
    cap: f64,
) -> Result<OracleResult, HarnessError> {
    run(model, x0, cap, &Score::Spectral(DistortionTable::new(spec)))
}

/// min over all deterministic history-dependent policies of E[g(C_N)].
pub fn oracle_expected_optimum(
    model: &MdpModel,
    g: &GPoly,
    x0: usize,
    cap: f64,
) -> Result<OracleResult, HarnessError> {
    run(model, x0, cap, &Score::Expected(g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub m: usize,
    /// 2φ(1)ĉ/(m − 1).
    pub bound: f64,
    pub pitch: f64,
    pub lattice_points: usize,
    pub best_value: f64,
    pub oracle_value: f64,
    pub gap: f64,
    pub best_y: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Points of Γ_m with y_1 = 0 whose increments are multiples of `pitch`.
/// K_m is unchanged by adding a constant to g, so y_1 = 0 loses nothing.
fn lattice(
    m: usize,
    c_hat: f64,
    phi1: f64,
    pitch: f64,
    cap: usize,
) -> Result<Vec<Vec<f64>>, HarnessError> {
    let h = if c_hat > 0.0 {
        c_hat / (m - 1) as f64
    } else {
        0.0
    };
    let levels = ((phi1 * h / pitch) * (1.0 + 1e-12)).floor() as usize;
    let count = binomial(levels + m - 1, m - 1);
    if count > cap as f64 {
        return Err(HarnessError::CapRefused {
            what: "lattice point",
            count,
            cap: cap as f64,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut steps = vec![0usize; m - 1];
    loop {
        let mut y = Vec::with_capacity(m);
        y.push(0.0);
        for &d in &steps {
            y.push(y.last().unwrap() + d as f64 * pitch);
        }
        out.push(y);
        // Next non-decreasing sequence in lexicographic order.
        let Some(i) = (0..steps.len()).rev().find(|&i| steps[i] < levels) else {
            return Ok(out);
        };
        let v = steps[i] + 1;
        for s in &mut steps[i..] {
            *s = v;
        }
    }
}

/// For each m, the minimum of K_m over a lattice in Γ_m against the exact
/// optimum.
pub fn oracle_outer_gap(
    model: &MdpModel,
    spec: &StepSpectrum,
    x0: usize,
    m_list: &[usize],
    oracle: &OracleSection,
    inner: &InnerOptions,
) -> Result<(OracleResult, Vec<GapRow>), HarnessError> {
    let exact = oracle_exact_optimum(model, spec, x0, oracle.policy_cap)?;
    let c_hat = cost_cap(model)?;
    let phi1 = spec.max_value();
    let pitch = oracle.lattice_pitch * c_hat.max(f64::MIN_POSITIVE);
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let bound = error_bound(m, phi1, c_hat)?;
        let points = lattice(m, c_hat, phi1, pitch, oracle.lattice_cap)?;
        let values: Vec<f64> = points
            .par_iter()
            .map(|y| {
                let g = GPoly::on_grid(c_hat, y.clone(), phi1)?;
                Ok(objective_k(model, &g, spec, x0, inner)?.value)
            })
            .collect::<Result<_, HarnessError>>()?;
        let mut best = 0;
        for (i, &v) in values.iter().enumerate() {
            if v < values[best] {
                best = i;
            }
        }
        rows.push(GapRow {
            m,
            bound,
            pitch,
            lattice_points: points.len(),
            best_value: values[best],
            oracle_value: exact.value,
            gap: values[best] - exact.value,
            best_y: points[best].clone(),
        });
    }
    Ok((exact, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{StageData, Stages, Transition};

    /// One state; "sure" costs 1, "gamble" costs 0 or 2.2 with equal odds.
    pub(crate) fn micro(horizon: usize) -> MdpModel {
        let data = StageData::build(
            1,
            2,
            vec![0.0, 1.0],
            vec![0.5, 0.5],
            vec![vec![0, 1]],
            |_, a, z| {
                let cost = if a == 0 {
                    1.0
                } else if z == 0 {
                    0.0
                } else {
                    2.2
                };
                Ok(Transition { next: 0, cost })
            },
        )
        .unwrap();
        MdpModel::new(
            vec![0.0],
            vec!["sure".into(), "gamble".into()],
            Stages::Stationary(data),
            vec![0.0],
            1.0,
            Horizon::Finite(horizon),
            None,
        )
        .unwrap()
    }

    #[test]
    fn micro_example() {
        let es = StepSpectrum::expected_shortfall(0.5).unwrap();
        let r = oracle_exact_optimum(&micro(1), &es, 0, 1e6).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.decisions.len(), 1);
        assert_eq!(r.decisions[0].action, 0);
        assert_eq!(r.policy_count, 2.0);
    }

    #[test]
    fn counts_history_dependent_policies() {
        // 2 root choices times 2 choices at each of the 2 children.
        assert_eq!(policy_count(&micro(2), 0).unwrap(), 8.0);
        assert_eq!(policy_count(&micro(3), 0).unwrap(), 128.0);
        let es = StepSpectrum::expected_shortfall(0.5).unwrap();
        let err = oracle_exact_optimum(&micro(3), &es, 0, 100.0).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn expected_oracle_matches_hand_value() {
        let g = GPoly::identity(3.0).unwrap();
        let r = oracle_expected_optimum(&micro(1), &g, 0, 1e6).unwrap();
        assert_eq!(r.value, 1.0);
        let sq = GPoly::with_knots(vec![0.0, 1.0, 3.0], vec![0.0, 0.0, 2.0], 1.0).unwrap();
        let r = oracle_expected_optimum(&micro(1), &sq, 0, 1e6).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.decisions[0].action, 0);
    }

    #[test]
    fn zero_horizon() {
        let es = StepSpectrum::expected_shortfall(0.5).unwrap();
        let r = oracle_exact_optimum(&micro(0), &es, 0, 1e6).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.decisions.is_empty());
    }

    #[test]
    fn lattice_enumerates_monotone_increments() {
        let pts = lattice(3, 2.0, 1.0, 0.5, 1000).unwrap();
        // Increments in {0, 0.5, 1}, non-decreasing: C(4, 2) = 6.
        assert_eq!(pts.len(), 6);
        assert!(pts
            .iter()
            .all(|y| y[0] == 0.0 && y[1] - y[0] <= y[2] - y[1]));
        assert!(lattice(5, 2.0, 1.0, 0.01, 10).is_err());
    }

    #[test]
    fn gap_with_two_knots() {
        let es = StepSpectrum::expected_shortfall(0.5).unwrap();
        let model = micro(1);
        let oracle = OracleSection {
            lattice_pitch: 0.02,
            ..OracleSection::default()
        };
        let (exact, rows) =
            oracle_outer_gap(&model, &es, 0, &[2, 3], &oracle, &InnerOptions::default()).unwrap();
        assert_eq!(exact.value, 1.0);
        for r in &rows {
            assert!(r.gap >= -1e-12);
            assert!(r.gap <= r.bound + r.pitch * (1.0 + 2.0) + 1e-12, "{r:?}");
        }
    }
}
