//! Backward induction and value iteration on the extended state space.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{ExtendedState, Horizon, MdpModel, StageData};
use super::table::{MarkovPolicy, Policy, Slice, StageGrid, ValueTable};
use super::MdpError;
use crate::risk::{equidistant_knots, DiscreteDistribution, GPoly};

/// How the s-axis is discretized for finite horizons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SMode {
    /// The exact forward-reachable accumulated costs.
    Exact,
    /// An equidistant grid on [0, ĉ] with linear interpolation.
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerOptions {
    pub mode: SMode,
    /// Maximum number of reachable (x, s) points in exact mode before
    /// falling back to the grid.
    pub exact_cap: usize,
    pub s_points: usize,
    /// Finite-horizon grid mode stores t-levels β^n·m for each multiplier m.
    pub t_multipliers: Vec<f64>,
    /// Stopping tolerance for infinite-horizon value iteration.
    pub tolerance: f64,
    /// The infinite-horizon s-grid covers [0, ĉ·(1 + s_margin)].
    pub s_margin: f64,
    pub max_iterations: usize,
}

impl Default for InnerOptions {
    fn default() -> Self {
        InnerOptions {
            mode: SMode::Exact,
            exact_cap: 200_000,
            s_points: 201,
            t_multipliers: vec![1.0],
            tolerance: 1e-6,
            s_margin: 0.1,
            max_iterations: 10_000,
        }
    }
}

impl InnerOptions {
    pub fn grid(s_points: usize) -> Self {
        InnerOptions {
            mode: SMode::Grid,
            s_points,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), MdpError> {
        if self.s_points < 2 {
            return Err(MdpError::Domain("need at least two s-grid points".into()));
        }
        if !(self.tolerance > 0.0) || !(self.s_margin >= 0.0) {
            return Err(MdpError::Domain(
                "tolerance must be positive, margin non-negative".into(),
            ));
        }
        if self
            .t_multipliers
            .iter()
            .any(|m| !(*m > 0.0) || !m.is_finite())
            || !self.t_multipliers.contains(&1.0)
        {
            return Err(MdpError::Domain(
                "t multipliers must be positive and include 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    Exact,
    Interpolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub value_at_origin: f64,
    pub policy: MarkovPolicy,
    pub values: ValueTable,
    pub iterations: usize,
    /// sup |𝒯J − J| at termination; zero for finite horizons.
    pub residual: f64,
    pub discretization: Discretization,
    /// Exact mode was requested but the reachable set exceeded the cap.
    pub fallback: bool,
    /// Largest decrease between consecutive value iterates.
    pub max_decrease: f64,
    /// Largest violation of monotonicity in (s, t) or of the g(s) lower
    /// bound over all computed stages.
    pub invariant_violation: f64,
}

struct Layout {
    t_levels: Vec<f64>,
    s: Vec<Vec<f64>>,
}

type SuccessorLevel<'a> = &'a (dyn Fn(usize) -> Option<usize> + Sync);

/// One-step lookahead `E[v(T̂(x, s, t, a, Z))]` for every admissible action,
/// or only for `fixed`. Returns the minimum and its action; ties go to the
/// lowest action index.
fn backup<F>(
    data: &StageData,
    n: usize,
    x: usize,
    s: f64,
    t: f64,
    next: F,
    fixed: Option<usize>,
) -> Result<(f64, usize), MdpError>
where
    F: Fn(usize, f64) -> f64,
{
    let expect = |a: usize| -> Option<f64> {
        let mut acc = 0.0;
        for (z, &p) in data.probs().iter().enumerate() {
            let tr = data.transition(x, a, z)?;
            acc += p * next(tr.next, s + t * tr.cost);
        }
        Some(acc)
    };
    if let Some(a) = fixed {
        return expect(a).map(|v| (v, a)).ok_or(MdpError::Inadmissible {
            stage: n,
            state: x,
            action: a,
        });
    }
    let actions = data.admissible(x);
    let mut best = (expect(actions[0]).expect("admissible"), actions[0]);
    for &a in &actions[1..] {
        let v = expect(a).expect("admissible");
        if v < best.0 {
            best = (v, a);
        }
    }
    Ok(best)
}

#[allow(clippy::too_many_arguments)]
fn step(
    model: &MdpModel,
    n: usize,
    g: &GPoly,
    next: &StageGrid<f64>,
    s_axes: &[Vec<f64>],
    t_levels: &[f64],
    succ: SuccessorLevel<'_>,
    policy: Option<&dyn Policy>,
    clamp: bool,
) -> Result<(StageGrid<f64>, StageGrid<usize>), MdpError> {
    let data = model.stage(n);
    let slope = g.max_slope();
    let per_state: Vec<(Slice<f64>, Slice<usize>)> = (0..model.n_states())
        .into_par_iter()
        .map(|x| {
            let s_axis = &s_axes[x];
            let mut values = Vec::with_capacity(s_axis.len() * t_levels.len());
            let mut actions = Vec::with_capacity(values.capacity());
            for (j, &t) in t_levels.iter().enumerate() {
                let lookup = |x2: usize, s2: f64| match succ(j) {
                    Some(j2) => next.slices[x2].value(s2, j2, slope),
                    None => g.eval(s2),
                };
                for &s in s_axis {
                    let fixed = match policy {
                        Some(p) => Some(p.decide(n, x, s, t).ok_or(MdpError::PolicyUndefined {
                            stage: n,
                            state: x,
                            s,
                            t,
                        })?),
                        None => None,
                    };
                    let (v, a) = backup(data, n, x, s, t, lookup, fixed)?;
                    values.push(if clamp { v.max(g.eval(s)) } else { v });
                    actions.push(a);
                }
            }
            Ok((
                Slice {
                    s: s_axis.clone(),
                    data: values,
                },
                Slice {
                    s: s_axis.clone(),
                    data: actions,
                },
            ))
        })
        .collect::<Result<_, MdpError>>()?;
    let (vs, rs): (Vec<_>, Vec<_>) = per_state.into_iter().unzip();
    Ok((
        StageGrid {
            t_levels: t_levels.to_vec(),
            slices: vs,
        },
        StageGrid {
            t_levels: t_levels.to_vec(),
            slices: rs,
        },
    ))
}

/// Largest violation of: increasing in s, increasing in t (levels ascending),
/// and value ≥ g(s).
pub fn membership_violation(grid: &StageGrid<f64>, g: &GPoly) -> f64 {
    let mut worst: f64 = 0.0;
    let ascending = grid.t_levels.windows(2).all(|w| w[0] <= w[1]);
    for slice in &grid.slices {
        let n = slice.s.len();
        for j in 0..grid.t_levels.len() {
            let row = slice.row(j);
            for i in 0..n {
                worst = worst.max(g.eval(slice.s[i]) - row[i]);
                if i + 1 < n {
                    worst = worst.max(row[i] - row[i + 1]);
                }
                if ascending && j + 1 < grid.t_levels.len() {
                    worst = worst.max(row[i] - slice.get(j + 1, i));
                }
            }
        }
    }
    worst
}

/// Smallest increment between consecutive slopes of s ↦ J(x, s, t) over
/// all states and t-levels; negative values indicate non-convexity.
pub fn min_slope_increment(grid: &StageGrid<f64>) -> f64 {
    let mut worst = f64::INFINITY;
    for slice in &grid.slices {
        for j in 0..grid.t_levels.len() {
            let row = slice.row(j);
            for i in 1..slice.s.len().saturating_sub(1) {
                let left = (row[i] - row[i - 1]) / (slice.s[i] - slice.s[i - 1]);
                let right = (row[i + 1] - row[i]) / (slice.s[i + 1] - slice.s[i]);
                worst = worst.min(right - left);
            }
        }
    }
    worst
}

/// `L_n v(x, s, t, a) = E[v(T̂_n(x, s, t, a, Z))]`, reading `v` from the
/// next-stage table at the t-level nearest β·t.
pub fn apply_l(
    model: &MdpModel,
    n: usize,
    next: &StageGrid<f64>,
    g: &GPoly,
    es: ExtendedState,
    a: usize,
) -> Result<f64, MdpError> {
    model.check_state(es.x)?;
    let j = next.nearest_level(model.discount() * es.t);
    let (v, _) = backup(
        model.stage(n),
        n,
        es.x,
        es.s,
        es.t,
        |x2, s2| next.slices[x2].value(s2, j, g.max_slope()),
        Some(a),
    )?;
    Ok(v)
}

/// One Bellman step at stage `n` on the given per-state s-axes and t-levels.
/// Level `j` of the result reads level `j` of `next`.
pub fn bellman_step(
    model: &MdpModel,
    n: usize,
    next: &StageGrid<f64>,
    s_axes: &[Vec<f64>],
    t_levels: &[f64],
    g: &GPoly,
) -> Result<(StageGrid<f64>, StageGrid<usize>), MdpError> {
    if s_axes.len() != model.n_states() {
        return Err(MdpError::Domain("one s-axis per state expected".into()));
    }
    step(model, n, g, next, s_axes, t_levels, &Some, None, false)
}

fn finite_horizon(model: &MdpModel) -> Result<usize, MdpError> {
    match model.horizon() {
        Horizon::Finite(n) => Ok(n),
        Horizon::Infinite => Err(MdpError::Domain("model has an infinite horizon".into())),
    }
}

fn stage_discounts(model: &MdpModel, n: usize) -> Vec<f64> {
    let mut t = vec![1.0];
    for k in 0..n {
        t.push(model.discount() * t[k]);
    }
    t
}

/// Forward-reachable accumulated costs per stage and state, or `None` when
/// their total number exceeds `cap`.
fn reachable_layouts(
    model: &MdpModel,
    x0: usize,
    policy: Option<&dyn Policy>,
    cap: usize,
) -> Result<Option<Vec<Layout>>, MdpError> {
    let horizon = finite_horizon(model)?;
    let ts = stage_discounts(model, horizon);
    let mut current: Vec<Vec<f64>> = vec![Vec::new(); model.n_states()];
    current[x0].push(0.0);
    let mut total = 1;
    let mut layouts = Vec::with_capacity(horizon + 1);
    for (n, &t) in ts.iter().enumerate().take(horizon) {
        let data = model.stage(n);
        let mut next: Vec<HashSet<u64>> = vec![HashSet::new(); model.n_states()];
        for (x, points) in current.iter().enumerate() {
            for &s in points {
                let chosen;
                let actions: &[usize] = match policy {
                    None => data.admissible(x),
                    Some(p) => {
                        chosen = [p.decide(n, x, s, t).ok_or(MdpError::PolicyUndefined {
                            stage: n,
                            state: x,
                            s,
                            t,
                        })?];
                        &chosen
                    }
                };
                for &a in actions {
                    for z in 0..data.n_atoms() {
                        let tr = data.transition(x, a, z).ok_or(MdpError::Inadmissible {
                            stage: n,
                            state: x,
                            action: a,
                        })?;
                        next[tr.next].insert((s + t * tr.cost).to_bits());
                    }
                }
            }
        }
        layouts.push(Layout {
            t_levels: vec![t],
            s: current,
        });
        current = next
            .into_iter()
            .map(|set| {
                let mut v: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
                v.sort_by(f64::total_cmp);
                v
            })
            .collect();
        total += current.iter().map(Vec::len).sum::<usize>();
        if total > cap {
            return Ok(None);
        }
    }
    layouts.push(Layout {
        t_levels: vec![ts[horizon]],
        s: current,
    });
    Ok(Some(layouts))
}

fn s_axis(top: f64, points: usize) -> Vec<f64> {
    if top > 0.0 {
        equidistant_knots(top, points)
    } else {
        vec![0.0]
    }
}

fn sorted_multipliers(opts: &InnerOptions) -> Vec<f64> {
    let mut m = opts.t_multipliers.clone();
    m.sort_by(f64::total_cmp);
    m.dedup();
    m
}

fn grid_layouts(model: &MdpModel, opts: &InnerOptions) -> Result<Vec<Layout>, MdpError> {
    let horizon = finite_horizon(model)?;
    let axis = s_axis(model.total_cost_bound(), opts.s_points);
    let mults = sorted_multipliers(opts);
    Ok(stage_discounts(model, horizon)
        .into_iter()
        .map(|t| Layout {
            t_levels: mults.iter().map(|m| t * m).collect(),
            s: vec![axis.clone(); model.n_states()],
        })
        .collect())
}

struct Backward {
    values: ValueTable,
    policy: MarkovPolicy,
    violation: f64,
}

fn backward(
    model: &MdpModel,
    g: &GPoly,
    layouts: &[Layout],
    policy: Option<&dyn Policy>,
    clamp: bool,
) -> Result<Backward, MdpError> {
    let horizon = layouts.len() - 1;
    let last = &layouts[horizon];
    let terminal = StageGrid {
        t_levels: last.t_levels.clone(),
        slices: (0..model.n_states())
            .map(|x| {
                let c = model.terminal_cost()[x];
                let s = last.s[x].clone();
                let data = last
                    .t_levels
                    .iter()
                    .flat_map(|&t| s.iter().map(move |&si| g.eval(si + t * c)))
                    .collect();
                Slice { s, data }
            })
            .collect(),
    };
    let mut violation = membership_violation(&terminal, g);
    let mut values = vec![terminal];
    let mut rules = Vec::with_capacity(horizon);
    for n in (0..horizon).rev() {
        let layout = &layouts[n];
        let (v, r) = step(
            model,
            n,
            g,
            values.last().unwrap(),
            &layout.s,
            &layout.t_levels,
            &Some,
            policy,
            clamp,
        )?;
        violation = violation.max(membership_violation(&v, g));
        values.push(v);
        rules.push(r);
    }
    values.reverse();
    rules.reverse();
    Ok(Backward {
        values: ValueTable { stages: values },
        policy: MarkovPolicy {
            stages: rules,
            stationary: false,
        },
        violation,
    })
}

fn origin_value(grid: &StageGrid<f64>, x0: usize) -> f64 {
    let j = grid.t_levels.iter().position(|&t| t == 1.0).unwrap_or(0);
    grid.slices[x0].value(0.0, j, 0.0)
}

/// Minimizes E[g(C_N)] over policies by backward induction from
/// J_N(x, s, t) = g(s + t·c_N(x)).
pub fn solve_finite(
    model: &MdpModel,
    g: &GPoly,
    x0: usize,
    opts: &InnerOptions,
) -> Result<SolveReport, MdpError> {
    opts.validate()?;
    model.check_state(x0)?;
    let (layouts, fallback) = match opts.mode {
        SMode::Exact => match reachable_layouts(model, x0, None, opts.exact_cap)? {
            Some(l) => (l, false),
            None => (grid_layouts(model, opts)?, true),
        },
        SMode::Grid => (grid_layouts(model, opts)?, false),
    };
    let exact = opts.mode == SMode::Exact && !fallback;
    let b = backward(model, g, &layouts, None, !exact)?;
    Ok(SolveReport {
        value_at_origin: origin_value(&b.values.stages[0], x0),
        iterations: layouts.len() - 1,
        policy: b.policy,
        values: b.values,
        residual: 0.0,
        discretization: if exact {
            Discretization::Exact
        } else {
            Discretization::Interpolated
        },
        fallback,
        max_decrease: 0.0,
        invariant_violation: b.violation,
    })
}

struct InfiniteGrid {
    s: Vec<Vec<f64>>,
    t_levels: Vec<f64>,
}

const MAX_T_LEVELS: usize = 100_000;

fn infinite_grid(
    model: &MdpModel,
    g: &GPoly,
    opts: &InnerOptions,
) -> Result<InfiniteGrid, MdpError> {
    if model.horizon() != Horizon::Infinite {
        return Err(MdpError::Domain("model has a finite horizon".into()));
    }
    let beta = model.discount();
    if beta >= 1.0 {
        return Err(MdpError::Domain(format!("discount {beta} must be below 1")));
    }
    if !model.is_stationary() {
        return Err(MdpError::Domain(
            "infinite horizon needs stationary data".into(),
        ));
    }
    let c_hat = model.total_cost_bound();
    let axis = s_axis(c_hat * (1.0 + opts.s_margin), opts.s_points);
    let mut t_levels = vec![1.0];
    let tail = |t: f64| g.max_slope() * t * c_hat;
    while tail(*t_levels.last().unwrap()) >= 0.5 * opts.tolerance {
        if t_levels.len() >= MAX_T_LEVELS {
            return Err(MdpError::Domain(
                "too many t-levels for this tolerance".into(),
            ));
        }
        t_levels.push(beta * t_levels.last().unwrap());
    }
    t_levels.reverse();
    Ok(InfiniteGrid {
        s: vec![axis; model.n_states()],
        t_levels,
    })
}

/// Value iteration J_{k+1} = 𝒯 J_k from J_0 = g, optionally with fixed
/// decisions. t-levels are stored ascending, so the successor of level j is
/// j − 1 and the smallest level reads g.
fn value_iteration(
    model: &MdpModel,
    g: &GPoly,
    x0: usize,
    opts: &InnerOptions,
    policy: Option<&dyn Policy>,
) -> Result<SolveReport, MdpError> {
    opts.validate()?;
    model.check_state(x0)?;
    let grid = infinite_grid(model, g, opts)?;
    let succ = |j: usize| j.checked_sub(1);
    let mut current = StageGrid {
        t_levels: grid.t_levels.clone(),
        slices: grid
            .s
            .iter()
            .map(|axis| Slice {
                s: axis.clone(),
                data: grid
                    .t_levels
                    .iter()
                    .flat_map(|_| axis.iter().map(|&s| g.eval(s)))
                    .collect(),
            })
            .collect(),
    };
    let beta = model.discount();
    let tail_scale = g.max_slope() * model.total_cost_bound();
    let sweep =
        |v: &StageGrid<f64>| step(model, 0, g, v, &grid.s, &grid.t_levels, &succ, policy, true);
    let mut max_decrease: f64 = 0.0;
    let mut violation: f64 = 0.0;
    let mut iterations = 0;
    let mut t_k = 1.0;
    loop {
        if iterations >= opts.max_iterations {
            return Err(MdpError::NotConverged {
                iterations,
                residual: f64::NAN,
            });
        }
        let (next, _) = sweep(&current)?;
        iterations += 1;
        t_k *= beta;
        let (diff, decrease) = sup_change(&current, &next);
        max_decrease = max_decrease.max(decrease);
        violation = violation.max(membership_violation(&next, g));
        current = next;
        // Half the tolerance goes to the t cutoff, half to stopping early.
        let half = 0.5 * opts.tolerance;
        if diff * beta <= half * (1.0 - beta) || tail_scale * t_k <= half {
            break;
        }
    }
    let (last, rules) = sweep(&current)?;
    let (residual, decrease) = sup_change(&current, &last);
    max_decrease = max_decrease.max(decrease);
    violation = violation.max(membership_violation(&last, g));
    if residual > opts.tolerance {
        return Err(MdpError::NotConverged {
            iterations,
            residual,
        });
    }
    let top = last.t_levels.len() - 1;
    Ok(SolveReport {
        value_at_origin: last.slices[x0].value(0.0, top, 0.0),
        policy: MarkovPolicy {
            stages: vec![rules],
            stationary: true,
        },
        values: ValueTable { stages: vec![last] },
        iterations,
        residual,
        discretization: Discretization::Interpolated,
        fallback: false,
        max_decrease,
        invariant_violation: violation,
    })
}

/// (sup |b − a|, max(a − b)) over all grid points.
fn sup_change(a: &StageGrid<f64>, b: &StageGrid<f64>) -> (f64, f64) {
    let mut diff: f64 = 0.0;
    let mut decrease: f64 = 0.0;
    for (sa, sb) in a.slices.iter().zip(&b.slices) {
        for (&va, &vb) in sa.data.iter().zip(&sb.data) {
            diff = diff.max((vb - va).abs());
            decrease = decrease.max(va - vb);
        }
    }
    (diff, decrease)
}

/// Smallest fixed point of the Bellman operator above g, by value iteration.
///
/// Iteration stops once β/(1 − β) times the last sup-norm increment, or the
/// tail bound φ(1)·ĉ·β^K, is at most half the tolerance; the t cutoff uses
/// the other half.
pub fn solve_infinite(
    model: &MdpModel,
    g: &GPoly,
    x0: usize,
    opts: &InnerOptions,
) -> Result<SolveReport, MdpError> {
    value_iteration(model, g, x0, opts, None)
}

/// Dispatches on the model's horizon.
pub fn solve(
    model: &MdpModel,
    g: &GPoly,
    x0: usize,
    opts: &InnerOptions,
) -> Result<SolveReport, MdpError> {
    match model.horizon() {
        Horizon::Finite(_) => solve_finite(model, g, x0, opts),
        Horizon::Infinite => solve_infinite(model, g, x0, opts),
    }
}

/// E[g(C)] under a fixed Markov policy on the extended state space.
///
/// Finite horizons in exact mode run the backward recursion on the states
/// reachable under the policy and give the exact expectation.
pub fn evaluate_policy(
    model: &MdpModel,
    policy: &dyn Policy,
    g: &GPoly,
    x0: usize,
    opts: &InnerOptions,
) -> Result<f64, MdpError> {
    opts.validate()?;
    model.check_state(x0)?;
    match model.horizon() {
        Horizon::Finite(_) => {
            let (layouts, exact) = match opts.mode {
                SMode::Exact => match reachable_layouts(model, x0, Some(policy), opts.exact_cap)? {
                    Some(l) => (l, true),
                    None => (grid_layouts(model, opts)?, false),
                },
                SMode::Grid => (grid_layouts(model, opts)?, false),
            };
            let b = backward(model, g, &layouts, Some(policy), !exact)?;
            Ok(origin_value(&b.values.stages[0], x0))
        }
        Horizon::Infinite => Ok(value_iteration(model, g, x0, opts, Some(policy))?.value_at_origin),
    }
}

/// Law of the total discounted cost under a Markov policy.
///
/// Exact for finite horizons (fails with [`MdpError::CapExceeded`] when the
/// support outgrows `opts.exact_cap`). For infinite horizons the path is
/// truncated once the remaining cost is below the tolerance and accumulated
/// costs are binned to a fine grid.
pub fn policy_cost_distribution(
    model: &MdpModel,
    policy: &dyn Policy,
    x0: usize,
    opts: &InnerOptions,
) -> Result<DiscreteDistribution, MdpError> {
    model.check_state(x0)?;
    let beta = model.discount();
    let (stages, quantum) = match model.horizon() {
        Horizon::Finite(n) => (n, None),
        Horizon::Infinite => {
            let c_hat = model.total_cost_bound();
            let mut k = 0;
            let mut t = 1.0;
            while t * c_hat > opts.tolerance && k < MAX_T_LEVELS {
                t *= beta;
                k += 1;
            }
            (k, Some(c_hat / (16.0 * opts.s_points as f64)))
        }
    };
    let bin = |s: f64| match quantum {
        Some(q) if q > 0.0 => (s / q).round() * q,
        _ => s,
    };
    let mut current: Vec<HashMap<u64, f64>> = vec![HashMap::new(); model.n_states()];
    current[x0].insert(0.0f64.to_bits(), 1.0);
    let mut t = 1.0;
    for n in 0..stages {
        let data = model.stage(n);
        let mut next: Vec<HashMap<u64, f64>> = vec![HashMap::new(); model.n_states()];
        let mut support = 0;
        for (x, points) in current.iter().enumerate() {
            let mut ordered: Vec<(f64, f64)> = points
                .iter()
                .map(|(&b, &p)| (f64::from_bits(b), p))
                .collect();
            ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (s, p) in ordered {
                let a = policy.decide(n, x, s, t).ok_or(MdpError::PolicyUndefined {
                    stage: n,
                    state: x,
                    s,
                    t,
                })?;
                for (z, &q) in data.probs().iter().enumerate() {
                    let tr = data.transition(x, a, z).ok_or(MdpError::Inadmissible {
                        stage: n,
                        state: x,
                        action: a,
                    })?;
                    let entry = next[tr.next]
                        .entry(bin(s + t * tr.cost).to_bits())
                        .or_insert(0.0);
                    if *entry == 0.0 {
                        support += 1;
                    }
                    *entry += p * q;
                }
            }
        }
        if support > opts.exact_cap {
            return Err(MdpError::CapExceeded {
                size: support,
                cap: opts.exact_cap,
            });
        }
        current = next;
        t *= beta;
    }
    let mut pairs = Vec::new();
    for (x, points) in current.iter().enumerate() {
        let c = model.terminal_cost()[x];
        for (&b, &p) in points {
            pairs.push((f64::from_bits(b) + t * c, p));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(DiscreteDistribution::from_weighted(pairs)?)
}

/// The policy minimizing the expected one-stage cost at every state,
/// ignoring (s, t).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MyopicPolicy {
    rules: Vec<Vec<usize>>,
}

impl MyopicPolicy {
    pub fn new(model: &MdpModel) -> Self {
        let stages = match model.horizon() {
            Horizon::Finite(n) if !model.is_stationary() => n,
            _ => 1,
        };
        let rules = (0..stages)
            .map(|n| {
                let data = model.stage(n);
                (0..model.n_states())
                    .map(|x| {
                        let mean = |a: usize| -> f64 {
                            data.probs()
                                .iter()
                                .enumerate()
                                .map(|(z, p)| p * data.transition(x, a, z).unwrap().cost)
                                .sum()
                        };
                        let actions = data.admissible(x);
                        let mut best = actions[0];
                        let mut best_v = mean(best);
                        for &a in &actions[1..] {
                            let v = mean(a);
                            if v < best_v {
                                best = a;
                                best_v = v;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect();
        MyopicPolicy { rules }
    }
}

impl Policy for MyopicPolicy {
    fn decide(&self, n: usize, x: usize, _s: f64, _t: f64) -> Option<usize> {
        let rule = if self.rules.len() == 1 {
            &self.rules[0]
        } else {
            self.rules.get(n)?
        };
        rule.get(x).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::model::{Stages, Transition};
    use crate::mdp::table::FnPolicy;

    /// One state; action 0 costs 1 surely, action 1 costs 0 or 2.2.
    fn micro(horizon: Horizon, beta: f64) -> MdpModel {
        let costs = [[1.0, 1.0], [0.0, 2.2]];
        let data = StageData::build(
            1,
            2,
            vec![0.0, 1.0],
            vec![0.5, 0.5],
            vec![vec![0, 1]],
            |_, a, z| {
                Ok(Transition {
                    next: 0,
                    cost: costs[a][z],
                })
            },
        )
        .unwrap();
        MdpModel::new(
            vec![0.0],
            vec!["a1".into(), "a2".into()],
            Stages::Stationary(data),
            vec![0.0],
            beta,
            horizon,
            None,
        )
        .unwrap()
    }

    fn geometric(beta: f64) -> MdpModel {
        let data = StageData::build(1, 1, vec![0.0], vec![1.0], vec![vec![0]], |_, _, _| {
            Ok(Transition { next: 0, cost: 1.0 })
        })
        .unwrap();
        MdpModel::new(
            vec![0.0],
            vec!["a".into()],
            Stages::Stationary(data),
            vec![0.0],
            beta,
            Horizon::Infinite,
            None,
        )
        .unwrap()
    }

    fn hinge(q: f64, cap: f64) -> GPoly {
        GPoly::with_knots(vec![0.0, q, cap], vec![0.0, 0.0, cap - q], 1.0).unwrap()
    }

    #[test]
    fn micro_instance_identity_g() {
        let m = micro(Horizon::Finite(1), 1.0);
        let g = GPoly::identity(m.total_cost_bound()).unwrap();
        let r = solve_finite(&m, &g, 0, &InnerOptions::default()).unwrap();
        assert_eq!(r.value_at_origin, 1.0);
        assert_eq!(r.policy.decide(0, 0, 0.0, 1.0), Some(0));
        assert_eq!(r.discretization, Discretization::Exact);
    }

    #[test]
    fn micro_instance_hinge_g() {
        let m = micro(Horizon::Finite(1), 1.0);
        let r = solve_finite(&m, &hinge(1.0, 4.4), 0, &InnerOptions::default()).unwrap();
        assert_eq!(r.value_at_origin, 0.0);
        assert_eq!(r.policy.decide(0, 0, 0.0, 1.0), Some(0));
    }

    #[test]
    fn fixed_policy_evaluation() {
        let m = micro(Horizon::Finite(1), 1.0);
        let g = GPoly::identity(m.total_cost_bound()).unwrap();
        let always_a2 = FnPolicy(|_, _, _, _| 1);
        let v = evaluate_policy(&m, &always_a2, &g, 0, &InnerOptions::default()).unwrap();
        assert!((v - (0.5 * 0.0 + 0.5 * 2.2)).abs() < 1e-15);

        let r = solve_finite(&m, &g, 0, &InnerOptions::default()).unwrap();
        let v = evaluate_policy(&m, &r.policy, &g, 0, &InnerOptions::default()).unwrap();
        assert_eq!(v, r.value_at_origin);
    }

    #[test]
    fn apply_l_averages_successors() {
        let m = micro(Horizon::Finite(1), 1.0);
        let next = StageGrid {
            t_levels: vec![1.0],
            slices: vec![Slice {
                s: vec![0.0, 2.2],
                data: vec![0.0, 2.0],
            }],
        };
        let g = GPoly::identity(3.0).unwrap();
        let v = apply_l(&m, 0, &next, &g, ExtendedState::origin(0), 1).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn zero_cost_model_gives_g_at_zero() {
        let data = StageData::build(
            2,
            1,
            vec![0.0],
            vec![1.0],
            vec![vec![0], vec![0]],
            |x, _, _| {
                Ok(Transition {
                    next: 1 - x,
                    cost: 0.0,
                })
            },
        )
        .unwrap();
        let m = MdpModel::new(
            vec![0.0, 1.0],
            vec!["a".into()],
            Stages::Stationary(data),
            vec![0.0, 0.0],
            0.9,
            Horizon::Finite(3),
            None,
        )
        .unwrap();
        let g = GPoly::on_grid(0.0, vec![0.25], 1.0).unwrap();
        let r = solve_finite(&m, &g, 0, &InnerOptions::default()).unwrap();
        assert_eq!(r.value_at_origin, 0.25);
    }

    #[test]
    fn grid_mode_matches_exact_on_linear_g() {
        let m = micro(Horizon::Finite(3), 0.9);
        let g = GPoly::identity(m.total_cost_bound()).unwrap();
        let exact = solve_finite(&m, &g, 0, &InnerOptions::default()).unwrap();
        let opts = InnerOptions {
            t_multipliers: vec![0.5, 1.0],
            ..InnerOptions::grid(101)
        };
        let grid = solve_finite(&m, &g, 0, &opts).unwrap();
        assert!((exact.value_at_origin - grid.value_at_origin).abs() < 1e-12);
        assert!(grid.invariant_violation < 1e-12);
        assert_eq!(grid.discretization, Discretization::Interpolated);
    }

    #[test]
    fn exact_cap_falls_back_to_grid() {
        let m = micro(Horizon::Finite(3), 0.9);
        let g = GPoly::identity(m.total_cost_bound()).unwrap();
        let opts = InnerOptions {
            exact_cap: 3,
            ..InnerOptions::default()
        };
        let r = solve_finite(&m, &g, 0, &opts).unwrap();
        assert!(r.fallback);
        assert_eq!(r.discretization, Discretization::Interpolated);
    }

    #[test]
    fn geometric_series() {
        let m = geometric(0.5);
        let g = GPoly::identity(m.total_cost_bound()).unwrap();
        let r = solve_infinite(&m, &g, 0, &InnerOptions::default()).unwrap();
        assert!(
            (r.value_at_origin - 2.0).abs() <= 1e-6,
            "{}",
            r.value_at_origin
        );
        assert!(r.residual <= 1e-6);
        assert!(r.max_decrease <= 1e-12);
    }

    #[test]
    fn infinite_zero_cost_is_g() {
        let data = StageData::build(1, 1, vec![0.0], vec![1.0], vec![vec![0]], |_, _, _| {
            Ok(Transition { next: 0, cost: 0.0 })
        })
        .unwrap();
        let m = MdpModel::new(
            vec![0.0],
            vec!["a".into()],
            Stages::Stationary(data),
            vec![0.0],
            0.5,
            Horizon::Infinite,
            Some(1.0),
        )
        .unwrap();
        let g = GPoly::on_grid(2.0, vec![0.3, 0.5, 1.5], 1.0).unwrap();
        let r = solve_infinite(&m, &g, 0, &InnerOptions::default()).unwrap();
        let grid = &r.values.stages[0];
        for slice in &grid.slices {
            for j in 0..grid.t_levels.len() {
                for (i, &s) in slice.s.iter().enumerate() {
                    assert!((slice.get(j, i) - g.eval(s)).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn infinite_rejects_finite_models() {
        let m = micro(Horizon::Finite(2), 0.5);
        let g = GPoly::identity(1.0).unwrap();
        assert!(matches!(
            solve_infinite(&m, &g, 0, &InnerOptions::default()),
            Err(MdpError::Domain(_))
        ));
    }

    #[test]
    fn cost_distribution_of_fixed_policy() {
        let m = micro(Horizon::Finite(2), 1.0);
        let d =
            policy_cost_distribution(&m, &FnPolicy(|_, _, _, _| 1), 0, &InnerOptions::default())
                .unwrap();
        assert_eq!(d.atoms(), &[0.0, 2.2, 4.4]);
        assert_eq!(d.probs(), &[0.25, 0.5, 0.25]);
        let myopic = MyopicPolicy::new(&m);
        assert_eq!(myopic.decide(0, 0, 0.0, 1.0), Some(0));
    }
}
