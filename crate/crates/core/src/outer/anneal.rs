//! Seeded simulated annealing over Γ_m.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conjugate::{
    conjugate_integral, cost_cap, error_bound, grid_size_from_epsilon, isotonic_project, project_pm,
};
use super::OuterError;
use crate::mdp::{
    policy_cost_distribution, solve, InnerOptions, MdpModel, MyopicPolicy, Policy, SolveReport,
};
use crate::risk::{minimizer_g, DiscreteDistribution, GPoly, StepSpectrum};

/// Knot values are rounded to this quantum for the evaluation cache.
pub const CACHE_QUANTUM: f64 = 1e-9;

/// Search parameters. Temperatures are in units of ĉ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterConfig {
    /// Target restriction error; ignored when `m` is set.
    pub epsilon: Option<f64>,
    pub m: Option<usize>,
    pub restarts: usize,
    pub anneal_steps: usize,
    pub initial_temperature: f64,
    pub cooling_rate: f64,
    pub move_scale: f64,
    pub seed: u64,
    /// Rounds of fixed-policy improvement applied to each chain's best point.
    pub refine_rounds: usize,
    #[serde(skip)]
    pub inner: InnerOptions,
}

impl Default for OuterConfig {
    fn default() -> Self {
        OuterConfig {
            epsilon: Some(0.1),
            m: None,
            restarts: 4,
            anneal_steps: 1500,
            initial_temperature: 0.05,
            cooling_rate: 0.997,
            move_scale: 0.25,
            seed: 7,
            refine_rounds: 8,
            inner: InnerOptions::default(),
        }
    }
}

impl OuterConfig {
    pub fn validate(&self) -> Result<(), OuterError> {
        let bad = |m: &str| Err(OuterError::Domain(m.into()));
        match (self.epsilon, self.m) {
            (None, None) => return bad("either epsilon or m is required"),
            (_, Some(m)) if m < 2 => return bad("m must be at least 2"),
            (Some(e), None) if !(e > 0.0) => return bad("epsilon must be positive"),
            _ => {}
        }
        if self.restarts == 0 {
            return bad("restarts must be positive");
        }
        if !(self.initial_temperature > 0.0) || !(self.move_scale > 0.0) {
            return bad("temperature and move scale must be positive");
        }
        if !(self.cooling_rate > 0.0 && self.cooling_rate < 1.0) {
            return bad("cooling rate must lie in (0, 1)");
        }
        Ok(())
    }

    /// The knot count: `m` if given, otherwise from `epsilon`.
    pub fn knots(&self, phi1: f64, c_hat: f64) -> Result<usize, OuterError> {
        match (self.m, self.epsilon) {
            (Some(m), _) => Ok(m),
            (None, Some(e)) => grid_size_from_epsilon(phi1, c_hat, e),
            (None, None) => Err(OuterError::Domain("either epsilon or m is required".into())),
        }
    }
}

/// One evaluation of K(g) = J(g) + ∫ g*(φ(u)) du.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KEvaluation {
    pub value: f64,
    pub conjugate_integral: f64,
    pub inner: SolveReport,
}

pub fn objective_k(
    model: &MdpModel,
    g: &GPoly,
    spec: &StepSpectrum,
    x0: usize,
    inner: &InnerOptions,
) -> Result<KEvaluation, OuterError> {
    let report = solve(model, g, x0, inner)?;
    let integral = conjugate_integral(g, spec)?;
    Ok(KEvaluation {
        value: report.value_at_origin + integral,
        conjugate_integral: integral,
        inner: report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub start_value: f64,
    pub best_value: f64,
    pub accepted: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterResult {
    pub best_y: Vec<f64>,
    pub best_value: f64,
    pub inner_report: SolveReport,
    pub conjugate_integral: f64,
    pub error_bound: f64,
    pub evaluations: usize,
    pub m: usize,
    pub c_hat: f64,
    pub phi1: f64,
    pub restarts: Vec<RestartSummary>,
}

impl OuterResult {
    pub fn best_g(&self) -> GPoly {
        GPoly::on_grid(self.c_hat, self.best_y.clone(), self.phi1)
            .expect("feasible by construction")
    }
}

struct Problem<'a> {
    model: &'a MdpModel,
    spec: &'a StepSpectrum,
    x0: usize,
    cfg: &'a OuterConfig,
    m: usize,
    c_hat: f64,
    phi1: f64,
}

struct Chain<'a> {
    problem: &'a Problem<'a>,
    cache: HashMap<Vec<i64>, f64>,
    evaluations: usize,
}

impl<'a> Chain<'a> {
    fn new(problem: &'a Problem<'a>) -> Self {
        Chain {
            problem,
            cache: HashMap::new(),
            evaluations: 0,
        }
    }

    fn g(&self, y: &[f64]) -> Result<GPoly, OuterError> {
        Ok(GPoly::on_grid(
            self.problem.c_hat,
            y.to_vec(),
            self.problem.phi1,
        )?)
    }

    fn eval(&mut self, y: &[f64]) -> Result<f64, OuterError> {
        let key: Vec<i64> = y
            .iter()
            .map(|v| (v / CACHE_QUANTUM).round() as i64)
            .collect();
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let p = self.problem;
        let k = objective_k(p.model, &self.g(y)?, p.spec, p.x0, &p.cfg.inner)?;
        self.evaluations += 1;
        self.cache.insert(key, k.value);
        Ok(k.value)
    }

    /// Re-centres g on the cost law of the policy that is optimal for g.
    fn refine(&mut self, y: &[f64]) -> Result<Option<Vec<f64>>, OuterError> {
        let p = self.problem;
        let report = solve(p.model, &self.g(y)?, p.x0, &p.cfg.inner)?;
        start_from_policy(p, &report.policy)
            .map(Some)
            .or_else(|e| match e {
                OuterError::Mdp(_) => Ok(None),
                other => Err(other),
            })
    }
}

fn start_from_distribution(
    p: &Problem<'_>,
    dist: &DiscreteDistribution,
) -> Result<Vec<f64>, OuterError> {
    let g = minimizer_g(p.spec, dist)?;
    Ok(project_pm(|s| g.eval(s), p.m, p.c_hat, p.phi1)?
        .g
        .values()
        .to_vec())
}

fn start_from_policy(p: &Problem<'_>, policy: &dyn Policy) -> Result<Vec<f64>, OuterError> {
    let dist = policy_cost_distribution(p.model, policy, p.x0, &p.cfg.inner)?;
    start_from_distribution(p, &dist)
}

fn random_start(p: &Problem<'_>, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, OuterError> {
    let atoms: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * p.c_hat).collect();
    let weights: Vec<f64> = (0..3).map(|_| 0.05 + rng.random::<f64>()).collect();
    let dist = DiscreteDistribution::from_weighted(atoms.into_iter().zip(weights))?;
    start_from_distribution(p, &dist)
}

fn run_chain(
    p: &Problem<'_>,
    restart: usize,
    warm: &[f64],
) -> Result<(Vec<f64>, f64, RestartSummary), OuterError> {
    let cfg = p.cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(restart as u64);
    let mut chain = Chain::new(p);

    let start = if restart == 0 {
        warm.to_vec()
    } else {
        random_start(p, &mut rng)?
    };
    let mut current = start;
    let mut current_value = chain.eval(&current)?;
    let start_value = current_value;
    let mut best = current.clone();
    let mut best_value = current_value;
    let mut accepted = 0;

    let t0 = cfg.initial_temperature * p.c_hat;
    let mut temperature = t0;
    for _ in 0..cfg.anneal_steps {
        let k = rng.random_range(0..p.m);
        let amplitude = cfg.move_scale * p.c_hat * (temperature / t0).max(1e-3);
        let mut proposal = current.clone();
        proposal[k] += amplitude * (2.0 * rng.random::<f64>() - 1.0);
        let proposal = isotonic_project(&proposal, p.c_hat, p.phi1);
        let value = chain.eval(&proposal)?;
        let u: f64 = rng.random();
        if value <= current_value || u < (-(value - current_value) / temperature).exp() {
            current = proposal;
            current_value = value;
            accepted += 1;
            if value < best_value {
                best = current.clone();
                best_value = value;
            }
        }
        temperature *= cfg.cooling_rate;
    }

    for _ in 0..cfg.refine_rounds {
        let Some(candidate) = chain.refine(&best)? else {
            break;
        };
        let value = chain.eval(&candidate)?;
        if value < best_value {
            best = candidate;
            best_value = value;
        } else {
            break;
        }
    }

    let summary = RestartSummary {
        restart,
        start_value,
        best_value,
        accepted,
        evaluations: chain.evaluations,
    };
    Ok((best, best_value, summary))
}

/// Minimizes K_m over Γ_m by multistart simulated annealing.
///
/// Restart 0 starts from p_m of the minimizing disutility for the cost law
/// of the myopic policy; the others from random three-point laws. Restarts
/// run in parallel with per-restart RNG streams, so the result depends only
/// on the configuration.
pub fn anneal(
    model: &MdpModel,
    spec: &StepSpectrum,
    x0: usize,
    cfg: &OuterConfig,
) -> Result<OuterResult, OuterError> {
    cfg.validate()?;
    let c_hat = cost_cap(model)?;
    let phi1 = spec.max_value();
    let m = cfg.knots(phi1, c_hat)?;
    let bound = error_bound(m, phi1, c_hat)?;
    if c_hat == 0.0 {
        // Γ_m collapses to g = 0; every policy has cost 0.
        let g = GPoly::on_grid(0.0, vec![0.0; m], phi1)?;
        let k = objective_k(model, &g, spec, x0, &cfg.inner)?;
        return Ok(OuterResult {
            best_y: vec![0.0; m],
            best_value: k.value,
            inner_report: k.inner,
            conjugate_integral: k.conjugate_integral,
            error_bound: bound,
            evaluations: 1,
            m,
            c_hat,
            phi1,
            restarts: Vec::new(),
        });
    }
    let problem = Problem {
        model,
        spec,
        x0,
        cfg,
        m,
        c_hat,
        phi1,
    };

    let warm = match start_from_policy(&problem, &MyopicPolicy::new(model)) {
        Ok(y) => y,
        Err(OuterError::Mdp(_)) => {
            start_from_distribution(&problem, &DiscreteDistribution::point(0.0))?
        }
        Err(e) => return Err(e),
    };

    let chains: Vec<(Vec<f64>, f64, RestartSummary)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_chain(&problem, r, &warm))
        .collect::<Result<_, _>>()?;

    let mut best_index = 0;
    for (i, c) in chains.iter().enumerate() {
        if c.1 < chains[best_index].1 {
            best_index = i;
        }
    }
    let best_y = chains[best_index].0.clone();
    let g = GPoly::on_grid(c_hat, best_y.clone(), phi1)?;
    let k = objective_k(model, &g, spec, x0, &cfg.inner)?;
    Ok(OuterResult {
        best_y,
        best_value: k.value,
        inner_report: k.inner,
        conjugate_integral: k.conjugate_integral,
        error_bound: bound,
        evaluations: chains.iter().map(|c| c.2.evaluations).sum::<usize>() + 1,
        m,
        c_hat,
        phi1,
        restarts: chains.into_iter().map(|c| c.2).collect(),
    })
}
