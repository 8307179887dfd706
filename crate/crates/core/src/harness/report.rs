use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::oracle::{
    oracle_exact_optimum, oracle_expected_optimum, oracle_outer_gap, GapRow, OracleResult,
};
use super::scenario::{ScenarioFile, ScenarioKind};
use super::HarnessError;
use crate::mdp::{solve, Discretization, Horizon, MarkovPolicy, MdpModel, SMode};
use crate::outer::{anneal, cost_cap, OuterConfig, RestartSummary};
use crate::reinsurance::{solve_cost_of_capital, PolicyRow};

pub fn version_stamp() -> String {
    format!("spectral-mdp {}", env!("CARGO_PKG_VERSION"))
}

/// Command-line overrides of scenario settings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub m: Option<usize>,
    pub seed: Option<u64>,
    pub mode: Option<SMode>,
}

impl Overrides {
    fn outer(&self, file: &ScenarioFile) -> OuterConfig {
        let mut cfg = file.outer_config();
        if let Some(e) = self.epsilon {
            cfg.epsilon = Some(e);
            cfg.m = None;
        }
        if let Some(m) = self.m {
            cfg.m = Some(m);
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(mode) = self.mode {
            cfg.inner.mode = mode;
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub stage: usize,
    pub state: f64,
    pub s: f64,
    pub t: f64,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub kind: ScenarioKind,
    pub seed: Option<u64>,
    pub inner_value: Option<f64>,
    pub outer_value: Option<f64>,
    pub error_bound: Option<f64>,
    pub m: Option<usize>,
    pub c_hat: Option<f64>,
    pub conjugate_integral: Option<f64>,
    pub best_y: Option<Vec<f64>>,
    pub oracle_value: Option<f64>,
    /// Reported value minus the oracle value.
    pub gap: Option<f64>,
    pub oracle: Option<OracleResult>,
    pub gap_study: Vec<GapRow>,
    pub policy: Vec<PolicyEntry>,
    pub treaty_policy: Vec<PolicyRow>,
    pub restarts: Vec<RestartSummary>,
    pub evaluations: Option<usize>,
    pub discretization: Option<Discretization>,
    pub fallback: Option<bool>,
    pub snap_error: Option<f64>,
    pub wall_clock_ms: f64,
}

impl RunReport {
    fn new(command: &str, kind: ScenarioKind) -> Self {
        RunReport {
            command: command.into(),
            version: version_stamp(),
            kind,
            seed: None,
            inner_value: None,
            outer_value: None,
            error_bound: None,
            m: None,
            c_hat: None,
            conjugate_integral: None,
            best_y: None,
            oracle_value: None,
            gap: None,
            oracle: None,
            gap_study: Vec::new(),
            policy: Vec::new(),
            treaty_policy: Vec::new(),
            restarts: Vec::new(),
            evaluations: None,
            discretization: None,
            fallback: None,
            snap_error: None,
            wall_clock_ms: 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String, HarnessError> {
        serde_json::to_string_pretty(self).map_err(|e| HarnessError::Output(e.to_string()))
    }

    /// The JSON report without timing fields.
    pub fn body_json(&self) -> Result<String, HarnessError> {
        let mut v = serde_json::to_value(self).map_err(|e| HarnessError::Output(e.to_string()))?;
        if let Some(map) = v.as_object_mut() {
            map.remove("wall_clock_ms");
        }
        serde_json::to_string_pretty(&v).map_err(|e| HarnessError::Output(e.to_string()))
    }

    /// The command's table as CSV:
    ///
    /// - `solve-inner`, `solve-outer`: stage, state, s, t, action
    /// - `reinsurance`: stage, surplus, s, t, treaty_kind, parameter
    /// - `oracle`: stage, history, state, action
    /// - `gap-study`: m, bound, pitch, lattice_points, best_value, oracle_value, gap
    pub fn to_csv(&self) -> Result<String, HarnessError> {
        #[derive(Serialize)]
        struct OracleRow<'a> {
            stage: usize,
            history: String,
            state: usize,
            action: &'a str,
        }
        #[derive(Serialize)]
        struct GapCsv {
            m: usize,
            bound: f64,
            pitch: f64,
            lattice_points: usize,
            best_value: f64,
            oracle_value: f64,
            gap: f64,
        }
        let out = |e: csv::Error| HarnessError::Output(e.to_string());
        let mut w = csv::Writer::from_writer(Vec::new());
        match self.command.as_str() {
            "reinsurance" => {
                for r in &self.treaty_policy {
                    w.serialize(r).map_err(out)?;
                }
            }
            "oracle" => {
                for d in self.oracle.iter().flat_map(|o| &o.decisions) {
                    let history: Vec<String> = d.history.iter().map(|z| z.to_string()).collect();
                    w.serialize(OracleRow {
                        stage: d.stage,
                        history: history.join(" "),
                        state: d.state,
                        action: &d.action.to_string(),
                    })
                    .map_err(out)?;
                }
            }
            "gap-study" => {
                for r in &self.gap_study {
                    w.serialize(GapCsv {
                        m: r.m,
                        bound: r.bound,
                        pitch: r.pitch,
                        lattice_points: r.lattice_points,
                        best_value: r.best_value,
                        oracle_value: r.oracle_value,
                        gap: r.gap,
                    })
                    .map_err(out)?;
                }
            }
            _ => {
                for r in &self.policy {
                    w.serialize(r).map_err(out)?;
                }
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| HarnessError::Output(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| HarnessError::Output(e.to_string()))
    }
}

fn policy_entries(model: &MdpModel, policy: &MarkovPolicy) -> Vec<PolicyEntry> {
    let mut rows = Vec::new();
    for (n, grid) in policy.stages.iter().enumerate() {
        for (x, slice) in grid.slices.iter().enumerate() {
            for (j, &t) in grid.t_levels.iter().enumerate() {
                for (i, &s) in slice.s.iter().enumerate() {
                    rows.push(PolicyEntry {
                        stage: n,
                        state: model.states()[x],
                        s,
                        t,
                        action: model.actions()[slice.get(j, i)].clone(),
                    });
                }
            }
        }
    }
    rows
}

fn oracle_enabled(file: &ScenarioFile, model: &MdpModel) -> bool {
    file.oracle.enabled && matches!(model.horizon(), Horizon::Finite(_))
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// E[g(C)] minimized for the scenario's fixed g.
pub fn run_solve_inner(file: &ScenarioFile, ov: &Overrides) -> Result<RunReport, HarnessError> {
    let start = Instant::now();
    let built = file.build()?;
    let c_hat = cost_cap(&built.model)?;
    let g = file.g.build(c_hat)?;
    let inner = ov.outer(file).inner;
    let r = solve(&built.model, &g, built.x0, &inner)?;
    let mut rep = RunReport::new("solve-inner", file.kind);
    rep.inner_value = Some(r.value_at_origin);
    rep.c_hat = Some(c_hat);
    rep.discretization = Some(r.discretization);
    rep.fallback = Some(r.fallback);
    rep.policy = policy_entries(&built.model, &r.policy);
    if oracle_enabled(file, &built.model) {
        let o = oracle_expected_optimum(&built.model, &g, built.x0, file.oracle.policy_cap)?;
        rep.oracle_value = Some(o.value);
        rep.gap = Some(r.value_at_origin - o.value);
        rep.oracle = Some(o);
    }
    rep.wall_clock_ms = elapsed_ms(start);
    Ok(rep)
}

/// The full outer pipeline on the scenario model.
pub fn run_solve_outer(file: &ScenarioFile, ov: &Overrides) -> Result<RunReport, HarnessError> {
    let start = Instant::now();
    let built = file.build()?;
    let spec = file.spectrum()?;
    let cfg = ov.outer(file);
    let res = anneal(&built.model, &spec, built.x0, &cfg)?;
    let mut rep = RunReport::new("solve-outer", file.kind);
    rep.seed = Some(cfg.seed);
    rep.outer_value = Some(res.best_value);
    rep.inner_value = Some(res.inner_report.value_at_origin);
    rep.conjugate_integral = Some(res.conjugate_integral);
    rep.error_bound = Some(res.error_bound);
    rep.m = Some(res.m);
    rep.c_hat = Some(res.c_hat);
    rep.best_y = Some(res.best_y.clone());
    rep.evaluations = Some(res.evaluations);
    rep.discretization = Some(res.inner_report.discretization);
    rep.fallback = Some(res.inner_report.fallback);
    rep.policy = policy_entries(&built.model, &res.inner_report.policy);
    rep.restarts = res.restarts;
    if oracle_enabled(file, &built.model) {
        let o = oracle_exact_optimum(&built.model, &spec, built.x0, file.oracle.policy_cap)?;
        rep.oracle_value = Some(o.value);
        rep.gap = Some(res.best_value - o.value);
        rep.oracle = Some(o);
    }
    rep.wall_clock_ms = elapsed_ms(start);
    Ok(rep)
}

/// The cost-of-capital objective of a reinsurance scenario.
pub fn run_reinsurance(file: &ScenarioFile, ov: &Overrides) -> Result<RunReport, HarnessError> {
    let start = Instant::now();
    let cfg = file.reinsurance.as_ref().ok_or_else(|| {
        HarnessError::Scenario("the reinsurance command needs a reinsurance scenario".into())
    })?;
    let spec = file.spectrum()?;
    let outer = ov.outer(file);
    let r = solve_cost_of_capital(cfg, &spec, None, &outer)?;
    let mut rep = RunReport::new("reinsurance", file.kind);
    rep.seed = Some(outer.seed);
    rep.outer_value = Some(r.value);
    rep.inner_value = Some(r.outer.inner_report.value_at_origin);
    rep.conjugate_integral = Some(r.outer.conjugate_integral);
    rep.error_bound = Some(r.error_bound);
    rep.m = Some(r.outer.m);
    rep.c_hat = Some(r.outer.c_hat);
    rep.best_y = Some(r.outer.best_y.clone());
    rep.evaluations = Some(r.outer.evaluations);
    rep.discretization = Some(r.outer.inner_report.discretization);
    rep.fallback = Some(r.outer.inner_report.fallback);
    rep.snap_error = Some(r.snap_error);
    rep.treaty_policy = r.policy;
    rep.restarts = r.outer.restarts;
    if file.oracle.enabled {
        let built = file.build()?;
        let o = oracle_exact_optimum(&built.model, &spec, built.x0, file.oracle.policy_cap)?;
        let scaled = cfg.cost_of_capital_rate * o.value;
        rep.oracle_value = Some(scaled);
        rep.gap = Some(r.value - scaled);
        rep.oracle = Some(o);
    }
    rep.wall_clock_ms = elapsed_ms(start);
    Ok(rep)
}

/// The exhaustive optimum of ρ_φ(C_N).
pub fn run_oracle(file: &ScenarioFile, _ov: &Overrides) -> Result<RunReport, HarnessError> {
    let start = Instant::now();
    let built = file.build()?;
    let spec = file.spectrum()?;
    let o = oracle_exact_optimum(&built.model, &spec, built.x0, file.oracle.policy_cap)?;
    let mut rep = RunReport::new("oracle", file.kind);
    rep.oracle_value = Some(o.value);
    rep.c_hat = Some(cost_cap(&built.model)?);
    rep.oracle = Some(o);
    rep.wall_clock_ms = elapsed_ms(start);
    Ok(rep)
}

/// Lattice minima of K_m against the oracle, one row per m.
pub fn run_gap_study(file: &ScenarioFile, ov: &Overrides) -> Result<RunReport, HarnessError> {
    let start = Instant::now();
    let built = file.build()?;
    let spec = file.spectrum()?;
    let m_list = match ov.m {
        Some(m) => vec![m],
        None => file.oracle.m_list.clone(),
    };
    let inner = ov.outer(file).inner;
    let (o, rows) = oracle_outer_gap(&built.model, &spec, built.x0, &m_list, &file.oracle, &inner)?;
    let mut rep = RunReport::new("gap-study", file.kind);
    rep.oracle_value = Some(o.value);
    rep.c_hat = Some(cost_cap(&built.model)?);
    rep.oracle = Some(o);
    rep.gap_study = rows;
    rep.wall_clock_ms = elapsed_ms(start);
    Ok(rep)
}
