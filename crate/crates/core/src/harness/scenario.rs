//! The TOML scenario format.
//!
//! ```toml
//! kind = "generic_mdp"
//!
//! [model]
//! states = [0.0]
//! actions = ["safe", "risky"]
//! discount = 1.0
//! horizon = 1            # or "infinite"
//!
//! [[model.stages]]
//! admissible = [[0, 1]]
//! disturbance = { atoms = [0.0, 1.0], probs = [0.5, 0.5] }
//! transitions = [
//!   { state = 0, action = 0, atom = 0, next = 0, cost = 1.0 },
//!   ...
//! ]
//!
//! [spectrum]
//! kind = "es"
//! alpha = 0.5
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::oracle::{DEFAULT_LATTICE_CAP, DEFAULT_POLICY_CAP};
use super::HarnessError;
use crate::mdp::{Horizon, InnerOptions, MdpModel, StageData, Stages, Transition};
use crate::outer::OuterConfig;
use crate::reinsurance::{build_mdp, ReinsuranceConfig, ReinsuranceModel};
use crate::risk::{GPoly, StepSpectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    GenericMdp,
    Reinsurance,
}

/// A horizon written as a step count or the string `"infinite"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawHorizon", into = "RawHorizon")]
pub struct HorizonSpec(pub Horizon);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RawHorizon {
    Steps(usize),
    Named(String),
}

impl TryFrom<RawHorizon> for HorizonSpec {
    type Error = String;

    fn try_from(raw: RawHorizon) -> Result<Self, String> {
        match raw {
            RawHorizon::Steps(n) => Ok(HorizonSpec(Horizon::Finite(n))),
            RawHorizon::Named(s) if s == "infinite" => Ok(HorizonSpec(Horizon::Infinite)),
            RawHorizon::Named(s) => Err(format!(
                "horizon must be an integer or \"infinite\", got {s:?}"
            )),
        }
    }
}

impl From<HorizonSpec> for RawHorizon {
    fn from(h: HorizonSpec) -> Self {
        match h.0 {
            Horizon::Finite(n) => RawHorizon::Steps(n),
            Horizon::Infinite => RawHorizon::Named("infinite".into()),
        }
    }
}

/// Disturbance atoms are labels; their order fixes the atom indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub atoms: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub state: usize,
    pub action: usize,
    pub atom: usize,
    pub next: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub admissible: Vec<Vec<usize>>,
    pub disturbance: Disturbance,
    pub transitions: Vec<TransitionEntry>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub states: Vec<f64>,
    pub actions: Vec<String>,
    pub discount: f64,
    pub horizon: HorizonSpec,
    #[serde(default = "yes")]
    pub stationary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_cost: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_cap: Option<f64>,
    #[serde(default)]
    pub initial_state: usize,
    pub stages: Vec<StageSection>,
}

impl ModelSection {
    pub fn build(&self) -> Result<(MdpModel, usize), HarnessError> {
        let bad = |m: String| Err(HarnessError::Scenario(m));
        let n_states = self.states.len();
        let n_actions = self.actions.len();
        let expected = match (self.stationary, self.horizon.0) {
            (true, _) => 1,
            (false, Horizon::Finite(n)) => n,
            (false, Horizon::Infinite) => {
                return bad("an infinite horizon needs stationary data".into())
            }
        };
        if self.stages.len() != expected {
            return bad(format!(
                "expected {expected} stage tables, found {}",
                self.stages.len()
            ));
        }
        if self.initial_state >= n_states {
            return bad(format!("initial state {} out of range", self.initial_state));
        }
        let mut data = Vec::with_capacity(self.stages.len());
        for (n, stage) in self.stages.iter().enumerate() {
            data.push(build_stage(n, stage, n_states, n_actions)?);
        }
        let stages = if self.stationary {
            Stages::Stationary(data.pop().unwrap())
        } else {
            Stages::PerStage(data)
        };
        let terminal = self
            .terminal_cost
            .clone()
            .unwrap_or_else(|| vec![0.0; n_states]);
        let model = MdpModel::new(
            self.states.clone(),
            self.actions.clone(),
            stages,
            terminal,
            self.discount,
            self.horizon.0,
            self.cost_cap,
        )?;
        Ok((model, self.initial_state))
    }

    /// The section describing `model`, with explicit tables.
    pub fn from_model(model: &MdpModel, x0: usize) -> Self {
        let n_tables = match (model.is_stationary(), model.horizon()) {
            (false, Horizon::Finite(n)) => n,
            _ => 1,
        };
        let stages = (0..n_tables)
            .map(|n| {
                let d = model.stage(n);
                let admissible: Vec<Vec<usize>> = (0..model.n_states())
                    .map(|x| d.admissible(x).to_vec())
                    .collect();
                let mut transitions = Vec::new();
                for (x, acts) in admissible.iter().enumerate() {
                    for &a in acts {
                        for z in 0..d.n_atoms() {
                            let t = d.transition(x, a, z).expect("admissible entries are total");
                            transitions.push(TransitionEntry {
                                state: x,
                                action: a,
                                atom: z,
                                next: t.next,
                                cost: t.cost,
                            });
                        }
                    }
                }
                StageSection {
                    admissible,
                    disturbance: Disturbance {
                        atoms: d.atoms().to_vec(),
                        probs: d.probs().to_vec(),
                    },
                    transitions,
                }
            })
            .collect();
        ModelSection {
            states: model.states().to_vec(),
            actions: model.actions().to_vec(),
            discount: model.discount(),
            horizon: HorizonSpec(model.horizon()),
            stationary: model.is_stationary(),
            terminal_cost: Some(model.terminal_cost().to_vec()),
            cost_cap: Some(model.cost_cap()),
            initial_state: x0,
            stages,
        }
    }
}

fn build_stage(
    n: usize,
    stage: &StageSection,
    n_states: usize,
    n_actions: usize,
) -> Result<StageData, HarnessError> {
    let bad = |m: String| Err(HarnessError::Scenario(format!("stage {n}: {m}")));
    if stage.admissible.len() != n_states {
        return bad(format!(
            "{} admissible lists for {n_states} states",
            stage.admissible.len()
        ));
    }
    let n_atoms = stage.disturbance.atoms.len();
    for (x, acts) in stage.admissible.iter().enumerate() {
        if let Some(&a) = acts.iter().find(|&&a| a >= n_actions) {
            return bad(format!("state {x} lists unknown action {a}"));
        }
    }
    let mut table: HashMap<(usize, usize, usize), Transition> = HashMap::new();
    for e in &stage.transitions {
        if e.state >= n_states || e.next >= n_states || e.action >= n_actions || e.atom >= n_atoms {
            return bad(format!("transition {e:?} has an index out of range"));
        }
        if !stage.admissible[e.state].contains(&e.action) {
            return bad(format!(
                "transition for inadmissible action {} in state {}",
                e.action, e.state
            ));
        }
        if table
            .insert(
                (e.state, e.action, e.atom),
                Transition {
                    next: e.next,
                    cost: e.cost,
                },
            )
            .is_some()
        {
            return bad(format!(
                "duplicate transition for state {}, action {}, atom {}",
                e.state, e.action, e.atom
            ));
        }
    }
    let data = StageData::build(
        n_states,
        n_actions,
        stage.disturbance.atoms.clone(),
        stage.disturbance.probs.clone(),
        stage.admissible.clone(),
        |x, a, z| {
            table.get(&(x, a, z)).copied().ok_or_else(|| {
                crate::mdp::MdpError::InvalidModel(format!(
                    "stage {n}: no transition for state {x}, action {a}, atom {z}"
                ))
            })
        },
    )?;
    Ok(data)
}

/// A named or explicit step spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    Expectation,
    Es {
        alpha: f64,
    },
    /// Σ w·ES_α over `[alpha, weight]` pairs.
    Mixture {
        components: Vec<[f64; 2]>,
    },
    Step {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

impl SpectrumSpec {
    pub fn build(&self) -> Result<StepSpectrum, HarnessError> {
        Ok(match self {
            SpectrumSpec::Expectation => StepSpectrum::expectation(),
            SpectrumSpec::Es { alpha } => StepSpectrum::expected_shortfall(*alpha)?,
            SpectrumSpec::Mixture { components } => {
                let pairs: Vec<(f64, f64)> = components.iter().map(|c| (c[0], c[1])).collect();
                StepSpectrum::mixture(&pairs)?
            }
            SpectrumSpec::Step {
                breakpoints,
                values,
            } => StepSpectrum::new(breakpoints.clone(), values.clone())?,
        })
    }
}

/// The fixed disutility for `solve-inner`, on [0, ĉ].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GSpec {
    #[default]
    Identity,
    /// slope·(s − threshold)^+.
    Hinge { threshold: f64, slope: f64 },
    Knots {
        knots: Vec<f64>,
        values: Vec<f64>,
        max_slope: f64,
    },
}

impl GSpec {
    pub fn build(&self, c_hat: f64) -> Result<GPoly, HarnessError> {
        Ok(match self {
            GSpec::Identity => GPoly::identity(c_hat)?,
            GSpec::Hinge { threshold, slope } => {
                let q = threshold.max(0.0);
                if q > 0.0 && q < c_hat {
                    GPoly::with_knots(
                        vec![0.0, q, c_hat],
                        vec![0.0, 0.0, slope * (c_hat - q)],
                        *slope,
                    )?
                } else if q == 0.0 {
                    GPoly::on_grid(c_hat, vec![0.0, slope * c_hat], *slope)?
                } else {
                    GPoly::on_grid(c_hat, vec![0.0, 0.0], *slope)?
                }
            }
            GSpec::Knots {
                knots,
                values,
                max_slope,
            } => {
                let g = GPoly::with_knots(knots.clone(), values.clone(), *max_slope)?;
                g.check_shape()?;
                g
            }
        })
    }
}

fn default_policy_cap() -> f64 {
    DEFAULT_POLICY_CAP
}

fn default_pitch() -> f64 {
    0.02
}

fn default_lattice_cap() -> usize {
    DEFAULT_LATTICE_CAP
}

fn default_m_list() -> Vec<usize> {
    vec![2, 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_policy_cap")]
    pub policy_cap: f64,
    /// Lattice pitch of the gap study as a fraction of ĉ.
    #[serde(default = "default_pitch")]
    pub lattice_pitch: f64,
    #[serde(default = "default_lattice_cap")]
    pub lattice_cap: usize,
    #[serde(default = "default_m_list")]
    pub m_list: Vec<usize>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection {
            enabled: false,
            policy_cap: DEFAULT_POLICY_CAP,
            lattice_pitch: default_pitch(),
            lattice_cap: DEFAULT_LATTICE_CAP,
            m_list: default_m_list(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reinsurance: Option<ReinsuranceConfig>,
    pub spectrum: SpectrumSpec,
    #[serde(default)]
    pub outer: OuterConfig,
    #[serde(default)]
    pub inner: InnerOptions,
    #[serde(default)]
    pub g: GSpec,
    #[serde(default)]
    pub oracle: OracleSection,
}

/// A built scenario model.
#[derive(Debug, Clone)]
pub struct Built {
    pub model: MdpModel,
    pub x0: usize,
    pub reinsurance: Option<ReinsuranceModel>,
}

impl ScenarioFile {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| HarnessError::Scenario(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_toml_string(&self) -> Result<String, HarnessError> {
        toml::to_string(self).map_err(|e| HarnessError::Output(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        match (self.kind, &self.model, &self.reinsurance) {
            (ScenarioKind::GenericMdp, Some(_), None)
            | (ScenarioKind::Reinsurance, None, Some(_)) => {}
            (ScenarioKind::GenericMdp, _, _) => {
                return Err(HarnessError::Scenario(
                    "generic_mdp needs a [model] section and no [reinsurance] section".into(),
                ))
            }
            (ScenarioKind::Reinsurance, _, _) => {
                return Err(HarnessError::Scenario(
                    "reinsurance needs a [reinsurance] section and no [model] section".into(),
                ))
            }
        }
        self.spectrum.build()?;
        self.outer.validate()?;
        if let Some(r) = &self.reinsurance {
            r.validate()?;
        }
        if !(self.oracle.lattice_pitch > 0.0) || !(self.oracle.policy_cap >= 1.0) {
            return Err(HarnessError::Scenario(
                "oracle pitch and policy cap must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn spectrum(&self) -> Result<StepSpectrum, HarnessError> {
        self.spectrum.build()
    }

    /// The outer configuration with the scenario's inner options attached.
    pub fn outer_config(&self) -> OuterConfig {
        OuterConfig {
            inner: self.inner.clone(),
            ..self.outer.clone()
        }
    }

    pub fn build(&self) -> Result<Built, HarnessError> {
        match (&self.model, &self.reinsurance) {
            (Some(m), _) => {
                let (model, x0) = m.build()?;
                Ok(Built {
                    model,
                    x0,
                    reinsurance: None,
                })
            }
            (None, Some(cfg)) => {
                let rm = build_mdp(cfg)?;
                Ok(Built {
                    model: rm.model.clone(),
                    x0: rm.x0,
                    reinsurance: Some(rm),
                })
            }
            (None, None) => Err(HarnessError::Scenario("no model".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MICRO: &str = r#"
kind = "generic_mdp"

[model]
states = [0.0]
actions = ["sure", "gamble"]
discount = 1.0
horizon = 1

[[model.stages]]
admissible = [[0, 1]]
disturbance = { atoms = [0.0, 1.0], probs = [0.5, 0.5] }
transitions = [
  { state = 0, action = 0, atom = 0, next = 0, cost = 1.0 },
  { state = 0, action = 0, atom = 1, next = 0, cost = 1.0 },
  { state = 0, action = 1, atom = 0, next = 0, cost = 0.0 },
  { state = 0, action = 1, atom = 1, next = 0, cost = 2.2 },
]

[spectrum]
kind = "es"
alpha = 0.5
"#;

    #[test]
    fn parses_and_builds() {
        let f = ScenarioFile::from_toml_str(MICRO).unwrap();
        let b = f.build().unwrap();
        assert_eq!(b.model.n_actions(), 2);
        assert_eq!(b.model.cost_cap(), 2.2);
        assert_eq!(
            f.spectrum().unwrap(),
            StepSpectrum::expected_shortfall(0.5).unwrap()
        );
    }

    #[test]
    fn round_trip() {
        let f = ScenarioFile::from_toml_str(MICRO).unwrap();
        let again = ScenarioFile::from_toml_str(&f.to_toml_string().unwrap()).unwrap();
        assert_eq!(f, again);
        let (model, x0) = f.model.as_ref().unwrap().build().unwrap();
        let (rebuilt, y0) = ModelSection::from_model(&model, x0).build().unwrap();
        assert_eq!(model, rebuilt);
        assert_eq!(x0, y0);
    }

    #[test]
    fn rejects_partial_and_duplicate_tables() {
        let missing = MICRO.replace(
            "  { state = 0, action = 1, atom = 1, next = 0, cost = 2.2 },\n",
            "",
        );
        let f = ScenarioFile::from_toml_str(&missing).unwrap();
        assert!(f.build().is_err());
        let dup = MICRO.replace(
            "cost = 2.2 },\n",
            "cost = 2.2 },\n  { state = 0, action = 1, atom = 1, next = 0, cost = 2.2 },\n",
        );
        assert!(ScenarioFile::from_toml_str(&dup).unwrap().build().is_err());
        let unknown = MICRO.replace("alpha = 0.5", "alpha = 0.5\nbeta = 1");
        assert!(ScenarioFile::from_toml_str(&unknown).is_err());
        let bad_horizon = MICRO.replace("horizon = 1", "horizon = \"forever\"");
        assert!(ScenarioFile::from_toml_str(&bad_horizon).is_err());
    }

    #[test]
    fn named_spectra() {
        let m = SpectrumSpec::Mixture {
            components: vec![[0.0, 0.5], [0.9, 0.5]],
        };
        let s = m.build().unwrap();
        assert!((s.max_value() - 5.5).abs() < 1e-12);
        assert!(SpectrumSpec::Es { alpha: 1.0 }.build().is_err());
    }

    #[test]
    fn hinge_g() {
        let g = GSpec::Hinge {
            threshold: 1.0,
            slope: 2.0,
        }
        .build(3.0)
        .unwrap();
        assert_eq!(g.eval(0.5), 0.0);
        assert!((g.eval(2.0) - 2.0).abs() < 1e-12);
        assert!((g.eval(4.0) - 6.0).abs() < 1e-12);
    }
}
