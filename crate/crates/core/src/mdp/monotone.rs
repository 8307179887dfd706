//! Structural checks on models whose states are real numbers.

use serde::{Deserialize, Serialize};

use super::model::{Horizon, MdpModel};

/// A pair of adjacent states (in label order) where a property fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub stage: usize,
    pub lower: usize,
    pub upper: usize,
    pub action: Option<usize>,
    pub atom: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub holds: bool,
    pub witness: Option<Witness>,
}

impl Check {
    fn new() -> Self {
        Check {
            holds: true,
            witness: None,
        }
    }

    fn fail(&mut self, w: Witness) {
        if self.holds {
            self.holds = false;
            self.witness = Some(w);
        }
    }
}

/// Which monotone structure the model data supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonotoneVariant {
    /// D(x) shrinks, T and the realized cost increase in x: values increase
    /// in x.
    IncreasingInState,
    /// D(x) grows, T increases and the realized cost decreases in x: values
    /// decrease in x.
    DecreasingInState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneReport {
    /// D(x) ⊆ D(x') for x ≤ x'.
    pub admissible_increasing: Check,
    /// D(x) ⊇ D(x') for x ≤ x'.
    pub admissible_decreasing: Check,
    /// T(x, a, z) ≤ T(x', a, z) for x ≤ x'.
    pub transition_increasing: Check,
    pub cost_increasing: Check,
    pub cost_decreasing: Check,
    pub variants: Vec<MonotoneVariant>,
}

/// Checks set inclusion of admissible sets, monotonicity of transitions and
/// of realized costs along the states sorted by label. A diagnostic only.
pub fn validate_monotone(model: &MdpModel) -> MonotoneReport {
    let labels = model.states();
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));

    let mut adm_inc = Check::new();
    let mut adm_dec = Check::new();
    let mut tr_inc = Check::new();
    let mut cost_inc = Check::new();
    let mut cost_dec = Check::new();

    let n_stages = match (model.is_stationary(), model.horizon()) {
        (false, Horizon::Finite(n)) => n,
        _ => 1,
    };
    for n in 0..n_stages {
        let data = model.stage(n);
        for pair in order.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let witness = |action, atom| Witness {
                stage: n,
                lower: lo,
                upper: hi,
                action,
                atom,
            };
            let (d_lo, d_hi) = (data.admissible(lo), data.admissible(hi));
            if !d_lo.iter().all(|a| d_hi.contains(a)) {
                adm_inc.fail(witness(None, None));
            }
            if !d_hi.iter().all(|a| d_lo.contains(a)) {
                adm_dec.fail(witness(None, None));
            }
            for &a in d_lo.iter().filter(|a| d_hi.contains(a)) {
                for z in 0..data.n_atoms() {
                    let t_lo = data.transition(lo, a, z).unwrap();
                    let t_hi = data.transition(hi, a, z).unwrap();
                    if labels[t_lo.next] > labels[t_hi.next] {
                        tr_inc.fail(witness(Some(a), Some(z)));
                    }
                    if t_lo.cost > t_hi.cost {
                        cost_inc.fail(witness(Some(a), Some(z)));
                    }
                    if t_lo.cost < t_hi.cost {
                        cost_dec.fail(witness(Some(a), Some(z)));
                    }
                }
            }
        }
    }

    let mut variants = Vec::new();
    if adm_dec.holds && tr_inc.holds && cost_inc.holds {
        variants.push(MonotoneVariant::IncreasingInState);
    }
    if adm_inc.holds && tr_inc.holds && cost_dec.holds {
        variants.push(MonotoneVariant::DecreasingInState);
    }
    MonotoneReport {
        admissible_increasing: adm_inc,
        admissible_decreasing: adm_dec,
        transition_increasing: tr_inc,
        cost_increasing: cost_inc,
        cost_decreasing: cost_dec,
        variants,
    }
}
