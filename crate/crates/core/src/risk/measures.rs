//! Exact spectral risk computations on finite distributions.
//!
//! Every measure here is an integral of the quantile function against a
//! piecewise-linear distortion, so it reduces to the finite sum
//! `Σ x_i (Φ(F_i) − Φ(F_{i−1}))` over the atoms.

use super::{DiscreteDistribution, GPoly, RiskError, StepSpectrum};

/// Evaluates the distortion of a step spectrum in O(log J).
pub(crate) struct DistortionTable<'a> {
    spec: &'a StepSpectrum,
    cumulative: Vec<f64>,
}

impl<'a> DistortionTable<'a> {
    pub(crate) fn new(spec: &'a StepSpectrum) -> Self {
        let mut acc = 0.0;
        let mut cumulative = vec![0.0];
        for (lo, hi, v) in spec.steps() {
            acc += v * (hi - lo);
            cumulative.push(acc);
        }
        DistortionTable { spec, cumulative }
    }

    pub(crate) fn eval(&self, u: f64) -> f64 {
        if u >= 1.0 {
            return self.cumulative[self.cumulative.len() - 1];
        }
        if u <= 0.0 {
            return 0.0;
        }
        let bps = self.spec.breakpoints();
        let j = bps.partition_point(|&b| b <= u) - 1;
        self.cumulative[j] + self.spec.values()[j] * (u - bps[j])
    }
}

/// ρ_φ of the law placing `probs[i]` on `atoms[i]`.
///
/// Atoms must be sorted ascending; repeated atoms are allowed. The
/// probabilities are assumed to sum to one and the last cumulative value is
/// pinned to 1.
pub(crate) fn spectral_risk_sorted(
    atoms: &[f64],
    probs: &[f64],
    table: &DistortionTable<'_>,
) -> f64 {
    let n = atoms.len();
    let mut cum = 0.0;
    let mut prev_phi = 0.0;
    let mut risk = 0.0;
    for i in 0..n {
        cum += probs[i];
        let level = if i + 1 == n { 1.0 } else { cum };
        let phi = table.eval(level);
        risk += atoms[i] * (phi - prev_phi);
        prev_phi = phi;
    }
    risk
}

/// ES_α(X) = (1/(1−α)) ∫_α^1 F^{-1}(u) du.
pub fn expected_shortfall(dist: &DiscreteDistribution, alpha: f64) -> Result<f64, RiskError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(RiskError::Domain(format!(
            "ES level {alpha} outside [0, 1)"
        )));
    }
    let cum = dist.cumulative();
    let mut prev = 0.0_f64;
    let mut acc = 0.0;
    for (&x, &f) in dist.atoms().iter().zip(&cum) {
        let width = (f - prev.max(alpha)).max(0.0);
        acc += x * width;
        prev = f;
    }
    Ok(acc / (1.0 - alpha))
}

/// ρ_φ(X) = ∫_0^1 F^{-1}(u) φ(u) du, computed exactly.
pub fn spectral_risk(dist: &DiscreteDistribution, spec: &StepSpectrum) -> f64 {
    let table = DistortionTable::new(spec);
    spectral_risk_sorted(dist.atoms(), dist.probs(), &table)
}

/// ρ_φ(X) as the μ-mixture of Expected Shortfalls.
pub fn spectral_risk_via_mixture(dist: &DiscreteDistribution, spec: &StepSpectrum) -> f64 {
    spec.mixture_measure()
        .iter()
        .map(|(alpha, w)| w * expected_shortfall(dist, alpha).expect("jump levels lie in [0, 1)"))
        .sum()
}

/// q + E[(X − q)^+]/(1 − α).
pub fn ru_objective(dist: &DiscreteDistribution, alpha: f64, q: f64) -> Result<f64, RiskError> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(RiskError::Domain(format!(
            "ES level {alpha} outside [0, 1)"
        )));
    }
    Ok(q + dist.expect(|x| (x - q).max(0.0)) / (1.0 - alpha))
}

/// The disutility attaining the infimum representation of ρ_φ(X):
///
/// `g(x) = Σ_j w_j [q_j + (x − q_j)^+ / (1 − α_j)]`, `q_j = F^{-1}(α_j)`,
///
/// summed over the mixture measure `(α_j, w_j)`, with `F^{-1}(0)` read as the
/// smallest atom. The result is exact: its knots are 0, every kink `q_j`, and
/// the largest atom, beyond which the slope is φ(1).
pub fn minimizer_g(spec: &StepSpectrum, dist: &DiscreteDistribution) -> Result<GPoly, RiskError> {
    if dist.min_atom() < 0.0 {
        return Err(RiskError::Domain(format!(
            "negative atom {} in a cost distribution",
            dist.min_atom()
        )));
    }
    let mu = spec.mixture_measure();
    let kinks: Vec<(f64, f64, f64)> = mu
        .iter()
        .map(|(alpha, w)| (dist.quantile_unchecked(alpha), alpha, w))
        .collect();
    let g = |x: f64| -> f64 {
        kinks
            .iter()
            .map(|&(q, alpha, w)| w * (q + (x - q).max(0.0) / (1.0 - alpha)))
            .sum()
    };

    let cap = dist.max_atom();
    let mut knots: Vec<f64> = std::iter::once(0.0)
        .chain(kinks.iter().map(|k| k.0))
        .chain(std::iter::once(cap))
        .collect();
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let values = knots.iter().map(|&k| g(k)).collect();
    GPoly::with_knots(knots, values, spec.max_value())
}
