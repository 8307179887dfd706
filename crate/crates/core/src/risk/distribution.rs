use serde::{Deserialize, Serialize};

use super::RiskError;

/// Probabilities below this are dropped at construction.
pub const MIN_PROBABILITY: f64 = 1e-15;

/// Accepted deviation of user-supplied probabilities from a unit sum before
/// renormalization.
pub const INPUT_SUM_TOLERANCE: f64 = 1e-9;

// Slack for comparing a cumulative probability against a level.
const CUMULATIVE_SLACK: f64 = 1e-13;

const RENORMALIZE_THRESHOLD: f64 = 1e-12;

/// A finitely supported law on the real line.
///
/// Atoms are strictly increasing, duplicate atoms are merged, and the
/// probabilities sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDistribution", into = "RawDistribution")]
pub struct DiscreteDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawDistribution {
    atoms: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<RawDistribution> for DiscreteDistribution {
    type Error = RiskError;

    fn try_from(raw: RawDistribution) -> Result<Self, Self::Error> {
        DiscreteDistribution::new(raw.atoms, raw.probs)
    }
}

impl From<DiscreteDistribution> for RawDistribution {
    fn from(d: DiscreteDistribution) -> Self {
        RawDistribution {
            atoms: d.atoms,
            probs: d.probs,
        }
    }
}

impl DiscreteDistribution {
    /// Builds a distribution from parallel atom and probability lists.
    ///
    /// The probabilities must be non-negative and sum to one within
    /// [`INPUT_SUM_TOLERANCE`]; they are renormalized afterwards.
    pub fn new(atoms: Vec<f64>, probs: Vec<f64>) -> Result<Self, RiskError> {
        if atoms.len() != probs.len() {
            return Err(RiskError::InvalidDistribution(format!(
                "{} atoms but {} probabilities",
                atoms.len(),
                probs.len()
            )));
        }
        if atoms.is_empty() {
            return Err(RiskError::InvalidDistribution("no atoms".into()));
        }
        if let Some(a) = atoms.iter().find(|a| !a.is_finite()) {
            return Err(RiskError::InvalidDistribution(format!(
                "non-finite atom {a}"
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(RiskError::InvalidDistribution(format!(
                "invalid probability {p}"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > INPUT_SUM_TOLERANCE {
            return Err(RiskError::InvalidDistribution(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Self::from_weighted(atoms.into_iter().zip(probs))
    }

    /// Builds a distribution from (atom, weight) pairs with arbitrary positive
    /// total weight, normalizing the weights.
    pub fn from_weighted<I>(pairs: I) -> Result<Self, RiskError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        if pairs
            .iter()
            .any(|(a, w)| !a.is_finite() || !w.is_finite() || *w < 0.0)
        {
            return Err(RiskError::InvalidDistribution(
                "atoms and weights must be finite, weights non-negative".into(),
            ));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut probs: Vec<f64> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match atoms.last() {
                Some(&last) if last == a => *probs.last_mut().unwrap() += w,
                _ => {
                    atoms.push(a);
                    probs.push(w);
                }
            }
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(RiskError::InvalidDistribution("zero total weight".into()));
        }
        let mut out_atoms = Vec::with_capacity(atoms.len());
        let mut out_probs = Vec::with_capacity(probs.len());
        for (a, w) in atoms.into_iter().zip(probs) {
            let p = normalized(w, total);
            if p >= MIN_PROBABILITY {
                out_atoms.push(a);
                out_probs.push(p);
            }
        }
        let kept: f64 = out_probs.iter().sum();
        for p in &mut out_probs {
            *p = normalized(*p, kept);
        }
        Ok(DiscreteDistribution {
            atoms: out_atoms,
            probs: out_probs,
        })
    }

    /// The Dirac law at `c`.
    pub fn point(c: f64) -> Self {
        DiscreteDistribution {
            atoms: vec![c],
            probs: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.probs.iter().copied())
    }

    pub fn min_atom(&self) -> f64 {
        self.atoms[0]
    }

    pub fn max_atom(&self) -> f64 {
        *self.atoms.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(a, p)| a * p).sum()
    }

    /// E[h(X)] for an arbitrary function h.
    pub fn expect<F: Fn(f64) -> f64>(&self, h: F) -> f64 {
        self.iter().map(|(a, p)| h(a) * p).sum()
    }

    /// Cumulative probabilities F(x_i), with the last entry pinned to 1.
    pub fn cumulative(&self) -> Vec<f64> {
        cumulative_of(&self.probs)
    }

    /// Image law of X under `f`.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Result<Self, RiskError> {
        Self::from_weighted(self.iter().map(|(a, p)| (f(a), p)))
    }

    /// Law of X + Y for independent X and Y (exact convolution).
    pub fn convolve(&self, other: &Self) -> Result<Self, RiskError> {
        Self::from_weighted(
            self.iter()
                .flat_map(|(a, p)| other.iter().map(move |(b, q)| (a + b, p * q))),
        )
    }

    /// inf{x : F(x) >= u}; `u` must lie in (0, 1].
    pub fn quantile(&self, u: f64) -> Result<f64, RiskError> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(RiskError::Domain(format!(
                "quantile level {u} outside (0, 1]"
            )));
        }
        Ok(self.quantile_unchecked(u))
    }

    /// Quantile with the convention F^{-1}(0) = min atom.
    pub(crate) fn quantile_unchecked(&self, u: f64) -> f64 {
        let mut cum = 0.0;
        let last = self.atoms.len() - 1;
        for (i, (&a, &p)) in self.atoms.iter().zip(&self.probs).enumerate() {
            cum += p;
            if i == last || cum >= u - CUMULATIVE_SLACK {
                return a;
            }
        }
        unreachable!()
    }
}

// Leaves weights untouched when they already sum to one up to rounding, so
// that normalizing twice is the identity.
fn normalized(w: f64, total: f64) -> f64 {
    if (total - 1.0).abs() <= RENORMALIZE_THRESHOLD {
        w
    } else {
        w / total
    }
}

pub(crate) fn cumulative_of(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = 1.0;
    }
    out
}
