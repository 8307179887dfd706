use serde::{Deserialize, Serialize};

/// Data on one stage of the extended grid: per state, an s-axis crossed with
/// the stage's t-levels. Entries are stored t-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageGrid<T> {
    pub t_levels: Vec<f64>,
    pub slices: Vec<Slice<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice<T> {
    pub s: Vec<f64>,
    pub data: Vec<T>,
}

impl<T: Copy> Slice<T> {
    pub fn row(&self, j: usize) -> &[T] {
        let n = self.s.len();
        &self.data[j * n..(j + 1) * n]
    }

    pub fn get(&self, j: usize, i: usize) -> T {
        self.data[j * self.s.len() + i]
    }
}

impl Slice<f64> {
    /// Value at `s` on t-level `j`: exact on grid points, linear in between,
    /// flat below the first point and continued with `slope` above the last.
    pub fn value(&self, s: f64, j: usize, slope: f64) -> f64 {
        let row = self.row(j);
        let n = self.s.len();
        let k = self.s.partition_point(|&p| p < s);
        if k < n && self.s[k] == s {
            return row[k];
        }
        if k == 0 {
            return row[0];
        }
        if k == n {
            return row[n - 1] + slope * (s - self.s[n - 1]);
        }
        let (s0, s1) = (self.s[k - 1], self.s[k]);
        let w = (s - s0) / (s1 - s0);
        row[k - 1] + w * (row[k] - row[k - 1])
    }
}

impl<T> StageGrid<T> {
    /// Index of the t-level closest to `t`.
    pub fn nearest_level(&self, t: f64) -> usize {
        let mut best = 0;
        for (j, &level) in self.t_levels.iter().enumerate() {
            if (level - t).abs() < (self.t_levels[best] - t).abs() {
                best = j;
            }
        }
        best
    }

    pub fn n_points(&self) -> usize {
        self.slices
            .iter()
            .map(|sl| sl.s.len() * self.t_levels.len())
            .sum()
    }
}

/// Value functions J_0, …, J_N (finite horizon) or the single stationary
/// value function (infinite horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub stages: Vec<StageGrid<f64>>,
}

/// Decision rules on the extended grid, one per stage or a single
/// stationary rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    pub stages: Vec<StageGrid<usize>>,
    pub stationary: bool,
}

/// A deterministic decision rule on the extended state space. `None` means
/// the rule is undefined at that point.
pub trait Policy: Sync {
    fn decide(&self, n: usize, x: usize, s: f64, t: f64) -> Option<usize>;
}

impl Policy for MarkovPolicy {
    /// Exact s-match when available, otherwise the nearest tabulated s; the
    /// nearest t-level.
    fn decide(&self, n: usize, x: usize, s: f64, t: f64) -> Option<usize> {
        let grid = if self.stationary {
            self.stages.first()?
        } else {
            self.stages.get(n)?
        };
        let slice = grid.slices.get(x)?;
        if slice.s.is_empty() {
            return None;
        }
        let j = grid.nearest_level(t);
        let k = slice.s.partition_point(|&p| p < s);
        let i = if k == slice.s.len() {
            k - 1
        } else if k == 0 || slice.s[k] == s || slice.s[k] - s < s - slice.s[k - 1] {
            k
        } else {
            k - 1
        };
        Some(slice.get(j, i))
    }
}

/// Adapts a closure `(n, x, s, t) -> action` to [`Policy`].
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: Fn(usize, usize, f64, f64) -> usize + Sync,
{
    fn decide(&self, n: usize, x: usize, s: f64, t: f64) -> Option<usize> {
        Some((self.0)(n, x, s, t))
    }
}
