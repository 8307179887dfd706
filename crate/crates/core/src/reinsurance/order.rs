use serde::{Deserialize, Serialize};

use super::Treaty;
use crate::risk::DiscreteDistribution;

/// E[(X − d)^+].
pub fn stop_loss_transform(dist: &DiscreteDistribution, d: f64) -> f64 {
    dist.expect(|x| (x - d).max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvexOrderCheck {
    /// Retention with E[min{Y, a_f}] = E[f(Y)].
    pub a_f: f64,
    /// min{Y, a_f} ≤_cx f(Y) was confirmed.
    pub verified: bool,
    /// Largest excess of a stop-loss transform of min{Y, a_f} over that of
    /// f(Y), and the gap between the means.
    pub max_violation: f64,
}

/// Inverts a ↦ E[min{Y, a}] exactly: on [y_{k−1}, y_k] it equals
/// Σ_{i<k} p_i y_i + a·P(Y ≥ y_k).
fn stop_loss_retention_for_mean(claims: &DiscreteDistribution, target: f64) -> f64 {
    let mut below = 0.0;
    let mut tail = 1.0;
    let mut lo = 0.0;
    for (y, p) in claims.iter() {
        let at_y = below + y * tail;
        if at_y >= target && y >= lo {
            return if tail > 0.0 {
                ((target - below) / tail).clamp(lo, y)
            } else {
                y
            };
        }
        below += p * y;
        tail -= p;
        lo = y;
    }
    claims.max_atom()
}

/// Finds the stop-loss retention with the same expected retained loss as
/// `treaty` and checks the convex order through stop-loss transforms on the
/// merged atom grid.
pub fn convex_order_check(claims: &DiscreteDistribution, treaty: &Treaty) -> ConvexOrderCheck {
    let retained = claims.map(|y| treaty.retained(y)).expect("finite atoms");
    let target = retained.mean();
    let a_f = if treaty.is_identity_on(claims) {
        claims.max_atom()
    } else if let Treaty::StopLoss { a } = *treaty {
        a.min(claims.max_atom())
    } else {
        stop_loss_retention_for_mean(claims, target)
    };
    let stop_loss = claims.map(|y| y.min(a_f)).expect("finite atoms");

    let scale = 1.0 + claims.max_atom().abs();
    let tol = 1e-12 * scale;
    let mut points: Vec<f64> = stop_loss
        .atoms()
        .iter()
        .chain(retained.atoms())
        .copied()
        .chain([0.0, a_f])
        .collect();
    points.sort_by(f64::total_cmp);
    points.dedup();

    let mut worst = (stop_loss.mean() - target).abs();
    for &d in &points {
        worst = worst.max(stop_loss_transform(&stop_loss, d) - stop_loss_transform(&retained, d));
    }
    ConvexOrderCheck {
        a_f,
        verified: worst <= tol,
        max_violation: worst.max(0.0),
    }
}
