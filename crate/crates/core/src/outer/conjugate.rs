use super::OuterError;
use crate::mdp::{Horizon, MdpModel};
use crate::risk::{equidistant_knots, GPoly, StepSpectrum};

/// Largest knot count accepted from an ε target.
pub const MAX_KNOTS: usize = 1_000_000;

/// ĉ = Σ_{k=0}^{N} β^k c̄ for a finite horizon, c̄/(1 − β) otherwise.
pub fn cost_cap(model: &MdpModel) -> Result<f64, OuterError> {
    if model.horizon() == Horizon::Infinite && model.discount() >= 1.0 {
        return Err(OuterError::Domain(
            "infinite horizon needs discount < 1".into(),
        ));
    }
    let c = model.total_cost_bound();
    if !c.is_finite() {
        return Err(OuterError::Domain(format!(
            "total cost bound {c} is not finite"
        )));
    }
    Ok(c)
}

/// 2φ(1)ĉ/(m − 1).
pub fn error_bound(m: usize, phi1: f64, c_hat: f64) -> Result<f64, OuterError> {
    if m < 2 {
        return Err(OuterError::Domain(format!("need m >= 2, got {m}")));
    }
    Ok(2.0 * phi1 * c_hat / (m - 1) as f64)
}

/// m = ⌈2φ(1)ĉ/ε⌉ + 1, at least 2, so that the error bound is at most ε.
pub fn grid_size_from_epsilon(phi1: f64, c_hat: f64, epsilon: f64) -> Result<usize, OuterError> {
    if !(epsilon > 0.0) || !(phi1 >= 0.0) || !(c_hat >= 0.0) {
        return Err(OuterError::Domain(format!(
            "need epsilon > 0 and non-negative phi1, c_hat; got {epsilon}, {phi1}, {c_hat}"
        )));
    }
    let ratio = 2.0 * phi1 * c_hat / epsilon;
    if ratio > MAX_KNOTS as f64 {
        return Err(OuterError::Domain(format!(
            "epsilon {epsilon} needs more than {MAX_KNOTS} knots"
        )));
    }
    // The relative slack absorbs rounding in the ratio itself.
    let mut m = ((ratio * (1.0 - 1e-12)).ceil() as usize + 1).max(2);
    while error_bound(m, phi1, c_hat)? > epsilon {
        m += 1;
    }
    Ok(m)
}

/// Slack for deciding that a knot vector already lies in Γ_m.
fn feasibility_slack(phi1: f64) -> f64 {
    1e-12 * (1.0 + phi1)
}

fn is_feasible(y: &[f64], c_hat: f64, phi1: f64) -> bool {
    let tol = feasibility_slack(phi1);
    if y[0] < 0.0 || y[0] > c_hat {
        return false;
    }
    let h = c_hat / (y.len() - 1) as f64;
    let mut prev = 0.0;
    for w in y.windows(2) {
        let c = (w[1] - w[0]) / h;
        if c < prev - tol || c < -tol || c > phi1 + tol {
            return false;
        }
        prev = c;
    }
    true
}

/// Projection onto Γ_m in (intercept, slopes) coordinates: pool-adjacent-
/// violators makes the slopes increasing, they are clipped to [0, φ(1)] and
/// y_1 to [0, ĉ]. Feasible points are returned unchanged.
pub fn isotonic_project(y: &[f64], c_hat: f64, phi1: f64) -> Vec<f64> {
    if y.is_empty() {
        return Vec::new();
    }
    if y.len() == 1 || c_hat <= 0.0 {
        return vec![y[0].clamp(0.0, c_hat.max(0.0)); y.len()];
    }
    if is_feasible(y, c_hat, phi1) {
        return y.to_vec();
    }
    let h = c_hat / (y.len() - 1) as f64;
    let slopes: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();

    // Blocks of (mean, count).
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(slopes.len());
    for &c in &slopes {
        let mut block = (c, 1usize);
        while let Some(&(mean, count)) = blocks.last() {
            if mean <= block.0 {
                break;
            }
            blocks.pop();
            let n = count + block.1;
            block = (
                (mean * count as f64 + block.0 * block.1 as f64) / n as f64,
                n,
            );
        }
        blocks.push(block);
    }

    let mut out = Vec::with_capacity(y.len());
    out.push(y[0].clamp(0.0, c_hat));
    for (mean, count) in blocks {
        let c = mean.clamp(0.0, phi1);
        for _ in 0..count {
            let last = *out.last().unwrap();
            out.push(last + h * c);
        }
    }
    out
}

/// p_m(g): the interpolant of `g` at the m equidistant knots of [0, ĉ].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub g: GPoly,
    /// The raw knot values violated Γ_m and were projected.
    pub clipped: bool,
}

pub fn project_pm<F: Fn(f64) -> f64>(
    g: F,
    m: usize,
    c_hat: f64,
    phi1: f64,
) -> Result<Projection, OuterError> {
    if m < 2 {
        return Err(OuterError::Domain(format!("need m >= 2, got {m}")));
    }
    let raw: Vec<f64> = if c_hat > 0.0 {
        equidistant_knots(c_hat, m).into_iter().map(&g).collect()
    } else {
        vec![g(0.0); m]
    };
    let y = isotonic_project(&raw, c_hat, phi1);
    let clipped = y != raw;
    Ok(Projection {
        g: GPoly::on_grid(c_hat, y, phi1)?,
        clipped,
    })
}

/// g*(ξ) = s_j ξ − y_j with j the number of slopes not exceeding ξ.
pub fn conjugate_closed_form(g: &GPoly, xi: f64) -> Result<f64, OuterError> {
    let bound = g.max_slope();
    if !(xi >= -1e-12) || xi > bound + 1e-12 {
        return Err(OuterError::Domain(format!(
            "conjugate argument {xi} outside [0, {bound}]"
        )));
    }
    let xi = xi.clamp(0.0, bound);
    let (s, y) = (g.knots(), g.values());
    let mut j = 0;
    while j + 1 < s.len() && (y[j + 1] - y[j]) / (s[j + 1] - s[j]) <= xi {
        j += 1;
    }
    Ok(s[j] * xi - y[j])
}

/// ∫_0^1 g*(φ(u)) du = Σ_j (u_{j+1} − u_j) g*(φ_j).
pub fn conjugate_integral(g: &GPoly, spec: &StepSpectrum) -> Result<f64, OuterError> {
    spec.steps()
        .map(|(lo, hi, v)| Ok((hi - lo) * conjugate_closed_form(g, v)?))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_examples() {
        assert_eq!(grid_size_from_epsilon(2.0, 5.0, 0.1).unwrap(), 201);
        assert_eq!(grid_size_from_epsilon(1.0, 1.0, 2.0).unwrap(), 2);
        assert_eq!(grid_size_from_epsilon(1.0, 0.0, 0.5).unwrap(), 2);
        assert!(grid_size_from_epsilon(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn error_bound_examples() {
        assert!((error_bound(201, 2.0, 5.0).unwrap() - 0.1).abs() < 1e-15);
        let a = error_bound(11, 1.5, 3.0).unwrap();
        let b = error_bound(21, 1.5, 3.0).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-15);
        assert!(error_bound(1, 1.0, 1.0).is_err());
    }

    #[test]
    fn conjugate_examples() {
        let g = GPoly::on_grid(2.0, vec![0.0, 0.5, 1.5], 2.0).unwrap();
        assert_eq!(conjugate_closed_form(&g, 0.0).unwrap(), 0.0);
        assert_eq!(conjugate_closed_form(&g, 0.75).unwrap(), 0.25);
        assert_eq!(conjugate_closed_form(&g, 1.5).unwrap(), 1.5);
        assert!(conjugate_closed_form(&g, 2.5).is_err());
        assert!(conjugate_closed_form(&g, -0.1).is_err());

        let zero = GPoly::on_grid(3.0, vec![0.0; 4], 1.5).unwrap();
        assert_eq!(conjugate_closed_form(&zero, 1.2).unwrap(), 3.0 * 1.2);
        let linear = GPoly::on_grid(3.0, vec![0.0, 1.5, 3.0, 4.5], 1.5).unwrap();
        assert_eq!(conjugate_closed_form(&linear, 0.7).unwrap(), 0.0);
    }

    #[test]
    fn conjugate_integral_examples() {
        let es = StepSpectrum::expected_shortfall(0.5).unwrap();
        let zero = GPoly::on_grid(3.0, vec![0.0; 4], 2.0).unwrap();
        assert!((conjugate_integral(&zero, &es).unwrap() - 3.0).abs() < 1e-15);
        let g = GPoly::on_grid(2.0, vec![0.25, 0.5, 1.5], 1.0).unwrap();
        let id = StepSpectrum::expectation();
        assert_eq!(
            conjugate_integral(&g, &id).unwrap(),
            conjugate_closed_form(&g, 1.0).unwrap()
        );
    }

    #[test]
    fn projection_examples() {
        let p = project_pm(|s| s * s, 3, 1.0, 2.0).unwrap();
        assert_eq!(p.g.values(), &[0.0, 0.25, 1.0]);
        assert!(!p.clipped);
        let again = project_pm(|s| p.g.eval(s), 3, 1.0, 2.0).unwrap();
        assert_eq!(again.g, p.g);
        let steep = project_pm(|s| 5.0 * s, 3, 1.0, 2.0).unwrap();
        assert!(steep.clipped);
        assert_eq!(steep.g.values(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn isotonic_examples() {
        let y = [0.0, 0.5, 1.5];
        assert_eq!(isotonic_project(&y, 2.0, 2.0), y.to_vec());
        // Slopes (2, 0) pool to (1, 1).
        assert_eq!(
            isotonic_project(&[0.0, 2.0, 2.0], 2.0, 3.0),
            vec![0.0, 1.0, 2.0]
        );
        assert_eq!(
            isotonic_project(&[0.0, 5.0, 10.0], 2.0, 2.0),
            vec![0.0, 2.0, 4.0]
        );
        assert_eq!(isotonic_project(&[-1.0, -1.0], 1.0, 1.0), vec![0.0, 0.0]);
    }
}
