#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use spectral_mdp::mdp::{Horizon, MdpModel, StageData, Stages, Transition};
use spectral_mdp::risk::{DiscreteDistribution, GPoly, StepSpectrum};

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

/// Up to `max_atoms` distinct atoms in [0, 10), some on a coarse lattice.
pub fn random_dist<R: Rng>(rng: &mut R, max_atoms: usize) -> DiscreteDistribution {
    let n = rng.random_range(1..=max_atoms);
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let x = if rng.random_bool(0.3) {
                rng.random_range(0..10) as f64
            } else {
                rng.random::<f64>() * 10.0
            };
            (x, 0.05 + rng.random::<f64>())
        })
        .collect();
    DiscreteDistribution::from_weighted(pairs).unwrap()
}

/// An increasing, normalized step spectrum with up to `max_steps` steps.
pub fn random_spectrum<R: Rng>(rng: &mut R, max_steps: usize) -> StepSpectrum {
    let k = rng.random_range(1..=max_steps);
    let mut cuts: Vec<f64> = (0..k - 1)
        .map(|_| 0.02 + 0.96 * rng.random::<f64>())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut breakpoints = vec![0.0];
    breakpoints.extend(cuts);
    breakpoints.push(1.0);
    let mut raw = Vec::new();
    let mut level = if rng.random_bool(0.3) {
        0.0
    } else {
        rng.random::<f64>()
    };
    for _ in 0..breakpoints.len() - 1 {
        raw.push(level);
        level += rng.random::<f64>() * 2.0;
    }
    if raw.iter().all(|&v| v == 0.0) {
        *raw.last_mut().unwrap() = 1.0;
    }
    let mass: f64 = raw
        .iter()
        .zip(breakpoints.windows(2))
        .map(|(v, w)| v * (w[1] - w[0]))
        .sum();
    let values = raw.iter().map(|v| v / mass).collect();
    StepSpectrum::new(breakpoints, values).unwrap()
}

/// An increasing convex piecewise-linear g on [0, cap] with slopes in
/// [0, max_slope], on an equidistant grid.
pub fn random_gpoly<R: Rng>(rng: &mut R, cap: f64, max_slope: f64, max_knots: usize) -> GPoly {
    let m = rng.random_range(2..=max_knots);
    let mut slopes: Vec<f64> = (0..m - 1)
        .map(|_| rng.random::<f64>() * max_slope)
        .collect();
    slopes.sort_by(f64::total_cmp);
    let h = cap / (m - 1) as f64;
    let mut y = vec![rng.random::<f64>() * cap];
    for c in slopes {
        let last = *y.last().unwrap();
        y.push(last + c * h);
    }
    GPoly::on_grid(cap, y, max_slope).unwrap()
}

/// One state; "sure" costs 1, "gamble" costs 0 or 2.2 with equal odds.
pub fn micro(horizon: usize, discount: f64) -> MdpModel {
    let data = StageData::build(
        1,
        2,
        vec![0.0, 1.0],
        vec![0.5, 0.5],
        vec![vec![0, 1]],
        |_, a, z| {
            let cost = if a == 0 {
                1.0
            } else if z == 0 {
                0.0
            } else {
                2.2
            };
            Ok(Transition { next: 0, cost })
        },
    )
    .unwrap();
    MdpModel::new(
        vec![0.0],
        vec!["sure".into(), "gamble".into()],
        Stages::Stationary(data),
        vec![0.0],
        discount,
        Horizon::Finite(horizon),
        None,
    )
    .unwrap()
}

/// A single state paying `cost` per stage forever.
pub fn geometric(cost: f64, discount: f64) -> MdpModel {
    let data = StageData::build(1, 1, vec![0.0], vec![1.0], vec![vec![0]], |_, _, _| {
        Ok(Transition { next: 0, cost })
    })
    .unwrap();
    MdpModel::new(
        vec![0.0],
        vec!["pay".into()],
        Stages::Stationary(data),
        vec![0.0],
        discount,
        Horizon::Infinite,
        None,
    )
    .unwrap()
}

/// Every stage and terminal cost zero.
pub fn zero_cost(horizon: Horizon) -> MdpModel {
    let data = StageData::build(
        2,
        2,
        vec![0.0, 1.0],
        vec![0.5, 0.5],
        vec![vec![0, 1], vec![1]],
        |x, a, z| {
            Ok(Transition {
                next: (x + a + z) % 2,
                cost: 0.0,
            })
        },
    )
    .unwrap();
    MdpModel::new(
        vec![0.0, 1.0],
        vec!["a".into(), "b".into()],
        Stages::Stationary(data),
        vec![0.0, 0.0],
        0.5,
        horizon,
        None,
    )
    .unwrap()
}
