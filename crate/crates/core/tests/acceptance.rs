//! Acceptance suite. Runs without the libtest harness and prints one line
//! per criterion; exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_mdp::harness::{
    oracle_expected_optimum, random_micro_mdp, run_solve_outer, GSpec, MicroLimits, ModelSection,
    OracleSection, Overrides, ScenarioFile, ScenarioKind, SpectrumSpec,
};
use spectral_mdp::mdp::{
    evaluate_policy, solve, solve_finite, solve_infinite, Discretization, FnPolicy, InnerOptions,
    MdpModel, SMode,
};
use spectral_mdp::outer::{conjugate_closed_form, conjugate_integral, OuterConfig};
use spectral_mdp::reinsurance::{
    build_mdp, convex_order_check, solve_cost_of_capital, ReinsuranceConfig, Treaty,
};
use spectral_mdp::risk::{
    expected_shortfall, minimizer_g, ru_objective, spectral_risk, spectral_risk_via_mixture, GPoly,
    StepSpectrum,
};

use common::{geometric, random_dist, random_gpoly, random_spectrum, scenario_path};

type Outcome = Result<String, String>;

type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn es_mixture_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let d = random_dist(&mut rng, 20);
        let s = random_spectrum(&mut rng, 6);
        worst = worst.max((spectral_risk(&d, &s) - spectral_risk_via_mixture(&d, &s)).abs());
    }
    check(
        worst <= 1e-10,
        format!("max |diff| = {worst:.3e} over 500 pairs"),
    )
}

fn rockafellar_uryasev() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let d = random_dist(&mut rng, 20);
        for alpha in [0.0, 0.5, 0.9, 0.99] {
            let es = expected_shortfall(&d, alpha).map_err(|e| e.to_string())?;
            let mut min = f64::INFINITY;
            for &q in d.atoms() {
                min = min.min(ru_objective(&d, alpha, q).map_err(|e| e.to_string())?);
            }
            let q_star = if alpha == 0.0 {
                d.min_atom()
            } else {
                d.quantile(alpha).unwrap()
            };
            let at_q = ru_objective(&d, alpha, q_star).map_err(|e| e.to_string())?;
            worst = worst.max((min - es).abs()).max((at_q - es).abs());
        }
    }
    check(
        worst <= 1e-10,
        format!("max deviation {worst:.3e} over 800 cases"),
    )
}

fn infimum_representation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = random_dist(&mut rng, 20);
        let s = random_spectrum(&mut rng, 6);
        let g = minimizer_g(&s, &d).map_err(|e| e.to_string())?;
        let k = d.expect(|x| g.eval(x)) + conjugate_integral(&g, &s).map_err(|e| e.to_string())?;
        worst = worst.max((k - spectral_risk(&d, &s)).abs());
    }
    check(
        worst <= 1e-8,
        format!("max deviation {worst:.3e} over 100 pairs"),
    )
}

fn conjugate_closed_form_vs_grid() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    const POINTS: usize = 100_000;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..1000 {
        let cap = 0.5 + rng.random::<f64>() * 9.5;
        let phi1 = 0.5 + rng.random::<f64>() * 4.5;
        let g = random_gpoly(&mut rng, cap, phi1, 12);
        let xi = rng.random::<f64>() * phi1;
        let closed = conjugate_closed_form(&g, xi).map_err(|e| e.to_string())?;
        let mut brute = f64::NEG_INFINITY;
        for i in 0..=POINTS {
            let s = cap * i as f64 / POINTS as f64;
            brute = brute.max(s * xi - g.eval(s));
        }
        let tol = 10.0 * cap * phi1 / POINTS as f64;
        worst_ratio = worst_ratio.max((closed - brute).abs() / tol);
    }
    check(
        worst_ratio <= 1.0,
        format!("max |diff|/tol = {worst_ratio:.3e} over 1000 pairs"),
    )
}

fn markov_sufficiency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lim = MicroLimits::default();
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let model = random_micro_mdp(&mut rng, &lim);
        let c_hat = model.total_cost_bound();
        let max_slope = 1.0 + rng.random::<f64>();
        let g = random_gpoly(&mut rng, c_hat.max(1e-3), max_slope, 6);
        let dp =
            solve_finite(&model, &g, 0, &InnerOptions::default()).map_err(|e| e.to_string())?;
        if dp.discretization != Discretization::Exact {
            return Err(format!("instance {i} fell back to the grid"));
        }
        let oracle = oracle_expected_optimum(&model, &g, 0, 1e7).map_err(|e| e.to_string())?;
        worst = worst.max((dp.value_at_origin - oracle.value).abs());
    }
    check(
        worst <= 1e-12,
        format!("max |DP − oracle| = {worst:.3e} over 50 models"),
    )
}

fn criterion6_spectra() -> [StepSpectrum; 2] {
    [
        StepSpectrum::expected_shortfall(0.5).unwrap(),
        StepSpectrum::mixture(&[(0.0, 0.5), (0.5, 0.3), (0.8, 0.2)]).unwrap(),
    ]
}

fn criterion6_models() -> Vec<MdpModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    (0..10)
        .map(|_| random_micro_mdp(&mut rng, &MicroLimits::default()))
        .collect()
}

fn criterion6_scenario(model: &MdpModel, spec: &StepSpectrum) -> ScenarioFile {
    ScenarioFile {
        kind: ScenarioKind::GenericMdp,
        model: Some(ModelSection::from_model(model, 0)),
        reinsurance: None,
        spectrum: SpectrumSpec::Step {
            breakpoints: spec.breakpoints().to_vec(),
            values: spec.values().to_vec(),
        },
        outer: OuterConfig::default(),
        inner: InnerOptions::default(),
        g: GSpec::Identity,
        oracle: OracleSection {
            enabled: true,
            policy_cap: 1e7,
            ..OracleSection::default()
        },
    }
}

fn end_to_end_bound() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let mut worst_slack_ratio: f64 = 0.0;
    for (i, model) in criterion6_models().iter().enumerate() {
        for (j, spec) in criterion6_spectra().iter().enumerate() {
            let file = criterion6_scenario(model, spec);
            let rep = run_solve_outer(&file, &Overrides::default()).map_err(|e| e.to_string())?;
            let bound = rep.error_bound.unwrap();
            let gap = rep.gap.unwrap();
            let slack = (gap.abs() - bound).max(0.0);
            worst_slack_ratio = worst_slack_ratio.max(slack / bound);
            if gap < -1e-9 || slack >= bound / 10.0 {
                ok = false;
                lines.push(format!(
                    "model {i} spectrum {j}: gap {gap:.3e} bound {bound:.3e}"
                ));
            }
        }
    }
    let detail = format!(
        "20 runs, max slack/bound = {worst_slack_ratio:.3e}; {}",
        lines.join("; ")
    );
    check(ok, detail)
}

fn infinite_fixed_point() -> Outcome {
    let file =
        ScenarioFile::from_path(scenario_path("geometric.toml")).map_err(|e| e.to_string())?;
    let shipped = file.build().map_err(|e| e.to_string())?.model;
    let tol = 1e-6;
    let opts = InnerOptions {
        tolerance: tol,
        ..file.inner.clone()
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for model in [shipped, geometric(1.0, 0.5)] {
        let g = GPoly::identity(model.total_cost_bound()).map_err(|e| e.to_string())?;
        let r = solve_infinite(&model, &g, 0, &opts).map_err(|e| e.to_string())?;
        let target = model.cost_cap() / (1.0 - model.discount());
        let err = (r.value_at_origin - target).abs();
        ok &= err <= tol && r.residual <= tol && r.max_decrease <= 0.0;
        parts.push(format!(
            "β = {}: |J − c̄/(1−β)| = {err:.3e}, residual {:.3e}, max decrease {:.3e}",
            model.discount(),
            r.residual,
            r.max_decrease
        ));
    }
    check(ok, parts.join("; "))
}

/// Largest violation of: decreasing in surplus, increasing in s and t.
fn structure_violation(model: &MdpModel, values: &spectral_mdp::mdp::ValueTable) -> f64 {
    let labels = model.states();
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]));
    let mut worst: f64 = 0.0;
    for grid in &values.stages {
        let levels = grid.t_levels.len();
        for slice in &grid.slices {
            for j in 0..levels {
                for w in slice.row(j).windows(2) {
                    worst = worst.max(w[0] - w[1]);
                }
                if j + 1 < levels {
                    let (lo, hi) = (grid.t_levels[j], grid.t_levels[j + 1]);
                    let (a, b) = if lo <= hi { (j, j + 1) } else { (j + 1, j) };
                    for (x, y) in slice.row(a).iter().zip(slice.row(b)) {
                        worst = worst.max(x - y);
                    }
                }
            }
        }
        for w in order.windows(2) {
            let (lo, hi) = (&grid.slices[w[0]], &grid.slices[w[1]]);
            if lo.s == hi.s {
                for (x, y) in lo.data.iter().zip(&hi.data) {
                    worst = worst.max(y - x);
                }
            }
        }
    }
    worst
}

fn reinsurance_structure() -> Outcome {
    let file =
        ScenarioFile::from_path(scenario_path("reinsurance.toml")).map_err(|e| e.to_string())?;
    let cfg = file.reinsurance.clone().unwrap();
    let inner = file.inner.clone();
    if inner.mode != SMode::Grid || inner.t_multipliers.len() < 2 {
        return Err("the shipped scenario should use several t-levels on a grid".into());
    }
    let err = |e: spectral_mdp::reinsurance::ReinsuranceError| e.to_string();
    let full = build_mdp(&cfg).map_err(err)?;
    let c_hat = full.model.total_cost_bound();
    let phi1 = file.spectrum().unwrap().max_value();
    let gs: Vec<GPoly> = vec![
        GPoly::identity(c_hat).unwrap(),
        GPoly::with_knots(
            vec![0.0, 0.3 * c_hat, c_hat],
            vec![0.0, 0.0, phi1 * 0.7 * c_hat],
            phi1,
        )
        .unwrap(),
        GPoly::with_knots(
            vec![0.0, 0.1 * c_hat, 0.25 * c_hat, c_hat],
            vec![
                0.0,
                0.02 * c_hat,
                0.17 * c_hat,
                0.17 * c_hat + phi1 * 0.75 * c_hat,
            ],
            phi1,
        )
        .unwrap(),
    ];

    // (a) on the shipped scenario and on its budget-constrained variant.
    let budget = ReinsuranceConfig {
        budget_constrained: true,
        ..cfg.clone()
    };
    let constrained = build_mdp(&budget).map_err(err)?;
    let mut worst_a: f64 = 0.0;
    for m in [&full.model, &constrained.model] {
        for g in &gs {
            let r = solve(m, g, full.x0, &inner).map_err(|e| e.to_string())?;
            worst_a = worst_a.max(structure_violation(m, &r.values));
        }
    }

    // (b) stop-loss sub-grid against the full grid.
    let stop_loss_only = ReinsuranceConfig {
        treaties: cfg
            .treaties
            .iter()
            .copied()
            .filter(|t| matches!(t, Treaty::StopLoss { .. }))
            .collect(),
        ..cfg.clone()
    };
    let sl = build_mdp(&stop_loss_only).map_err(err)?;
    let mut worst_b = f64::NEG_INFINITY;
    let mut resolution: f64 = 0.0;
    for g in &gs {
        let v_full = solve(&full.model, g, full.x0, &inner)
            .map_err(|e| e.to_string())?
            .value_at_origin;
        let v_sl = solve(&sl.model, g, sl.x0, &inner)
            .map_err(|e| e.to_string())?
            .value_at_origin;
        let mut constant = Vec::new();
        for a in 0..sl.treaties.len() {
            let p = FnPolicy(move |_, _, _, _| a);
            constant
                .push(evaluate_policy(&sl.model, &p, g, sl.x0, &inner).map_err(|e| e.to_string())?);
        }
        for w in constant.windows(2) {
            resolution = resolution.max((w[1] - w[0]).abs());
        }
        worst_b = worst_b.max(v_sl - v_full);
    }
    let spec = file.spectrum().map_err(|e| e.to_string())?;
    let outer = file.outer_config();
    let full_opt = solve_cost_of_capital(&cfg, &spec, None, &outer).map_err(err)?;
    let sl_opt = solve_cost_of_capital(&stop_loss_only, &spec, None, &outer).map_err(err)?;
    let outer_b = sl_opt.outer.best_value - full_opt.outer.best_value;

    // (c) convex order for every proportional treaty.
    let mut unverified = Vec::new();
    for t in &cfg.treaties {
        if let Treaty::Proportional { .. } = t {
            if !convex_order_check(&cfg.claims, t).verified {
                unverified.push(t.label());
            }
        }
    }
    check(
        worst_a <= 1e-9 && worst_b <= resolution && outer_b <= resolution && unverified.is_empty(),
        format!(
            "(a) max violation {worst_a:.3e}; (b) stop-loss − full = {worst_b:.3e} for fixed g, {outer_b:.3e} for the outer optimum, resolution {resolution:.3e}; (c) unverified {unverified:?}"
        ),
    )
}

fn determinism() -> Outcome {
    let mut bodies: Vec<Vec<String>> = Vec::new();
    for threads in [1, 4, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let run = pool.install(|| -> Result<Vec<String>, String> {
            let mut out = Vec::new();
            for model in criterion6_models() {
                for spec in criterion6_spectra() {
                    let file = criterion6_scenario(&model, &spec);
                    let rep = run_solve_outer(
                        &file,
                        &Overrides {
                            seed: Some(7),
                            ..Overrides::default()
                        },
                    )
                    .map_err(|e| e.to_string())?;
                    out.push(rep.body_json().map_err(|e| e.to_string())?);
                }
            }
            Ok(out)
        })?;
        bodies.push(run);
    }
    let same = bodies.windows(2).all(|w| w[0] == w[1]);
    check(
        same,
        format!(
            "{} reports compared across 1, 4 and 4 threads",
            bodies[0].len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            "1 ES-mixture identity",
            es_mixture_identity,
            Duration::from_secs(1),
        ),
        (
            "2 Rockafellar-Uryasev minimum",
            rockafellar_uryasev,
            Duration::from_secs(1),
        ),
        (
            "3 infimum representation",
            infimum_representation,
            Duration::from_secs(5),
        ),
        (
            "4 conjugate closed form",
            conjugate_closed_form_vs_grid,
            Duration::from_secs(10),
        ),
        (
            "5 Markov sufficiency",
            markov_sufficiency,
            Duration::from_secs(30),
        ),
        (
            "6 end-to-end error bound",
            end_to_end_bound,
            Duration::from_secs(300),
        ),
        (
            "7 infinite-horizon fixed point",
            infinite_fixed_point,
            Duration::from_secs(10),
        ),
        (
            "8 reinsurance structure",
            reinsurance_structure,
            Duration::from_secs(300),
        ),
        ("9 determinism", determinism, Duration::from_secs(600)),
    ];
    let only: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, run, limit) in criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= limit => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the {limit:?} limit")),
            Err(d) => ("FAIL", d),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {name}: {status} ({:.2?}) {detail}", elapsed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
