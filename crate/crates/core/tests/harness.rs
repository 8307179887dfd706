mod common;

use std::process::Command;

use spectral_mdp::harness::{
    policy_count, run_cli, run_gap_study, run_oracle, run_solve_inner, run_solve_outer,
    version_stamp, Overrides, ScenarioFile, OUT_DIR_ENV,
};
use spectral_mdp::mdp::{policy_cost_distribution, FnPolicy, InnerOptions};
use spectral_mdp::risk::spectral_risk;

use common::scenario_path;

const SHIPPED: [&str; 4] = [
    "micro.toml",
    "micro_two_stage.toml",
    "geometric.toml",
    "reinsurance.toml",
];

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spectral-mdp"))
}

fn load(name: &str) -> ScenarioFile {
    ScenarioFile::from_path(scenario_path(name)).unwrap()
}

#[test]
fn shipped_scenarios_round_trip() {
    for name in SHIPPED {
        let file = load(name);
        let again = ScenarioFile::from_toml_str(&file.to_toml_string().unwrap()).unwrap();
        assert_eq!(file, again, "{name}");
        file.build().unwrap();
    }
}

#[test]
fn micro_oracle_and_outer_agree() {
    let file = load("micro.toml");
    let o = run_oracle(&file, &Overrides::default()).unwrap();
    assert_eq!(o.oracle_value, Some(1.0));
    let r = run_solve_outer(&file, &Overrides::default()).unwrap();
    let (v, bound) = (r.outer_value.unwrap(), r.error_bound.unwrap());
    assert!(v >= 1.0 - 1e-12 && v <= 1.0 + bound);
    assert!(r.gap.unwrap() >= -1e-12);
}

#[test]
fn two_stage_oracle_beats_simple_policies() {
    let file = load("micro_two_stage.toml");
    let built = file.build().unwrap();
    let spec = file.spectrum().unwrap();
    assert_eq!(policy_count(&built.model, built.x0).unwrap(), 8.0);
    let oracle = run_oracle(&file, &Overrides::default())
        .unwrap()
        .oracle_value
        .unwrap();
    for a0 in 0..2 {
        for a1 in 0..2 {
            let p = FnPolicy(move |n, _, _, _| if n == 0 { a0 } else { a1 });
            let law =
                policy_cost_distribution(&built.model, &p, built.x0, &InnerOptions::default())
                    .unwrap();
            assert!(oracle <= spectral_risk(&law, &spec) + 1e-12);
        }
    }
    let gap = run_gap_study(&file, &Overrides::default()).unwrap();
    assert_eq!(gap.gap_study.len(), 2);
    for row in &gap.gap_study {
        assert!(row.gap >= -1e-9 && row.gap <= row.bound + 1e-9, "{row:?}");
    }
}

#[test]
fn inner_report_on_the_geometric_scenario() {
    let r = run_solve_inner(&load("geometric.toml"), &Overrides::default()).unwrap();
    assert!((r.inner_value.unwrap() - 10.0).abs() < 1e-6);
}

#[test]
fn same_seed_gives_identical_bodies() {
    let file = load("micro_two_stage.toml");
    let ov = Overrides {
        seed: Some(3),
        ..Overrides::default()
    };
    let a = run_solve_outer(&file, &ov).unwrap().body_json().unwrap();
    let b = run_solve_outer(&file, &ov).unwrap().body_json().unwrap();
    assert_eq!(a, b);
    assert!(!a.contains("wall_clock_ms"));
}

#[test]
fn exit_codes() {
    let micro = scenario_path("micro.toml");
    let micro = micro.to_str().unwrap();
    assert_eq!(run_cli(["spectral-mdp", "--help"]), 0);
    assert_eq!(run_cli(["spectral-mdp", "solve-outer"]), 2);
    assert_eq!(
        run_cli(["spectral-mdp", "oracle", "--scenario", "/nonexistent.toml"]),
        2
    );
    assert_eq!(
        run_cli([
            "spectral-mdp",
            "solve-outer",
            "--scenario",
            micro,
            "--m",
            "1"
        ]),
        2
    );

    let dir = tempfile::tempdir().unwrap();
    let capped = dir.path().join("capped.toml");
    let text = std::fs::read_to_string(micro)
        .unwrap()
        .replace("enabled = true", "enabled = true\npolicy_cap = 1.0");
    std::fs::write(&capped, text).unwrap();
    let status = bin()
        .args(["oracle", "--scenario"])
        .arg(&capped)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(3));
}

#[test]
fn version_flag() {
    let out = bin().arg("--version").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.trim(), version_stamp());
}

#[test]
fn output_locations() {
    let dir = tempfile::tempdir().unwrap();
    let micro = scenario_path("micro.toml");
    let status = bin()
        .env(OUT_DIR_ENV, dir.path())
        .args(["oracle", "--format", "csv", "--scenario"])
        .arg(&micro)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("micro-oracle.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("stage,history,state,action"));

    let explicit = dir.path().join("report.json");
    let status = bin()
        .env(OUT_DIR_ENV, dir.path())
        .args(["solve-outer", "--seed", "5", "--scenario"])
        .arg(&micro)
        .arg("--out")
        .arg(&explicit)
        .status()
        .unwrap();
    assert!(status.success());
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&explicit).unwrap()).unwrap();
    assert_eq!(json["seed"], 5);
    assert_eq!(json["command"], "solve-outer");
    assert!(!dir.path().join("micro-solve-outer.json").exists());

    let out = bin()
        .args(["solve-inner", "--format", "csv", "--scenario"])
        .arg(&micro)
        .env_remove(OUT_DIR_ENV)
        .output()
        .unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("stage,state,s,t,action"));
}
