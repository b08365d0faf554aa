use std::path::Path;
use std::process::{Command, Output};

use dampbound::config::ExperimentConfig;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dampbound")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn verify_exits_zero_with_a_full_table() {
    let out = run(&["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    assert_eq!(table.matches("PASS").count(), 7, "{table}");
}

#[test]
fn stationary_sweep_fits_slope_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "[operator]\nkind = \"wave1d\"\nmodes = 4\n\n[damping]\nfamily = \"averaged_h\"\nalpha = 2.0\n\n\
         [forcing]\nkind = \"stationary\"\nmode = 2\namplitudes = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0]\n\n\
         [bound]\nt_total = 10.0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["sweep", "--config", path(&cfg), "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("fit_summary.json")).unwrap()).unwrap();
    let slope = summary["slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 1e-6, "{summary}");
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    assert!(csv.starts_with("amplitude,norm_kind,forcing_norm,M_hat,status"));
}

#[test]
fn invalid_exponent_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--set", "damping.alpha=-1", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("damping.alpha"));
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--set", "damping.gamma=1", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulation_is_reproducible_and_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let args = |d: &str| {
        run(&["simulate", "--set", "simulate.t_final=5", "--set", "damping.alpha=1.5", "--set", "seed=7", "--out", d])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(args(path(&a)).status.success());
    assert!(args(path(&b)).status.success());
    let ea = std::fs::read(a.join("energy.csv")).unwrap();
    assert_eq!(ea, std::fs::read(b.join("energy.csv")).unwrap());
    assert!(ea.starts_with(b"t,E,Phi,work,dissipation"));

    let resolved = std::fs::read_to_string(a.join("resolved_config.toml")).unwrap();
    let cfg = ExperimentConfig::parse(&resolved, &[]).unwrap();
    assert_eq!(cfg.clone().resolve().unwrap(), cfg);
    let again = dir.path().join("c");
    assert!(run(&["simulate", "--config", path(&a.join("resolved_config.toml")), "--out", path(&again)]).status.success());
    assert_eq!(ea, std::fs::read(again.join("energy.csv")).unwrap());
}

#[test]
fn antiperiodic_subcommand_writes_orbit() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "antiperiodic",
        "--set",
        "operator.modes=4",
        "--set",
        "damping.family=\"averaged_h\"",
        "--set",
        "damping.alpha=1.0",
        "--set",
        "forcing.kind=\"oracle\"",
        "--set",
        "forcing.amplitude=1.0",
        "--out",
        path(dir.path()),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(dir.path().join("antiperiodic.csv")).unwrap();
    assert_eq!(rows.lines().count(), 2, "{rows}");
    let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(traj.lines().count() > 10);
}
