use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn idsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idsim")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "[experiment]\nkind = subordinator\nseed = 5\n\n[params]\nbetas = 0.5\nsamples = 20000\n\n[tolerances]\nmean_rel = 0.05\novershoot_ks = 0.05\n";

#[test]
fn list_shows_the_six_kinds() {
    let o = idsim(&["list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(names, ["subordinator", "chain-fclt", "entrance-fclt", "sssi", "main-fclt", "moments"]);
}

#[test]
fn describe_known_and_unknown() {
    let o = idsim(&["describe", "main-fclt"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for part in ["a_n^{1/2}", "ρ^←", "C_α", "μ(τ_D ≤ n)"] {
        assert!(text.contains(part), "{part}");
    }
    let o = idsim(&["describe", "chain-fclt"]);
    assert!(String::from_utf8(o.stdout).unwrap().contains("B(M_β(1))"));
    assert_eq!(idsim(&["describe", "nope"]).status.code(), Some(1));
}

#[test]
fn schema_violation_exits_one_with_line() {
    let d = scratch("schema");
    let cfg = write_config(&d, "[experiment]\nkind = chain-fclt\n\n[params]\nreplicates = 0\n");
    let o = idsim(&["run", &cfg, "--out", d.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 5") && err.contains("params.replicates"), "{err}");
    assert!(!d.join("out").exists());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(idsim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(idsim(&["run", "/nonexistent.cfg"]).status.code(), Some(1));
}

#[test]
fn model_parameter_error_exits_one() {
    let d = scratch("model");
    let cfg = write_config(&d, "[experiment]\nkind = chain-fclt\n[params]\nchecks = wandering\nbeta = 1\n");
    let o = idsim(&["run", &cfg, "--out", d.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn same_seed_gives_identical_results() {
    let d = scratch("determinism");
    let cfg = write_config(&d, SMALL);
    let a = d.join("a");
    let b = d.join("b");
    assert_eq!(idsim(&["run", &cfg, "--out", a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(idsim(&["run", &cfg, "--out", b.to_str().unwrap(), "--jobs", "3", "--no-plots"]).status.code(), Some(0));
    let (x, y) = (fs::read(a.join("results.csv")).unwrap(), fs::read(b.join("results.csv")).unwrap());
    assert_eq!(x, y);
    assert!(a.join("plots/ml_moments.svg").exists() && a.join("plots/overshoot.svg").exists());
    assert!(!b.join("plots").exists());
    let c = d.join("c");
    idsim(&["run", &cfg, "--out", c.to_str().unwrap(), "--seed", "6"]);
    assert_ne!(x, fs::read(c.join("results.csv")).unwrap());
    let summary = fs::read_to_string(a.join("summary.txt")).unwrap();
    assert!(summary.contains("overall: PASS"));
}

#[test]
fn tolerance_failure_exits_two() {
    let d = scratch("tolerance");
    let cfg = write_config(&d, &SMALL.replace("mean_rel = 0.05", "mean_rel = 1e-9"));
    let o = idsim(&["run", &cfg, "--out", d.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(fs::read_to_string(d.join("out/summary.txt")).unwrap().contains("FAIL"));
}

#[test]
fn time_budget_exits_three() {
    let d = scratch("budget");
    let cfg = write_config(&d, &format!("{SMALL}max_seconds = 0\n"));
    let o = idsim(&["run", &cfg, "--out", d.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn every_acceptance_config_validates() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/acceptance");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        idsim_cli::runner::load(&p).unwrap_or_else(|e| panic!("{e}"));
        n += 1;
    }
    assert!(n >= 11);
}
