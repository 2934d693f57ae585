//! End-to-end tests of the `crystalmm` binary: config parsing, outputs,
//! determinism, seed override and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_crystalmm")
}

fn run_with_env(args: &[&str], dir: &Path, envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args).arg("--out").arg(dir);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run(args: &[&str], dir: &Path) -> Output {
    run_with_env(args, dir, &[])
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const PINNED_FLOW: &str = r#"
[flow]
gamma = 1.0
eps = 0.02
rect = [-1.5, 1.5, -1.5, 1.5]
steps = 50

[flow.field]
kind = "zero"
seed = 0
"#;

#[test]
fn flow_pinned_reports_zero_motion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), PINNED_FLOW);
    let out = run(&["flow", "--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("flow_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["pinned"], true);
    assert_eq!(summary["moved_cells"], 0);
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 52); // header + 51 states
}

#[test]
fn flow_shrinking_square_row_count_matches_extinction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[flow]
gamma = 1.0
eps = 0.005
rect = [-0.45, 0.45, -0.45, 0.45]
steps = 500

[flow.field]
kind = "zero"
seed = 0
"#,
    );
    let out = run(&["flow", "--config", &cfg], dir.path());
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("flow_summary.json")).unwrap())
            .unwrap();
    let ext = summary["extinction_step"].as_u64().expect("extinction happens");
    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    // Rows = header + states 0..extinction-1.
    assert_eq!(csv.lines().count() as u64, 1 + ext);
    assert!(String::from_utf8_lossy(&out.stdout).contains("extinction at step"));
}

#[test]
fn flow_output_is_byte_identical_across_runs() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let body = r#"
[flow]
gamma = 1.0
eps = 0.01
rect = [-0.4, 0.4, -0.3, 0.3]
steps = 40

[flow.field]
kind = "iid"
seed = 11
[flow.field.distribution]
name = "uniform"
radius = 0.2
"#;
    let cfg_a = write_config(dir_a.path(), body);
    let cfg_b = write_config(dir_b.path(), body);
    assert!(run(&["flow", "--config", &cfg_a], dir_a.path()).status.success());
    assert!(run(&["flow", "--config", &cfg_b], dir_b.path()).status.success());
    let a = std::fs::read(dir_a.path().join("trajectory.csv")).unwrap();
    let b = std::fs::read(dir_b.path().join("trajectory.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn seed_env_overrides_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"
[flow]
gamma = 1.0
eps = 0.01
rect = [-0.4, 0.4, -0.3, 0.3]
steps = 30

[flow.field]
kind = "iid"
seed = 11
[flow.field.distribution]
name = "uniform"
radius = 0.22
"#;
    let cfg = write_config(dir.path(), body);
    assert!(run(&["flow", "--config", &cfg], dir.path()).status.success());
    let base = std::fs::read(dir.path().join("trajectory.csv")).unwrap();
    assert!(run_with_env(
        &["flow", "--config", &cfg],
        dir.path(),
        &[("CRYSTALMM_SEED", "999")]
    )
    .status
    .success());
    let overridden = std::fs::read(dir.path().join("trajectory.csv")).unwrap();
    assert_ne!(base, overridden);
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[flow]
gamma = 1.0
eps = 0.02
rect = [-1.5, 1.5, -1.5, 1.5]
bogus_key = 1

[flow.field]
kind = "zero"
seed = 0
"#,
    );
    let out = run(&["flow", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus_key"));

    let cfg2 = write_config(
        dir.path(),
        r#"
[flow]
gamma = 1.0
eps = 0.02
rect = [-1.5, 1.5, -1.5, 1.5]

[flow.field]
kind = "zero"
seed = 0
extra = true
"#,
    );
    let out2 = run(&["flow", "--config", &cfg2], dir.path());
    assert_eq!(out2.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out2.stderr).contains("extra"));
}

#[test]
fn missing_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), PINNED_FLOW);
    let out = run(&["veff", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[veff]"));
}

#[test]
fn veff_exports_asymmetric_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[veff]
gamma = 1.0
m = 6
mu = [-0.125, 0.125, 0.125, 0.0, 0.0, 0.125]
lambda = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
l_lo = 0.6
l_hi = 0.72
"#,
    );
    let out = run(&["veff", "--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("veff_tables.json")).unwrap())
            .unwrap();
    // Left and right differ: on 2/L in (2.875, 3) the left side moves 3,
    // the right side 2.
    let value_at = |side: &str, l: f64| -> f64 {
        v[side]["intervals"]
            .as_array()
            .unwrap()
            .iter()
            .find_map(|iv| {
                let lo: f64 = parse_ratio(iv["lo"].as_str().unwrap());
                let hi: f64 = parse_ratio(iv["hi"].as_str().unwrap());
                (lo < l && l < hi).then(|| iv["value"].as_f64().unwrap())
            })
            .expect("length inside table range")
    };
    let l = 2.0 / 2.9375;
    assert_eq!(value_at("left", l), 3.0);
    assert_eq!(value_at("right", l), 2.0);
    assert_eq!(v["left"]["threshold"], "8/5");
}

fn parse_ratio(s: &str) -> f64 {
    match s.split_once('/') {
        Some((n, d)) => n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap(),
        None => s.parse().unwrap(),
    }
}

#[test]
fn veff_rejects_malformed_means() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[veff]
gamma = 1.0
m = 6
mu = [-0.125, 0.125]
lambda = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
l_lo = 0.6
l_hi = 0.72
"#,
    );
    let out = run(&["veff", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("length"));
}

#[test]
fn compare_pinned_square_within_eps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[compare]
gamma = 1.0
eps_list = [0.02]
rect = [-1.5, 1.5, -1.5, 1.5]
t_max = 0.5
law = "homogeneous"
max_ratio = 1.0

[compare.field]
kind = "zero"
seed = 0
"#,
    );
    let out = run(&["compare", "--config", &cfg], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let rep: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("compare_report.json")).unwrap(),
    )
    .unwrap();
    assert!(rep["per_eps"][0]["sup_distance"].as_f64().unwrap() <= 0.02);
}

#[test]
fn homog_zero_field_has_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[homog]
mode = "sidesum"
gamma = 1.0
eps_list = [0.1, 0.01]
n_seeds = 4

[homog.family]
position = 0.7
length = 1.0

[homog.field]
kind = "zero"
seed = 0
"#,
    );
    let out = run(&["homog", "--config", &cfg], dir.path());
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("homog_report.json")).unwrap(),
    )
    .unwrap();
    for err in rep["median_abs_error"].as_array().unwrap() {
        assert_eq!(err.as_f64().unwrap(), 0.0);
    }
}

#[test]
fn oracle_suite_reports_full_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[oracle]
n_instances = 20
seed = 42
"#,
    );
    let out = run(&["oracle", "--config", &cfg], dir.path());
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("20/20"));
}

#[test]
fn mc_degenerate_distribution_matches_deterministic_step() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[mc]
gamma = 1.0
l = 0.8
values = [0.0625]
probs = [1.0]
n_steps = 200
n_seeds = 4
starts = [0, 5]
seed = 3
"#,
    );
    let out = run(&["mc", "--config", &cfg], dir.path());
    assert!(out.status.success());
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("mc_report.json")).unwrap())
            .unwrap();
    assert_eq!(rep["estimate"].as_f64().unwrap(), 2.0);
    assert_eq!(rep["starts_agree"], true);
}
