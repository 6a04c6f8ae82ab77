//! End-to-end CLI checks: exit codes, artifact layout, seed overrides.

use std::path::Path;
use std::process::{Command, Output};

fn procure(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_procure")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const TWO_TYPE_PREAMBLE: &str = r#"
[database]
counts = [10, 10]

[[distributions]]
kind = "uniform"
lo = 0.0
hi = 1.0

[[distributions]]
kind = "uniform"
lo = 0.0
hi = 2.0
"#;

#[test]
fn validate_accepts_good_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "ok.toml",
        &format!("kind = \"run\"\nseed = 1\nc = 0.5\nepsilon = 1.0\nreplications = 5\n{TWO_TYPE_PREAMBLE}"),
    );
    let out = procure(&["validate", "--config", &config]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // two parameter modes at once
    let config = write_config(
        dir.path(),
        "bad.toml",
        &format!("kind = \"run\"\nseed = 1\nc = 0.5\nk = 10.0\nepsilon = 1.0\nreplications = 5\n{TWO_TYPE_PREAMBLE}"),
    );
    let out = procure(&["validate", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn kind_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "run.toml",
        &format!("kind = \"run\"\nseed = 1\nc = 0.5\nepsilon = 1.0\nreplications = 5\n{TWO_TYPE_PREAMBLE}"),
    );
    let out = procure(&["benchmark", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infeasible_budget_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "budget.toml",
        &format!(
            "kind = \"run\"\nseed = 1\nbudget = 0.001\nalpha_max = 1.0\nreplications = 5\n{TWO_TYPE_PREAMBLE}"
        ),
    );
    let out = procure(&["validate", "--config", &config]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn noise_off_limited_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "bic.toml",
        &format!(
            "kind = \"audit-bic\"\nseed = 1\nc = 0.5\nepsilon = 1.0\nreplications = 1000\n{TWO_TYPE_PREAMBLE}\n[audit_bic]\nplayer_index = 0\n"
        ),
    );
    let out = procure(&["audit-bic", "--config", &config, "--noise-off"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seed_override_changes_hash_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "run.toml",
        &format!("kind = \"run\"\nseed = 7\nc = 0.5\nepsilon = 1.0\nreplications = 5\n{TWO_TYPE_PREAMBLE}"),
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(procure(&["run", "--config", &config, "--out", out_a.to_str().unwrap()])
        .status
        .success());
    assert!(procure(&[
        "run",
        "--config",
        &config,
        "--seed",
        "8",
        "--out",
        out_b.to_str().unwrap()
    ])
    .status
    .success());
    let rows_a = std::fs::read_to_string(out_a.join("results.csv")).unwrap();
    let rows_b = std::fs::read_to_string(out_b.join("results.csv")).unwrap();
    assert_ne!(rows_a, rows_b);
    assert!(rows_a.lines().nth(1).unwrap().starts_with("7,"));
    assert!(rows_b.lines().nth(1).unwrap().starts_with("8,"));
    // manifest records the effective seed
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_b.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["seed"], 8);
}

fn audit_dp_config(epsilon_target: Option<f64>, bins: usize, min_bin_count: u64) -> String {
    let target = epsilon_target.map(|t| format!("epsilon_target = {t}\n")).unwrap_or_default();
    format!(
        r#"kind = "audit-dp"
seed = 5
c = 0.5
epsilon = 0.5

[database]
counts = [10, 10]

[[distributions]]
kind = "uniform"
lo = 0.0
hi = 1.0

[[distributions]]
kind = "uniform"
lo = 0.0
hi = 2.0

[audit_dp]
statistic = "estimate"
flip_index = 10
flip_to = 0
samples = 100000
bins = {bins}
min_bin_count = {min_bin_count}
{target}"#
    )
}

#[test]
fn audit_dp_pass_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "dp.toml", &audit_dp_config(None, 20, 500));
    let out_dir = dir.path().join("out");
    let out = procure(&["audit-dp", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for artifact in ["manifest.json", "results.csv", "summary.json"] {
        assert!(out_dir.join(artifact).exists(), "{artifact} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["status"], "pass");
}

#[test]
fn audit_dp_tight_target_exits_5() {
    // the same evidence audited against epsilon/10 must fail, and failing
    // audits still leave their artifacts behind
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "dp.toml", &audit_dp_config(Some(0.05), 20, 500));
    let out_dir = dir.path().join("out");
    let out = procure(&["audit-dp", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["status"], "fail");
}

#[test]
fn audit_dp_inconclusive_exits_4() {
    // absurdly fine binning leaves no qualifying bins
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "dp.toml", &audit_dp_config(None, 4000, 5000));
    let out_dir = dir.path().join("out");
    let out = procure(&["audit-dp", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["status"], "inconclusive");
}

#[test]
fn accuracy_sweep_empirical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "sweep.toml",
        r#"
kind = "accuracy-sweep"
seed = 3
replications = 300
target_type = 0

[database]
counts = [40, 60]

[[distributions]]
kind = "uniform"
lo = 0.0
hi = 1.0

[[distributions]]
kind = "uniform"
lo = 0.0
hi = 2.0

[accuracy_sweep]
ks = [30.0]
n = 100
"#,
    );
    let out_dir = dir.path().join("out");
    let out =
        procure(&["accuracy-sweep", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let data_row = rows.lines().nth(1).unwrap();
    assert!(data_row.ends_with("true"), "sweep row failed: {data_row}");
}
