//! End-to-end tests through the built binary: exit codes, manifest
//! completeness and canonical form, bit-identical re-execution from a
//! manifest's embedded config, and golden-file checks on the frozen CSV
//! formats of the weak-convergence and rank tables.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_splitchain"))
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/configs").join(name)
}

fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn manifest(dir: &Path) -> Value {
    let text = std::fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Cells that parse as floats compare with a small relative tolerance
/// (guarding against libm differences across platforms); everything else
/// must match exactly.
fn assert_csv_matches(actual_path: &Path, golden_name: &str) {
    let actual = std::fs::read_to_string(actual_path).unwrap();
    let golden = std::fs::read_to_string(golden_path(golden_name)).unwrap();
    let (a_lines, g_lines): (Vec<&str>, Vec<&str>) =
        (actual.lines().collect(), golden.lines().collect());
    assert_eq!(a_lines.len(), g_lines.len(), "{golden_name}: row count changed");
    assert_eq!(a_lines[0], g_lines[0], "{golden_name}: header changed");
    for (row, (a, g)) in a_lines.iter().zip(&g_lines).enumerate().skip(1) {
        let (ac, gc): (Vec<&str>, Vec<&str>) = (a.split(',').collect(), g.split(',').collect());
        assert_eq!(ac.len(), gc.len(), "{golden_name} row {row}: column count changed");
        for (col, (av, gv)) in ac.iter().zip(&gc).enumerate() {
            match (av.parse::<f64>(), gv.parse::<f64>()) {
                (Ok(x), Ok(y)) => {
                    let tol = 1e-9 * y.abs().max(1.0);
                    assert!(
                        (x - y).abs() <= tol,
                        "{golden_name} row {row} col {col}: {x} vs golden {y}"
                    );
                }
                _ => assert_eq!(av, gv, "{golden_name} row {row} col {col}"),
            }
        }
    }
}

const SIM: &str = "[model]\ntype = \"lorenz96\"\nn = 6\n\n[scheme]\nh = 0.2\n\n[run]\ncycles = 40\nseed = 5\n";

#[test]
fn simulate_manifest_reproduces_run_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SIM);
    let out1 = tmp.path().join("run1");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--set", "run.cycles=30", "--out"])
        .arg(&out1)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let m = manifest(&out1);
    assert_eq!(m["kind"], "simulate");
    assert_eq!(m["seed"], 5);
    assert_eq!(m["outcome"]["status"], "pass");
    assert_eq!(m["overrides"], serde_json::json!(["run.cycles=30"]));
    assert_eq!(m["artifacts"], serde_json::json!(["trajectory.csv"]));
    assert_eq!(m["config"]["run"]["cycles"], 30, "override must land in the resolved config");
    assert_eq!(m["config"]["model"]["x0"].as_array().unwrap().len(), 6);

    // Canonical form: the file is a fixed point of parse -> pretty-print.
    let bytes = std::fs::read_to_string(out1.join("manifest.json")).unwrap();
    let mut reprinted = serde_json::to_string_pretty(&m).unwrap();
    reprinted.push('\n');
    assert_eq!(bytes, reprinted);

    // Replaying the embedded config reproduces the table byte for byte.
    let replay_cfg = tmp.path().join("replay.toml");
    std::fs::write(&replay_cfg, m["config_toml"].as_str().unwrap()).unwrap();
    let out2 = tmp.path().join("run2");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&replay_cfg)
        .arg("--out")
        .arg(&out2)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_eq!(
        std::fs::read(out1.join("trajectory.csv")).unwrap(),
        std::fs::read(out2.join("trajectory.csv")).unwrap(),
        "replay must be bit-identical"
    );
    // And the replay resolves to the identical config tree.
    assert_eq!(manifest(&out2)["config"], m["config"]);
}

#[test]
fn config_problems_all_reported_and_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[model]\ntype = \"lorenz96\"\nn = 2\n\n[scheme]\nh = -1.0\n\n[run]\nsamples = 1\n",
    );
    let out = tmp.path().join("out");
    let result = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(1));
    let err = stderr_of(&result);
    for path in ["model.n", "scheme.h", "run.samples"] {
        assert!(err.contains(path), "stderr must name {path}: {err}");
    }
    let m = manifest(&out);
    assert_eq!(m["outcome"]["status"], "error");
    assert_eq!(m["outcome"]["errors"].as_array().unwrap().len(), 3);
}

#[test]
fn kind_mismatch_is_a_field_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("kind = \"simulate\"\n{SIM}"));
    let out = tmp.path().join("out");
    let result = bin()
        .args(["ergodic", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(result.status.code(), Some(1));
    assert!(stderr_of(&result).contains("kind:"), "{}", stderr_of(&result));
}

#[test]
fn failed_check_exits_two_with_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[model]\ntype = \"lorenz96\"\nn = 4\n\n[scheme]\nh = 0.2\n\n[run]\ncycles = 5\nsamples = 200\nseed = 7\n",
    );
    let out = tmp.path().join("out");
    let status = bin()
        .args(["weak-converge", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2), "undersampled study must fail its check");
    let m = manifest(&out);
    assert_eq!(m["outcome"]["status"], "check-failed");
    assert!(out.join("weak_errors.csv").exists(), "tables written even when the check fails");
}

#[test]
fn seed_flag_lands_last_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SIM);
    let out = tmp.path().join("out");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .args(["--set", "run.seed=1", "--seed", "99", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let m = manifest(&out);
    assert_eq!(m["seed"], 99);
    assert_eq!(m["config"]["run"]["seed"], 99);
    assert_eq!(m["overrides"], serde_json::json!(["run.seed=1", "run.seed=99"]));
}

#[test]
fn weak_converge_table_format_is_frozen() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let status = bin()
        .args(["weak-converge", "--config"])
        .arg(config_path("weak_golden.toml"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_csv_matches(&out.join("weak_errors.csv"), "weak_errors.csv");
    assert_csv_matches(&out.join("weak_slopes.csv"), "weak_slopes.csv");
}

#[test]
fn ranks_table_format_is_frozen() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let status = bin()
        .args(["ranks", "--config"])
        .arg(config_path("ranks_golden.toml"))
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert_csv_matches(&out.join("ranks.csv"), "ranks.csv");
}
