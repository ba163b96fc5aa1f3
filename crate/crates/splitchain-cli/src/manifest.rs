//! Run manifest: one canonical JSON document per experiment, written next
//! to the result tables. It records everything needed to reproduce the run
//! bit for bit: the fully resolved configuration (including the generated
//! initial state and every default), the seed, the toolkit version, the
//! command-line overrides that were applied, the artifact list, and the
//! outcome (including errors, so failed runs leave a record too).
//!
//! Canonical form: keys sorted at every level, two-space indentation,
//! trailing newline. Two runs with the same resolved configuration produce
//! byte-identical manifests apart from the outcome summary.

use std::io;
use std::path::Path;

use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Ran to completion and every built-in check held.
    Pass,
    /// Ran to completion but a built-in check failed.
    CheckFailed,
    /// Did not complete: configuration or execution error.
    Error,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::CheckFailed => "check-failed",
            Status::Error => "error",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::CheckFailed => 2,
            Status::Error => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Manifest {
    pub kind: String,
    pub seed: u64,
    pub toolkit_version: String,
    /// Resolved config as a JSON tree (sorted keys).
    pub config: Value,
    /// The same config as canonical TOML text; feeding it back through
    /// `--config` reproduces the run exactly.
    pub config_toml: String,
    /// `--set` and `--seed` overrides, in application order.
    pub overrides: Vec<String>,
    /// File names (relative to the output directory) written by the run.
    pub artifacts: Vec<String>,
    pub status: Status,
    pub summary: String,
    pub errors: Vec<String>,
}

impl Manifest {
    pub fn to_value(&self) -> Value {
        // serde_json's map is sorted (BTreeMap), which is what makes this
        // canonical; insertion order below is irrelevant.
        json!({
            "kind": self.kind,
            "seed": self.seed,
            "toolkit_version": self.toolkit_version,
            "config": self.config,
            "config_toml": self.config_toml,
            "overrides": self.overrides,
            "artifacts": self.artifacts,
            "outcome": {
                "status": self.status.name(),
                "summary": self.summary,
                "errors": self.errors,
            },
        })
    }

    pub fn to_canonical_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_value()).expect("static tree");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        std::fs::write(dir.join("manifest.json"), self.to_canonical_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Manifest {
        Manifest {
            kind: "simulate".into(),
            seed: 7,
            toolkit_version: "1.2.3".into(),
            config: json!({"run": {"seed": 7}, "model": {"type": "lorenz96"}}),
            config_toml: "[model]\ntype = \"lorenz96\"\n".into(),
            overrides: vec!["run.seed=7".into()],
            artifacts: vec!["trajectory.csv".into()],
            status: Status::Pass,
            summary: "ok".into(),
            errors: vec![],
        }
    }

    #[test]
    fn keys_sorted_at_every_level() {
        let text = sample().to_canonical_string();
        let idx = |needle: &str| text.find(needle).unwrap_or_else(|| panic!("{needle} missing"));
        assert!(idx("\"artifacts\"") < idx("\"config\""));
        assert!(idx("\"config\"") < idx("\"config_toml\""));
        assert!(idx("\"kind\"") < idx("\"outcome\""));
        assert!(idx("\"outcome\"") < idx("\"overrides\""));
        assert!(idx("\"errors\"") < idx("\"status\""));
        assert!(idx("\"status\"") < idx("\"summary\""));
        // Nested config keys too.
        assert!(idx("\"model\"") < idx("\"run\""));
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let text = sample().to_canonical_string();
        let parsed: Value = serde_json::from_str(&text).unwrap();
        let mut again = serde_json::to_string_pretty(&parsed).unwrap();
        again.push('\n');
        assert_eq!(text, again);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Status::Pass.exit_code(), 0);
        assert_eq!(Status::Error.exit_code(), 1);
        assert_eq!(Status::CheckFailed.exit_code(), 2);
    }
}
