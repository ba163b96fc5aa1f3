//! Command-line front end for the splitchain toolkit.
//!
//! One invocation = one experiment: read a TOML config, apply command-line
//! overrides, validate everything (reporting all problems at once), run the
//! experiment named by the subcommand, and leave behind the result tables
//! plus a `manifest.json` that records the fully resolved configuration.
//! Feeding the manifest's embedded config back in reproduces the tables
//! byte for byte.
//!
//! Exit codes: 0 when the experiment ran and its built-in checks held,
//! 2 when it ran but a check failed, 1 for configuration or execution
//! errors. Errors are written into the manifest as well.

pub mod config;
pub mod experiments;
pub mod manifest;
pub mod tables;

use std::path::PathBuf;

use config::{apply_override, validate_table, ConfigError, ConfigErrors, ExperimentKind};
use manifest::{Manifest, Status};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A resolved command line: the subcommand picks the experiment kind.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub kind: ExperimentKind,
    pub config_path: PathBuf,
    /// `--set key=value` overrides, in order.
    pub sets: Vec<String>,
    pub out_dir: PathBuf,
    /// `--seed N`, shorthand for `--set run.seed=N` applied last.
    pub seed: Option<u64>,
}

/// Run one experiment end to end and return the process exit code.
pub fn execute(inv: &Invocation) -> i32 {
    match run(inv) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn run(inv: &Invocation) -> Result<i32, String> {
    std::fs::create_dir_all(&inv.out_dir)
        .map_err(|e| format!("creating {}: {e}", inv.out_dir.display()))?;
    let text = std::fs::read_to_string(&inv.config_path)
        .map_err(|e| format!("reading {}: {e}", inv.config_path.display()))?;

    let mut overrides: Vec<String> = Vec::new();
    let mut table = match text.parse::<toml::Table>() {
        Ok(t) => t,
        Err(e) => {
            let errs =
                ConfigErrors(vec![ConfigError { path: String::new(), message: e.to_string() }]);
            return finish_config_error(inv, &toml::Table::new(), &overrides, errs);
        }
    };

    let mut override_errors = Vec::new();
    for spec in &inv.sets {
        match apply_override(&mut table, spec) {
            Ok(()) => overrides.push(spec.clone()),
            Err(e) => override_errors.push(e),
        }
    }
    if let Some(seed) = inv.seed {
        let spec = format!("run.seed={seed}");
        match apply_override(&mut table, &spec) {
            Ok(()) => overrides.push(spec),
            Err(e) => override_errors.push(e),
        }
    }
    if !override_errors.is_empty() {
        return finish_config_error(inv, &table, &overrides, ConfigErrors(override_errors));
    }

    let mut cfg = match validate_table(&table) {
        Ok(c) => c,
        Err(e) => return finish_config_error(inv, &table, &overrides, e),
    };
    let mut errors = Vec::new();
    if let Some(k) = cfg.kind {
        if k != inv.kind {
            errors.push(ConfigError {
                path: "kind".into(),
                message: format!("config names the {k} experiment but {} was invoked", inv.kind),
            });
        }
    }
    errors.extend(experiments::kind_requirements(inv.kind, &cfg));
    if !errors.is_empty() {
        return finish_config_error(inv, &table, &overrides, ConfigErrors(errors));
    }
    // Pin the kind so the manifest's embedded config is self-contained.
    cfg.kind = Some(inv.kind);

    let base = Manifest {
        kind: inv.kind.name().into(),
        seed: cfg.run.seed,
        toolkit_version: TOOLKIT_VERSION.into(),
        config: config::to_json(&cfg),
        config_toml: config::to_toml_string(&cfg),
        overrides,
        artifacts: vec![],
        status: Status::Error,
        summary: String::new(),
        errors: vec![],
    };
    let manifest = match experiments::run_experiment(inv.kind, &cfg, &inv.out_dir) {
        Ok(res) => Manifest {
            status: if res.passed { Status::Pass } else { Status::CheckFailed },
            summary: res.summary,
            artifacts: res.artifacts,
            ..base
        },
        Err(e) => Manifest {
            summary: "experiment aborted".into(),
            errors: vec![e.to_string()],
            ..base
        },
    };
    manifest.write(&inv.out_dir).map_err(|e| format!("writing manifest: {e}"))?;
    match manifest.status {
        Status::Error => eprintln!("{}: error: {}", manifest.kind, manifest.errors.join("; ")),
        s => println!("{}: {} ({})", manifest.kind, s.name(), manifest.summary),
    }
    Ok(manifest.status.exit_code())
}

/// Configuration problems still leave a manifest behind (with the raw,
/// override-applied tree in place of a resolved config).
fn finish_config_error(
    inv: &Invocation,
    table: &toml::Table,
    overrides: &[String],
    errs: ConfigErrors,
) -> Result<i32, String> {
    for e in &errs.0 {
        eprintln!("config error: {e}");
    }
    let manifest = Manifest {
        kind: inv.kind.name().into(),
        seed: table_seed(table),
        toolkit_version: TOOLKIT_VERSION.into(),
        config: config::raw_table_to_json(table),
        config_toml: toml::to_string(table).unwrap_or_default(),
        overrides: overrides.to_vec(),
        artifacts: vec![],
        status: Status::Error,
        summary: "configuration invalid".into(),
        errors: errs.0.iter().map(|e| e.to_string()).collect(),
    };
    manifest.write(&inv.out_dir).map_err(|e| format!("writing manifest: {e}"))?;
    Ok(Status::Error.exit_code())
}

fn table_seed(t: &toml::Table) -> u64 {
    t.get("run")
        .and_then(|r| r.as_table())
        .and_then(|r| r.get("seed"))
        .and_then(|s| s.as_integer())
        .map(|v| v.max(0) as u64)
        .unwrap_or(0)
}
