//! The eight experiment kinds. Each one runs the corresponding library
//! routine, writes its result tables into the output directory, and reports
//! whether its built-in checks held.
//!
//! CSV schemas (column orders are frozen):
//!
//! - `simulate` -> `trajectory.csv`: cycle, then one column per coordinate
//!   (`x0..` for the cyclic model, `a(j1,j2)`/`b(j1,j2)` per lattice mode).
//! - `weak-converge` -> `weak_errors.csv`: observable, h, error, std_err,
//!   used_in_fit; `weak_slopes.csv`: observable, reference, slope,
//!   inconclusive.
//! - `pathwise-converge` -> `pathwise_errors.csv`: m, error.
//! - `ergodic` -> `ergodic_moments.csv`: coord, second_mean, second_se,
//!   fourth_mean, fourth_se, ref_second, ref_fourth_mean, ref_fourth_se
//!   (reference cells empty when no closed-form reference exists).
//! - `ranks` -> `ranks.csv`: matrix, point, rows, cols, rank, gap,
//!   clearance, sv0..sv5 (the six largest singular values, short matrices
//!   padded with empty cells).
//! - `bracket` -> `bracket_residuals.csv`: triad, variant, point, residual.
//! - `lyapunov` -> `lyapunov_drift.csv`: radius, mean_after, std_err, bound.
//! - `control-demo` -> `control_ops.csv`: op, index, variant, tau, residual.
//!
//! `run.samples` means Monte Carlo sample count for the statistical kinds
//! and evaluation-point count for the algebraic ones (ranks, bracket,
//! control-demo), where a few hundred points is plenty.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use splitchain::control::{
    pair_rotation_time, zeroing_time, ControlError, TriadOrbitQuery, ZeroingTarget,
};
use splitchain::diagnostics::{
    bracket_check, ergodic_moment_test, lyapunov_check, pathwise_study, rank_tests,
    standard_observables, weak_error_study, ConvergenceReport, DiagnosticsError, ModelSpec,
};
use splitchain::euler2d::{enumerate_triads, triad_flow, Lattice, Triad, TriadVariant, VARIANTS};
use splitchain::splitting::{run_chain, substream, ChainError, ChainRunConfig, FlowError};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, OrderPolicyKind, TimeLawKind};
use crate::tables::{num, opt_num, write_csv};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Chain(#[from] ChainError),
    #[error("{0}")]
    Diagnostics(#[from] DiagnosticsError),
    #[error("{0}")]
    Flow(#[from] FlowError),
    #[error("{0}")]
    Control(#[from] ControlError),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
    #[error("writing results: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Msg(String),
}

/// Outcome of a completed run: whether the kind's built-in checks held,
/// a one-line summary, and the files written.
#[derive(Debug)]
pub struct KindResult {
    pub passed: bool,
    pub summary: String,
    pub artifacts: Vec<String>,
}

/// Semantic requirements a kind places on the config, checked before any
/// work starts so mismatches surface as field-level config errors.
pub fn kind_requirements(kind: ExperimentKind, cfg: &ExperimentConfig) -> Vec<ConfigError> {
    let mut errors = Vec::new();
    let mut need = |path: &str, message: String| {
        errors.push(ConfigError { path: path.into(), message });
    };
    match kind {
        ExperimentKind::Ergodic => {
            if cfg.model.is_forced() {
                need("model", "ergodic moment comparison needs a conservative model".into());
            }
        }
        ExperimentKind::Bracket => {
            if !matches!(&cfg.model, ModelSpec::Euler2d(s) if s.forcing.is_some()) {
                need("model", "bracket check needs a forced euler2d model".into());
            }
        }
        ExperimentKind::Lyapunov => {
            if !cfg.model.is_forced() {
                need("model", "dissipative drift check needs a forced model".into());
            }
        }
        ExperimentKind::ControlDemo => {
            if !matches!(&cfg.model, ModelSpec::Euler2d(_)) {
                need("model.type", "control demo drives triad flows; use euler2d".into());
            }
        }
        _ => {}
    }
    if kind != ExperimentKind::Simulate {
        if cfg.scheme.time_law != TimeLawKind::Exponential {
            need(
                "scheme.time_law",
                format!("the {kind} experiment always draws exponential durations; only simulate accepts other laws"),
            );
        }
        if cfg.scheme.order_policy != OrderPolicyKind::RandomPermutation {
            need(
                "scheme.order_policy",
                format!("the {kind} experiment always permutes the field order; only simulate accepts fixed order"),
            );
        }
    }
    errors
}

pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    out: &Path,
) -> Result<KindResult, RunError> {
    match kind {
        ExperimentKind::Simulate => simulate(cfg, out),
        ExperimentKind::WeakConverge => weak_converge(cfg, out),
        ExperimentKind::PathwiseConverge => pathwise_converge(cfg, out),
        ExperimentKind::Ergodic => ergodic(cfg, out),
        ExperimentKind::Ranks => ranks(cfg, out),
        ExperimentKind::Bracket => bracket(cfg, out),
        ExperimentKind::Lyapunov => lyapunov(cfg, out),
        ExperimentKind::ControlDemo => control_demo(cfg, out),
    }
}

fn coord_names(model: &ModelSpec) -> Vec<String> {
    match model {
        ModelSpec::Lorenz96(s) => (0..s.n).map(|i| format!("x{i}")).collect(),
        ModelSpec::Euler2d(s) => {
            let lat = Lattice::new(s.n_max);
            let mut names = Vec::with_capacity(lat.dim());
            for m in lat.modes() {
                names.push(format!("a({},{})", m.j1, m.j2));
                names.push(format!("b({},{})", m.j1, m.j2));
            }
            names
        }
    }
}

fn well_scaled(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let mag = rng.gen_range(0.5..2.0);
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

fn triad_label(t: &Triad) -> String {
    format!(
        "({},{})+({},{})->({},{})",
        t.j.j1, t.j.j2, t.k.j1, t.k.j2, t.l.j1, t.l.j2
    )
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<KindResult, RunError> {
    let scheme = cfg
        .model
        .build_scheme(cfg.scheme.h)?
        .with_time_law(cfg.scheme.time_law.to_spec(cfg.scheme.h))?
        .with_order_policy(cfg.scheme.order_policy.to_policy());
    let record_every = (cfg.run.cycles / 1000).max(1);
    let traj = run_chain(
        &scheme,
        &cfg.x0,
        &ChainRunConfig { cycles: cfg.run.cycles, seed: cfg.run.seed, record_every },
    )?;

    let names = coord_names(&cfg.model);
    let mut header: Vec<&str> = vec!["cycle"];
    header.extend(names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = traj
        .states
        .iter()
        .zip(&traj.cycle_indices)
        .map(|(state, &c)| {
            let mut row = Vec::with_capacity(state.len() + 1);
            row.push(c.to_string());
            row.extend(state.iter().map(|&v| num(v)));
            row
        })
        .collect();
    write_csv(&out.join("trajectory.csv"), &header, &rows)?;

    Ok(KindResult {
        passed: true,
        summary: format!(
            "{} cycles, {} states recorded (every {} cycles)",
            cfg.run.cycles,
            rows.len(),
            record_every
        ),
        artifacts: vec!["trajectory.csv".into()],
    })
}

fn convergence_tables(rep: &ConvergenceReport) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let mut errors = Vec::new();
    let mut slopes = Vec::new();
    for s in &rep.series {
        for p in &s.points {
            errors.push(vec![
                s.observable.clone(),
                num(p.param),
                num(p.error),
                num(p.std_err),
                p.used_in_fit.to_string(),
            ]);
        }
        slopes.push(vec![
            s.observable.clone(),
            num(s.reference),
            opt_num(s.slope),
            s.inconclusive.to_string(),
        ]);
    }
    (errors, slopes)
}

fn weak_converge(cfg: &ExperimentConfig, out: &Path) -> Result<KindResult, RunError> {
    let h = cfg.scheme.h;
    let t = h * cfg.run.cycles as f64;
    let grid = [h, h / 2.0, h / 4.0, h / 8.0];
    let obs = standard_observables();
    let rep =
        weak_error_study(&cfg.model, &obs, &cfg.x0, t, &grid, cfg.run.samples, cfg.run.seed)?;

    let (err_rows, slope_rows) = convergence_tables(&rep);
    write_csv(
        &out.join("weak_errors.csv"),
        &["observable", "h", "error", "std_err", "used_in_fit"],
        &err_rows,
    )?;
    write_csv(
        &out.join("weak_slopes.csv"),
        &["observable", "reference", "slope", "inconclusive"],
        &slope_rows,
    )?;

    let mut passed = true;
    let mut parts = Vec::new();
    for s in &rep.series {
        match (s.inconclusive, s.slope) {
            (false, Some(sl)) if (0.8..=2.2).contains(&sl) => {
                parts.push(format!("{}={sl:.2}", s.observable));
            }
            (_, sl) => {
                passed = false;
                parts.push(format!(
                    "{}={} ({})",
                    s.observable,
                    sl.map(|v| format!("{v:.2}")).unwrap_or_else(|| "none".into()),
                    if s.inconclusive { "inconclusive" } else { "out of range" }
                ));
            }
        }
    }
    Ok(KindResult {
        passed,
        summary: format!("weak slopes over h in {grid:?}: {}", parts.join(", ")),
        artifacts: vec!["weak_errors.csv".into(), "weak_slopes.csv".into()],
    })
}

fn pathwise_converge(cfg: &ExperimentConfig, out: &Path) -> Result<KindResult, RunError> {
    let t = cfg.scheme.h * cfg.run.cycles as f64;
    let m_list = [4u64, 8, 16, 32];
    let rep = pathwise_study(&cfg.model, &cfg.x0, t, &m_list, cfg.run.seed)?;
    let series = &rep.series[0];
    let rows: Vec<Vec<String>> =
        series.points.iter().map(|p| vec![num(p.param), num(p.error)]).collect();
    write_csv(&out.join("pathwise_errors.csv"), &["m", "error"], &rows)?;

    let errs: Vec<f64> = series.points.iter().map(|p| p.error).collect();
    let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let quartered = errs.last().unwrap() <= &(errs[0] / 4.0);
    Ok(KindResult {
        passed: decreasing && quartered,
        summary: format!(
            "endpoint distance over m in {m_list:?}: {} (slope {}), monotone {decreasing}, total drop {:.1}x",
            errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(" -> "),
            series.slope.map(|v| format!("{v:.2}")).unwrap_or_else(|| "none".into()),
            errs[0] / errs.last().unwrap()
        ),
        artifacts: vec!["pathwise_errors.csv".into()],
    })
}

fn ergodic(cfg: &ExperimentConfig, out: &Path) -> Result<KindResult, RunError> {
    let rep = ergodic_moment_test(
        &cfg.model,
        &cfg.x0,
        cfg.run.cycles,
        cfg.run.burn_in,
        cfg.scheme.h,
        cfg.run.seed,
    )?;
    let names = coord_names(&cfg.model);
    let mut rows = Vec::with_capacity(rep.coords);
    let mut worst_z: f64 = 0.0;
    let mut passed = true;
    for i in 0..rep.coords {
        let (s, f) = (&rep.second[i], &rep.fourth[i]);
        rows.push(vec![
            names[i].clone(),
            num(s.mean),
            num(s.std_err),
            num(f.mean),
            num(f.std_err),
            opt_num(rep.reference_second),
            opt_num(rep.reference_fourth.as_ref().map(|r| r.mean)),
            opt_num(rep.reference_fourth.as_ref().map(|r| r.std_err)),
        ]);
        if let Some(r2) = rep.reference_second {
            let z = (s.mean - r2).abs() / s.std_err;
            worst_z = worst_z.max(z);
            passed &= z <= 4.0;
        }
        if let Some(r4) = &rep.reference_fourth {
            let se = (f.std_err * f.std_err + r4.std_err * r4.std_err).sqrt();
            let z = (f.mean - r4.mean).abs() / se;
            worst_z = worst_z.max(z);
            passed &= z <= 4.0;
        }
    }
    write_csv(
        &out.join("ergodic_moments.csv"),
        &[
            "coord",
            "second_mean",
            "second_se",
            "fourth_mean",
            "fourth_se",
            "ref_second",
            "ref_fourth_mean",
            "ref_fourth_se",
        ],
        &rows,
    )?;
    let summary = if rep.reference_second.is_some() {
        format!(
            "{} coords, {} cycles ({} burn-in): worst reference deviation {worst_z:.2} SE",
            rep.coords, rep.cycles, rep.burn_in
        )
    } else {
        format!(
            "{} coords, {} cycles ({} burn-in): moments recorded (no closed-form reference)",
            rep.coords, rep.cycles, rep.burn_in
        )
    };
    Ok(KindResult { passed, summary, artifacts: vec!["ergodic_moments.csv".into()] })
}

fn ranks(cfg: &ExperimentConfig, out: &Path) -> Result<KindResult, RunError> {
    let mut rng = substream(cfg.run.seed, 0);
    let dim = cfg.model.dim();
    let mut rows = Vec::new();
    let mut rank_by_name: BTreeMap<String, usize> = BTreeMap::new();
    let mut consistent = true;
    let mut min_clearance = f64::INFINITY;
    let mut min_gap = f64::INFINITY;
    let mut matrices = 0usize;
    for point in 0..cfg.run.samples {
        let x = well_scaled(&mut rng, dim);
        for rep in rank_tests(&cfg.model, &x)? {
            matrices += 1;
            min_clearance = min_clearance.min(rep.threshold_clearance());
            if let Some(g) = rep.gap {
                min_gap = min_gap.min(g);
            }
            consistent &= *rank_by_name.entry(rep.matrix.clone()).or_insert(rep.rank)
                == rep.rank;
            let mut row = vec![
                rep.matrix.clone(),
                point.to_string(),
                rep.rows.to_string(),
                rep.cols.to_string(),
                rep.rank.to_string(),
                opt_num(rep.gap),
                num(rep.threshold_clearance()),
            ];
            for i in 0..6 {
                row.push(opt_num(rep.singular_values.get(i).copied()));
            }
            rows.push(row);
        }
    }
    write_csv(
        &out.join("ranks.csv"),
        &[
            "matrix", "point", "rows", "cols", "rank", "gap", "clearance", "sv0", "sv1", "sv2",
            "sv3", "sv4", "sv5",
        ],
        &rows,
    )?;
    let sharp = min_clearance.min(min_gap);
    let ranks_list = rank_by_name
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(KindResult {
        passed: consistent && sharp >= 1e3,
        summary: format!(
            "{matrices} matrices over {} points: ranks {ranks_list}; rank stable across points: {consistent}; min threshold clearance {min_clearance:.2e}, min spectral gap {min_gap:.2e}",
            cfg.run.samples
        ),
        artifacts: vec!["ranks.csv".into()],
    })
}

fn bracket(cfg: &ExperimentConfig, out: &Path) -> Result<KindResult, RunError> {
    let spec = match &cfg.model {
        ModelSpec::Euler2d(s) => s,
        _ => unreachable!("kind requirements enforce a spectral model"),
    };
    let lat = Lattice::new(spec.n_max);
    let triads: Vec<Triad> =
        enumerate_triads(&lat).into_iter().filter(|t| t.is_admissible()).collect();
    let mut rng = substream(cfg.run.seed, 0);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for point in 0..cfg.run.samples {
        let x = well_scaled(&mut rng, lat.dim());
        for triad in &triads {
            for variant in VARIANTS {
                let residual = bracket_check(spec, triad, variant, &x)?;
                worst = worst.max(residual);
                rows.push(vec![
                    triad_label(triad),
                    variant.tag().to_string(),
                    point.to_string(),
                    num(residual),
                ]);
            }
        }
    }
    write_csv(
        &out.join("bracket_residuals.csv"),
        &["triad", "variant", "point", "residual"],
        &rows,
    )?;
    Ok(KindResult {
        passed: worst < 1e-12,
        summary: format!(
            "max analytic-vs-commutator residual {worst:.2e} over {} checks ({} triads x 4 variants x {} points)",
            rows.len(),
            triads.len(),
            cfg.run.samples
        ),
        artifacts: vec!["bracket_residuals.csv".into()],
    })
}

fn lyapunov(cfg: &ExperimentConfig, out: &Path) -> Result<KindResult, RunError> {
    let radii = [1.0, 10.0, 100.0];
    let rep = lyapunov_check(
        &cfg.model,
        &cfg.x0,
        cfg.scheme.h,
        cfg.run.cycles,
        cfg.run.seed,
        &radii,
        cfg.run.samples,
    )?;
    let rows: Vec<Vec<String>> = rep
        .drift
        .iter()
        .map(|d| vec![num(d.radius), num(d.mean_after), num(d.std_err), num(d.bound)])
        .collect();
    write_csv(
        &out.join("lyapunov_drift.csv"),
        &["radius", "mean_after", "std_err", "bound"],
        &rows,
    )?;
    let drift_ok = rep
        .drift
        .iter()
        .all(|d| d.mean_after <= d.bound + 3.0 * d.std_err);
    Ok(KindResult {
        passed: rep.pass && drift_ok,
        summary: format!(
            "pathwise bound held over {} cycles (worst margin {:.2e}); one-step drift gamma={:.4}, K={:.4}, within 3 SE at radii {radii:?}: {drift_ok}",
            rep.cycles, rep.worst_margin, rep.gamma, rep.k_const
        ),
        artifacts: vec!["lyapunov_drift.csv".into()],
    })
}

fn control_demo(cfg: &ExperimentConfig, out: &Path) -> Result<KindResult, RunError> {
    let spec = match &cfg.model {
        ModelSpec::Euler2d(s) => s,
        _ => unreachable!("kind requirements enforce a spectral model"),
    };
    let lat = Lattice::new(spec.n_max);
    let all = enumerate_triads(&lat);
    let zero_triad = *all
        .iter()
        .find(|t| {
            let n = t.norms2();
            t.is_admissible() && n[0] != n[1] && n[1] != n[2] && n[0] != n[2]
        })
        .ok_or_else(|| RunError::Msg("no distinct-norm admissible triad on this lattice".into()))?;
    let rot_triad = *all
        .iter()
        .find(|t| {
            let (_, rates) = t.designated(TriadVariant::Aaa);
            rates.iter().filter(|&&r| r == 0.0).count() == 1
        })
        .ok_or_else(|| RunError::Msg("no equal-norm triad on this lattice".into()))?;

    // Position (in designated j,k,l order) of the middle mode by norm; the
    // zeroing target annihilates that coordinate.
    let mid = {
        let n = zero_triad.norms2();
        let mut ord = [0usize, 1, 2];
        ord.sort_by(|&a, &b| n[a].partial_cmp(&n[b]).unwrap());
        ord[1]
    };

    let mut rng = substream(cfg.run.seed, 0);
    let mut rows = Vec::new();
    let mut worst_zero: f64 = 0.0;
    let mut worst_angle: f64 = 0.0;
    let mut frozen_ok = true;
    let samples = cfg.run.samples;
    let mut skipped = 0u64;

    let mut accepted = 0u64;
    while accepted < samples {
        if skipped > 100 * samples {
            return Err(RunError::Msg(
                "resample budget exhausted: nearly all sampled states sit on degenerate orbits"
                    .into(),
            ));
        }
        let variant = VARIANTS[(accepted % 4) as usize];
        let query = TriadOrbitQuery::new(&zero_triad, variant);
        let q = well_scaled(&mut rng, lat.dim());
        let tau = match zeroing_time(&q, &query, ZeroingTarget::MiddleNorm) {
            Ok(tau) => tau,
            Err(ControlError::DegenerateOrbit(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        // Verify in sub-period chunks; one adaptive solve over a large
        // fraction of the orbit would exhaust the flow's step budget.
        let chunks = 1 + (tau / 0.5) as usize;
        let mut y = q.clone();
        for _ in 0..chunks {
            y = triad_flow(&y, &zero_triad, variant, tau / chunks as f64)?;
        }
        let x0 = query.gather(&q);
        let xf = query.gather(&y);
        let scale = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let residual = xf[mid].abs() / scale;
        worst_zero = worst_zero.max(residual);
        rows.push(vec![
            "zeroing".into(),
            accepted.to_string(),
            variant.tag().to_string(),
            num(tau),
            num(residual),
        ]);
        accepted += 1;
    }

    let rot_query = TriadOrbitQuery::new(&rot_triad, TriadVariant::Aaa);
    let slots = rot_query.slots();
    // The vanishing designated rate freezes position z; the rotation lives
    // in the plane of the remaining two positions (ascending order), with
    // the phase measured as atan2(x_r, x_p).
    let z = {
        let (_, rates) = rot_triad.designated(TriadVariant::Aaa);
        (0..3).find(|&i| rates[i] == 0.0).expect("selected for one vanishing rate")
    };
    let (p, r) = match z {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    for i in 0..samples {
        let q = well_scaled(&mut rng, lat.dim());
        let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let tau = pair_rotation_time(&q, &rot_query, theta)?;
        let y = triad_flow(&q, &rot_triad, TriadVariant::Aaa, tau)?;
        frozen_ok &= y[slots[z]].to_bits() == q[slots[z]].to_bits();
        let phi = y[slots[r]].atan2(y[slots[p]]);
        let diff = ((phi - theta + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU)
            - std::f64::consts::PI)
            .abs();
        worst_angle = worst_angle.max(diff);
        rows.push(vec![
            "rotation".into(),
            i.to_string(),
            TriadVariant::Aaa.tag().to_string(),
            num(tau),
            num(diff),
        ]);
    }

    write_csv(
        &out.join("control_ops.csv"),
        &["op", "index", "variant", "tau", "residual"],
        &rows,
    )?;
    Ok(KindResult {
        passed: worst_zero < 1e-9 && worst_angle < 1e-10 && frozen_ok,
        summary: format!(
            "{samples} zeroings on triad {} (worst residual {worst_zero:.1e} of scale, {skipped} degenerate resamples); {samples} pair rotations on triad {} (worst angle error {worst_angle:.1e}, frozen coordinate untouched: {frozen_ok})",
            triad_label(&zero_triad),
            triad_label(&rot_triad)
        ),
        artifacts: vec!["control_ops.csv".into()],
    })
}
