//! WebAssembly bindings for the browser demo page.
//!
//! Three interactive operations, each taking and returning JSON text so the
//! page needs no binding glue beyond `JSON.parse`. Errors come back as
//! `{"error": "..."}` rather than exceptions, which keeps the functions
//! directly callable (and unit-testable) on native targets too.

use splitchain::control::{zeroing_time, TriadOrbitQuery, ZeroingTarget};
use splitchain::diagnostics::{rank_tests, ModelSpec};
use splitchain::euler2d::{
    self, enumerate_triads, EulerSpec, Lattice, Triad, TriadVariant, VARIANTS,
};
use splitchain::lorenz96::LorenzSpec;
use splitchain::splitting::{run_chain, substream, ChainRunConfig};
use rand::Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::wasm_bindgen;

fn err(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn get_u64(v: &Value, key: &str, default: u64) -> Result<u64, String> {
    match v.get(key) {
        None => Ok(default),
        Some(x) => x
            .as_u64()
            .ok_or_else(|| format!("{key} must be a nonnegative integer")),
    }
}

fn get_f64(v: &Value, key: &str, default: f64) -> Result<f64, String> {
    match v.get(key) {
        None => Ok(default),
        Some(x) => x.as_f64().ok_or_else(|| format!("{key} must be a number")),
    }
}

/// Demo models are described by compact JSON: `model` is "lorenz96" or
/// "euler2d", `n` is the cyclic dimension or spectral truncation, and an
/// optional `nu` + `f_mag` pair adds constant forcing of that magnitude on
/// every coordinate (which activates every interaction).
fn parse_model(v: &Value) -> Result<ModelSpec, String> {
    let kind = v
        .get("model")
        .and_then(Value::as_str)
        .ok_or("model must be \"lorenz96\" or \"euler2d\"")?;
    let n = get_u64(v, "n", 6)?;
    let nu = get_f64(v, "nu", 0.0)?;
    let f_mag = get_f64(v, "f_mag", 0.0)?;
    let forced = nu > 0.0;
    if forced && f_mag == 0.0 {
        return Err("forcing needs both nu > 0 and f_mag != 0".into());
    }
    let spec = match kind {
        "lorenz96" => {
            let n = n as usize;
            if n < 4 {
                return Err("n must be at least 4".into());
            }
            ModelSpec::Lorenz96(if forced {
                LorenzSpec::forced(n, nu, vec![f_mag; n])
            } else {
                LorenzSpec::conservative(n)
            })
        }
        "euler2d" => {
            let n = n as u32;
            if n < 2 {
                return Err("n must be at least 2".into());
            }
            let dim = EulerSpec::conservative(n).dim();
            ModelSpec::Euler2d(if forced {
                EulerSpec::forced(n, nu, vec![f_mag; dim], euler2d::Dissipation::Laplacian)
            } else {
                EulerSpec::conservative(n)
            })
        }
        other => return Err(format!("unknown model {other:?}")),
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

fn demo_state(model: &ModelSpec, seed: u64) -> Vec<f64> {
    let mut rng = substream(seed, 0xDEC0);
    (0..model.dim()).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

fn energy_of(model: &ModelSpec, lat: Option<&Lattice>, x: &[f64]) -> f64 {
    match (model, lat) {
        (ModelSpec::Euler2d(_), Some(lat)) => euler2d::energy(lat, x),
        _ => x.iter().map(|v| v * v).sum(),
    }
}

fn simulate_chain_impl(spec_json: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(spec_json).map_err(|e| e.to_string())?;
    let model = parse_model(&v)?;
    let h = get_f64(&v, "h", 0.2)?;
    let cycles = get_u64(&v, "cycles", 400)?.min(20_000);
    let seed = get_u64(&v, "seed", 1)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(format!("h must be positive, got {h}"));
    }
    let scheme = model.build_scheme(h).map_err(|e| e.to_string())?;
    let x0 = demo_state(&model, seed);
    let traj = run_chain(&scheme, &x0, &ChainRunConfig { cycles, seed, record_every: 1 })
        .map_err(|e| e.to_string())?;

    let lat = match &model {
        ModelSpec::Euler2d(s) => Some(Lattice::new(s.n_max)),
        _ => None,
    };
    let shown = model.dim().min(3);
    let coords: Vec<Vec<f64>> =
        (0..shown).map(|i| traj.states.iter().map(|s| s[i]).collect()).collect();
    let labels: Vec<String> = match &model {
        ModelSpec::Lorenz96(_) => (0..shown).map(|i| format!("x{i}")).collect(),
        ModelSpec::Euler2d(_) => {
            let lat = lat.as_ref().unwrap();
            let m = lat.modes()[0];
            vec![
                format!("a({},{})", m.j1, m.j2),
                format!("b({},{})", m.j1, m.j2),
                format!("a({},{})", lat.modes()[1].j1, lat.modes()[1].j2),
            ][..shown]
                .to_vec()
        }
    };
    let energy: Vec<f64> =
        traj.states.iter().map(|s| energy_of(&model, lat.as_ref(), s)).collect();
    Ok(json!({
        "cycle": traj.cycle_indices,
        "energy": energy,
        "coords": coords,
        "labels": labels,
        "conservative": !model.is_forced(),
    })
    .to_string())
}

/// Run the splitting chain from a seeded random start and return the
/// recorded trajectory (first coordinates plus the energy trace) as JSON.
#[wasm_bindgen]
pub fn simulate_chain(spec_json: &str) -> String {
    simulate_chain_impl(spec_json).unwrap_or_else(err)
}

/// The demo's fixed control stage: the triad with squared mode norms
/// (1, 4, 5) in designated order, so the page's x/y/z inputs line up with
/// smallest/middle/largest norm.
fn demo_triad() -> (Lattice, Triad) {
    let lat = Lattice::new(2);
    let triad = *enumerate_triads(&lat)
        .iter()
        .find(|t| t.is_admissible() && t.norms2() == [1.0, 4.0, 5.0])
        .expect("the 2-level lattice has a norm-(1,4,5) admissible triad");
    (lat, triad)
}

fn variant_from(name: &str) -> Result<TriadVariant, String> {
    VARIANTS
        .into_iter()
        .find(|v| v.tag() == name)
        .ok_or_else(|| format!("unknown variant {name:?} (one of: aaa, abb, bab, bba)"))
}

fn triad_zeroing_impl(input: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(input).map_err(|e| e.to_string())?;
    let x: Vec<f64> = v
        .get("x")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_f64).collect())
        .ok_or("x must be an array of three numbers")?;
    if x.len() != 3 || x.iter().any(|v| !v.is_finite()) {
        return Err("x must be three finite numbers".into());
    }
    let variant = variant_from(v.get("variant").and_then(Value::as_str).unwrap_or("aaa"))?;
    let target = match v.get("target").and_then(Value::as_str).unwrap_or("middle") {
        "middle" => ZeroingTarget::MiddleNorm,
        "largest" => ZeroingTarget::LargestNorm,
        other => return Err(format!("unknown target {other:?} (middle or largest)")),
    };

    let (lat, triad) = demo_triad();
    let query = TriadOrbitQuery::new(&triad, variant);
    let slots = query.slots();
    let mut q = vec![0.0; lat.dim()];
    for (i, &s) in slots.iter().enumerate() {
        q[s] = x[i];
    }
    // The documented control errors (degenerate orbit, insufficient
    // activity) surface here and flow back to the page as {"error": ...}.
    let tau = zeroing_time(&q, &query, target).map_err(|e| e.to_string())?;

    let norms = triad.norms2();
    let e: f64 = x.iter().map(|v| v * v).sum();
    let w: f64 = x.iter().zip(&norms).map(|(v, n)| v * v / n).sum();

    // Sample the controlled flow a little past the zeroing time so the
    // crossing is visible; short sub-steps keep the solver comfortable.
    let steps = 240usize;
    let horizon = if tau > 0.0 { 1.2 * tau } else { 1.0 };
    let dt = horizon / steps as f64;
    let mut orbit = Vec::with_capacity(steps + 1);
    let mut y = q.clone();
    orbit.push(query.gather(&y).to_vec());
    for _ in 0..steps {
        y = euler2d::triad_flow(&y, &triad, variant, dt).map_err(|e| e.to_string())?;
        orbit.push(query.gather(&y).to_vec());
    }
    let mut z = q;
    let chunks = 1 + (tau / 0.5) as usize;
    for _ in 0..chunks {
        z = euler2d::triad_flow(&z, &triad, variant, tau / chunks as f64)
            .map_err(|e| e.to_string())?;
    }

    let mid = {
        let mut ord = [0usize, 1, 2];
        ord.sort_by(|&a, &b| norms[a].partial_cmp(&norms[b]).unwrap());
        ord[1]
    };
    let target_pos = match target {
        ZeroingTarget::MiddleNorm => mid,
        ZeroingTarget::LargestNorm => {
            let mut ord = [0usize, 1, 2];
            ord.sort_by(|&a, &b| norms[a].partial_cmp(&norms[b]).unwrap());
            ord[2]
        }
    };
    Ok(json!({
        "tau": tau,
        "orbit": orbit,
        "final": query.gather(&z).to_vec(),
        "target_pos": target_pos,
        "invariants": { "e": e, "w": w },
        "norms2": norms.to_vec(),
    })
    .to_string())
}

/// Compute the flow time that annihilates the requested triad coordinate,
/// plus a sampled orbit for drawing. Input: `{"x":[..,..,..], "variant":
/// "aaa", "target":"middle"}`.
#[wasm_bindgen]
pub fn triad_zeroing(input: &str) -> String {
    triad_zeroing_impl(input).unwrap_or_else(err)
}

fn rank_certificate_impl(spec_json: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(spec_json).map_err(|e| e.to_string())?;
    let model = parse_model(&v)?;
    let seed = get_u64(&v, "seed", 3)?;
    let mut rng = substream(seed, 0xDEC1);
    let point: Vec<f64> = (0..model.dim())
        .map(|_| {
            let mag = rng.gen_range(0.5..2.0);
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let reports = rank_tests(&model, &point).map_err(|e| e.to_string())?;
    let rows: Vec<Value> = reports
        .iter()
        .map(|r| {
            json!({
                "matrix": r.matrix,
                "rows": r.rows,
                "cols": r.cols,
                "rank": r.rank,
                "clearance": r.threshold_clearance(),
                "gap": r.gap,
                "singular_values": r.singular_values,
            })
        })
        .collect();
    Ok(json!({ "point": point, "reports": rows }).to_string())
}

/// Evaluate the spanning-rank certificates at a seeded random generic point
/// and return every matrix's rank, singular values, and margins as JSON.
#[wasm_bindgen]
pub fn rank_certificate(spec_json: &str) -> String {
    rank_certificate_impl(spec_json).unwrap_or_else(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        let v: Value = serde_json::from_str(s).unwrap();
        assert!(v.get("error").is_none(), "unexpected error: {v}");
        v
    }

    #[test]
    fn simulate_conserves_energy_for_conservative_models() {
        let out = parse(&simulate_chain(
            r#"{"model":"lorenz96","n":6,"h":0.3,"cycles":200,"seed":4}"#,
        ));
        let e = out["energy"].as_array().unwrap();
        assert_eq!(e.len(), 201);
        let e0 = e[0].as_f64().unwrap();
        let drift = e
            .iter()
            .map(|v| (v.as_f64().unwrap() - e0).abs() / e0)
            .fold(0.0f64, f64::max);
        assert!(drift < 1e-10, "energy drift {drift}");
        assert_eq!(out["conservative"], true);
        assert_eq!(out["labels"][0], "x0");
    }

    #[test]
    fn simulate_euler_reports_spectral_labels() {
        let out = parse(&simulate_chain(
            r#"{"model":"euler2d","n":2,"h":0.2,"cycles":50,"seed":9}"#,
        ));
        assert_eq!(out["labels"][0], "a(1,0)");
        assert_eq!(out["coords"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn zeroing_returns_orbit_and_annihilates_target() {
        let out = parse(&triad_zeroing(
            r#"{"x":[0.9,-0.7,1.1],"variant":"bab","target":"middle"}"#,
        ));
        let tau = out["tau"].as_f64().unwrap();
        assert!(tau >= 0.0);
        let fin = out["final"].as_array().unwrap();
        let pos = out["target_pos"].as_u64().unwrap() as usize;
        let e = out["invariants"]["e"].as_f64().unwrap();
        assert!(fin[pos].as_f64().unwrap().abs() < 1e-9 * e.sqrt());
        assert_eq!(out["orbit"].as_array().unwrap().len(), 241);
    }

    #[test]
    fn zeroing_reports_documented_errors() {
        // Of the three one-hot states, exactly one has its only activity on
        // the middle-norm coordinate: annihilating it is impossible (the
        // other two are trivially done, tau = 0).
        let mut errors = 0;
        let mut trivial = 0;
        for hot in 0..3 {
            let mut x = [0.0; 3];
            x[hot] = 0.5;
            let out: Value = serde_json::from_str(&triad_zeroing(&format!(
                r#"{{"x":{x:?},"variant":"aaa","target":"middle"}}"#
            )))
            .unwrap();
            match out.get("error") {
                Some(e) => {
                    assert!(e.as_str().unwrap().contains("activity"), "unexpected: {e}");
                    errors += 1;
                }
                None => {
                    assert_eq!(out["tau"].as_f64().unwrap(), 0.0);
                    trivial += 1;
                }
            }
        }
        assert_eq!((errors, trivial), (1, 2));
    }

    #[test]
    fn rank_certificate_names_every_matrix() {
        let out = parse(&rank_certificate(r#"{"model":"lorenz96","n":6,"seed":3}"#));
        let reports = out["reports"].as_array().unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0]["matrix"], "lorenz-rotation-span");
        assert_eq!(reports[0]["rank"], 5);
        let forced = parse(&rank_certificate(
            r#"{"model":"lorenz96","n":6,"nu":0.5,"f_mag":8.0,"seed":3}"#,
        ));
        assert_eq!(forced["reports"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn malformed_input_is_an_error_value_not_a_panic() {
        let out: Value = serde_json::from_str(&simulate_chain("not json")).unwrap();
        assert!(out.get("error").is_some());
        let out: Value =
            serde_json::from_str(&simulate_chain(r#"{"model":"heat","n":6}"#)).unwrap();
        assert!(out["error"].as_str().unwrap().contains("heat"));
    }
}
