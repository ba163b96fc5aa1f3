//! High-accuracy deterministic reference integrator.
//!
//! Dormand-Prince 5(4) embedded pair with FSAL and adaptive step control.
//! Used as the ground truth Psi_t for the convergence experiments and for
//! cross-checking individual splitting flows, so its defaults (1e-10 rel /
//! 1e-12 abs) sit far below every error the experiments measure.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid integrator config: {0}")]
    BadConfig(String),
    #[error("step budget exhausted after {steps} steps at t = {t}")]
    MaxSteps { steps: usize, t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { rel_tol: 1e-10, abs_tol: 1e-12, max_steps: 10_000_000 }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), OracleError> {
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(tol > 0.0 && tol <= 1e-3) {
                return Err(OracleError::BadConfig(format!(
                    "{name} must lie in (0, 1e-3], got {tol}"
                )));
            }
        }
        if self.max_steps == 0 {
            return Err(OracleError::BadConfig("max_steps must be >= 1".into()));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau. Row 7 doubles as the 5th-order weights
// (FSAL); E holds b5 - b4 for the embedded error estimate.
const A2: [f64; 1] = [1.0 / 5.0];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] =
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const A7: [f64; 6] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrate x' = rhs(x) from `x0` over duration `t` (t >= 0).
pub fn integrate<F>(rhs: F, x0: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>, OracleError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut sink = |_: f64, _: &[f64]| {};
    integrate_observed(rhs, x0, t, cfg, &mut sink)
}

/// As [`integrate`], invoking `observe(t, x)` after every accepted step
/// (including the initial state at t = 0 and the endpoint).
pub fn integrate_observed<F>(
    mut rhs: F,
    x0: &[f64],
    t: f64,
    cfg: &IntegratorConfig,
    observe: &mut dyn FnMut(f64, &[f64]),
) -> Result<Vec<f64>, OracleError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    cfg.validate()?;
    let n = x0.len();
    let mut x = x0.to_vec();
    observe(0.0, &x);
    if t == 0.0 {
        return Ok(x);
    }
    assert!(t > 0.0, "duration must be nonnegative");

    let mut k: [Vec<f64>; 7] = Default::default();
    for ki in k.iter_mut() {
        *ki = vec![0.0; n];
    }
    let mut xs = vec![0.0; n];
    let mut xe = vec![0.0; n];

    rhs(&x, &mut k[0]);

    // Initial step from the velocity scale; refined by the controller.
    let mut scale0: f64 = 0.0;
    let mut scale1: f64 = 0.0;
    for i in 0..n {
        let sc = cfg.abs_tol + cfg.rel_tol * x[i].abs();
        scale0 = scale0.max((x[i] / sc).abs());
        scale1 = scale1.max((k[0][i] / sc).abs());
    }
    let mut h = if scale1 > 0.0 { (0.01 * scale0.max(1.0) / scale1).min(t) } else { t * 1e-3 };
    h = h.max(t * 1e-12);

    let mut time = 0.0;
    let mut steps = 0usize;
    while time < t {
        if steps >= cfg.max_steps {
            return Err(OracleError::MaxSteps { steps, t: time });
        }
        steps += 1;
        let mut last = false;
        if time + h >= t {
            h = t - time;
            last = true;
        }

        let stage = |xs: &mut [f64], x: &[f64], k: &[Vec<f64>], coefs: &[f64], h: f64| {
            for i in 0..xs.len() {
                let mut acc = 0.0;
                for (c, kc) in coefs.iter().zip(k) {
                    acc += c * kc[i];
                }
                xs[i] = x[i] + h * acc;
            }
        };

        stage(&mut xs, &x, &k[..1], &A2, h);
        rhs(&xs, &mut k[1]);
        stage(&mut xs, &x, &k[..2], &A3, h);
        rhs(&xs, &mut k[2]);
        stage(&mut xs, &x, &k[..3], &A4, h);
        rhs(&xs, &mut k[3]);
        stage(&mut xs, &x, &k[..4], &A5, h);
        rhs(&xs, &mut k[4]);
        stage(&mut xs, &x, &k[..5], &A6, h);
        rhs(&xs, &mut k[5]);
        stage(&mut xe, &x, &k[..6], &A7, h); // 5th-order solution (FSAL stage point)
        rhs(&xe, &mut k[6]);

        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut e = 0.0;
            for (c, kc) in E.iter().zip(&k) {
                e += c * kc[i];
            }
            let sc = cfg.abs_tol + cfg.rel_tol * x[i].abs().max(xe[i].abs());
            err += (h * e / sc) * (h * e / sc);
        }
        err = (err / n as f64).sqrt();

        if err <= 1.0 {
            time += h;
            x.copy_from_slice(&xe);
            if !x.iter().all(|v| v.is_finite()) {
                return Err(OracleError::NonFinite { t: time });
            }
            k.swap(0, 6); // FSAL: the last stage derivative seeds the next step
            observe(time, &x);
            if last {
                break;
            }
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        h *= factor.clamp(0.2, 5.0);
        if !h.is_finite() || h <= 0.0 {
            return Err(OracleError::NonFinite { t: time });
        }
    }
    Ok(x)
}

/// Integrate with default tolerances.
pub fn integrate_default<F>(rhs: F, x0: &[f64], t: f64) -> Result<Vec<f64>, OracleError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    integrate(rhs, x0, t, &IntegratorConfig::default())
}
