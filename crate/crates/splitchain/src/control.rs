//! Steering primitives on single triad orbits.
//!
//! A triad variant restricted to its three designated coordinates is the
//! quadratic system x1' = g1 x2 x3, x2' = g2 x1 x3, x3' = g3 x1 x2 whose
//! orbits are the intersections of a sphere (unweighted invariant E) with an
//! ellipsoid (norm-weighted invariant); away from the separatrix these
//! intersection curves are closed and the motion on them is periodic. The
//! routines here compute times realizing three controllability moves:
//!
//! * [`zeroing_time`]: reach a point of the orbit where a chosen coordinate
//!   vanishes while the other two keep their signs;
//! * [`activation_time`]: make a vanishing coordinate (and everything else)
//!   nonzero without flipping the signs of the initially active ones;
//! * [`pair_rotation_time`]: for triads with a same-norm pair (one vanishing
//!   coupling coefficient) the live pair rotates rigidly, so any target
//!   phase is reached in closed form with the third coordinate untouched.
//!
//! Times are found by sampling the orbit and refining bracketed events with
//! bisection plus a safeguarded secant step, to 1e-12 in time.

use thiserror::Error;

use crate::euler2d::{variant_flow_3d, Triad, TriadVariant};
use crate::splitting::FlowError;

/// Relative threshold separating a designated coordinate from zero.
const ZERO_TOL_REL: f64 = 1e-12;
/// Relative margin on the orbit-degeneracy conditions; orbits closer than
/// this to a separatrix or pole are rejected instead of chased.
const DEG_MARGIN: f64 = 1e-9;
/// Integrator tolerance for orbit scans; tight because detected times feed
/// 1e-10-level acceptance checks downstream.
const CONTROL_TOL: f64 = 1e-14;
/// Root refinement resolution in time.
const TIME_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ControlError {
    /// The orbit hypothesis fails: the state sits on (or within margin of)
    /// a pole/separatrix level set where the requested coordinate cannot be
    /// zeroed along a periodic orbit.
    #[error("degenerate orbit: {0}")]
    DegenerateOrbit(String),
    /// Fewer than two designated coordinates are active, so the triad
    /// dynamics cannot move the state.
    #[error("insufficient activity: {zero_count} of 3 designated coordinates are zero")]
    InsufficientActivity { zero_count: usize },
    /// Pair rotation requested with the fixed coordinate at zero (the
    /// rotation rate is proportional to it).
    #[error("zero rotation rate: the fixed coordinate vanishes")]
    ZeroRotationRate,
    /// The triad/variant does not support the requested operation
    /// (e.g. zeroing needs three distinct mode norms, pair rotation needs
    /// exactly one vanishing coefficient).
    #[error("unsuitable triad: {0}")]
    UnsuitableTriad(String),
    /// Scanning one full period (plus safety cap) found no admissible event.
    #[error("root search failed: {0}")]
    RootSearchFailed(String),
    #[error("flow evaluation failed: {0}")]
    Flow(#[from] FlowError),
}

/// A triad variant prepared for orbit queries: designated coordinate slots,
/// rates, squared mode norms, and the norm-ascending ordering metadata that
/// defines "middle" and "largest" targets.
#[derive(Debug, Clone)]
pub struct TriadOrbitQuery {
    triad: Triad,
    variant: TriadVariant,
    slots: [usize; 3],
    rates: [f64; 3],
    norms2: [f64; 3],
    /// Positions 0..3 (designated order j,k,l) sorted by ascending |mode|^2.
    order: [usize; 3],
}

/// Which designated coordinate a zeroing move should annihilate, named by
/// the norm rank of its mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroingTarget {
    MiddleNorm,
    LargestNorm,
}

impl TriadOrbitQuery {
    pub fn new(triad: &Triad, variant: TriadVariant) -> Self {
        let (slots, rates) = triad.designated(variant);
        let norms2 = triad.norms2();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| norms2[a].partial_cmp(&norms2[b]).unwrap());
        TriadOrbitQuery { triad: *triad, variant, slots, rates, norms2, order }
    }

    pub fn triad(&self) -> &Triad {
        &self.triad
    }

    pub fn variant(&self) -> TriadVariant {
        self.variant
    }

    pub fn slots(&self) -> [usize; 3] {
        self.slots
    }

    /// Designated coordinate values in (j, k, l) slot order.
    pub fn gather(&self, q: &[f64]) -> [f64; 3] {
        [q[self.slots[0]], q[self.slots[1]], q[self.slots[2]]]
    }

    /// True when the three mode norms are pairwise distinct (required for
    /// middle/largest targets to be well defined).
    pub fn has_distinct_norms(&self) -> bool {
        let n = &self.norms2;
        n[self.order[0]] < n[self.order[1]] && n[self.order[1]] < n[self.order[2]]
    }

    /// Signed relative margin of the orbit-degeneracy condition
    /// (E - |k|^2 * weighted) / E for the middle-norm mode k. Zero margin
    /// means the orbit runs through the pole; middle-zeroing is rejected
    /// when |margin| <= 1e-9.
    pub fn degeneracy_margin(&self, q: &[f64]) -> f64 {
        let (e, w) = partial_invariants(q, self);
        if e == 0.0 {
            return 0.0;
        }
        (e - self.norms2[self.order[1]] * w) / e
    }

    fn flow(&self, x: [f64; 3], t: f64) -> Result<[f64; 3], ControlError> {
        Ok(variant_flow_3d(&self.rates, &self.norms2, x, t, CONTROL_TOL)?)
    }
}

/// The two conserved quantities of the triad system restricted to the
/// designated coordinates: the plain sum of squares and the norm-weighted
/// sum (weights 1/|mode|^2), in that order.
pub fn partial_invariants(q: &[f64], query: &TriadOrbitQuery) -> (f64, f64) {
    let x = query.gather(q);
    invariants_3d(&x, &query.norms2)
}

fn invariants_3d(x: &[f64; 3], norms2: &[f64; 3]) -> (f64, f64) {
    let e = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let w = x[0] * x[0] / norms2[0] + x[1] * x[1] / norms2[1] + x[2] * x[2] / norms2[2];
    (e, w)
}

/// Characteristic angular rate of the triad system at scale `scale`.
fn rate_scale(rates: &[f64; 3], scale: f64) -> f64 {
    rates.iter().fold(0.0f64, |m, &g| m.max(g.abs())) * scale
}

/// Duration t >= 0 such that flowing the variant for t drives the chosen
/// designated coordinate below 1e-9 * sqrt(E) while the other two keep
/// their initial signs. The time is located by bracketing a sign change of
/// the target coordinate along one orbit period.
pub fn zeroing_time(
    q: &[f64],
    query: &TriadOrbitQuery,
    target: ZeroingTarget,
) -> Result<f64, ControlError> {
    let x0 = query.gather(q);
    let (e, w) = invariants_3d(&x0, &query.norms2);
    if e == 0.0 {
        return Ok(0.0); // everything, including the target, is already zero
    }
    if !query.has_distinct_norms() {
        return Err(ControlError::UnsuitableTriad(
            "zeroing requires three pairwise distinct mode norms".into(),
        ));
    }
    let scale = e.sqrt();
    let target_pos = match target {
        ZeroingTarget::MiddleNorm => query.order[1],
        ZeroingTarget::LargestNorm => query.order[2],
    };
    if x0[target_pos].abs() <= ZERO_TOL_REL * scale {
        return Ok(0.0);
    }
    let zero_count = x0.iter().filter(|v| v.abs() <= ZERO_TOL_REL * scale).count();
    if zero_count >= 2 {
        return Err(ControlError::InsufficientActivity { zero_count });
    }
    let n_sorted = [
        query.norms2[query.order[0]],
        query.norms2[query.order[1]],
        query.norms2[query.order[2]],
    ];
    match target {
        ZeroingTarget::MiddleNorm => {
            // The orbit through a middle-coordinate zero exists on both
            // sides of the separatrix; only the separatrix itself (orbit
            // through the middle pole) is excluded.
            if (e - n_sorted[1] * w).abs() <= DEG_MARGIN * e {
                return Err(ControlError::DegenerateOrbit(format!(
                    "state within {DEG_MARGIN:.0e} of the separatrix level; the orbit limits \
                     onto the middle pole instead of crossing zero"
                )));
            }
        }
        ZeroingTarget::LargestNorm => {
            // The largest coordinate reaches zero only on orbits encircling
            // the smallest-norm axis, strictly between the two level sets.
            if e - n_sorted[0] * w <= DEG_MARGIN * e || n_sorted[1] * w - e <= DEG_MARGIN * e {
                return Err(ControlError::DegenerateOrbit(format!(
                    "largest-coordinate zeroing needs the invariants strictly between the \
                     smallest-axis and separatrix levels (relative margin {DEG_MARGIN:.0e})"
                )));
            }
        }
    }
    // Signs the two surviving coordinates must keep (zero survivors carry
    // no sign constraint).
    let survivors: Vec<(usize, f64)> = (0..3)
        .filter(|&i| i != target_pos)
        .filter(|&i| x0[i].abs() > ZERO_TOL_REL * scale)
        .map(|i| (i, x0[i].signum()))
        .collect();

    let omega = rate_scale(&query.rates, scale);
    let dt = 0.1 / omega;
    let t_cap = 4000.0 * std::f64::consts::TAU / omega;
    let mut t = 0.0;
    let mut x = x0;
    while t < t_cap {
        let x_next = query.flow(x, dt)?;
        let (f_lo, f_hi) = (x[target_pos], x_next[target_pos]);
        if f_lo * f_hi < 0.0 || f_hi == 0.0 {
            let (dt_root, y) = refine_sign_change(query, &x, target_pos, dt, f_lo, f_hi)?;
            let tau = t + dt_root;
            let ok_signs = survivors
                .iter()
                .all(|&(i, s)| y[i].signum() == s && y[i].abs() > ZERO_TOL_REL * scale);
            if y[target_pos].abs() < 1e-9 * scale && ok_signs {
                return Ok(tau);
            }
        }
        t += dt;
        x = x_next;
    }
    Err(ControlError::RootSearchFailed(format!(
        "no sign-preserving zero of the target coordinate within t <= {t_cap:.3e}"
    )))
}

/// Refine a bracketed sign change of coordinate `pos` of the flow started
/// at `x_lo`, over the window [0, dt]. Returns (time offset, state there).
fn refine_sign_change(
    query: &TriadOrbitQuery,
    x_lo: &[f64; 3],
    pos: usize,
    dt: f64,
    f_lo: f64,
    f_hi: f64,
) -> Result<(f64, [f64; 3]), ControlError> {
    let (mut lo, mut hi) = (0.0f64, dt);
    let (mut flo, mut fhi) = (f_lo, f_hi);
    let mut best = (hi, query.flow(*x_lo, hi)?);
    for _ in 0..200 {
        if hi - lo <= TIME_TOL {
            break;
        }
        // Secant guess, safeguarded into the middle 90% of the bracket.
        let mut mid = if fhi != flo { lo - flo * (hi - lo) / (fhi - flo) } else { 0.5 * (lo + hi) };
        let margin = 0.05 * (hi - lo);
        if !(mid > lo + margin && mid < hi - margin) {
            mid = 0.5 * (lo + hi);
        }
        let y = query.flow(*x_lo, mid)?;
        let fm = y[pos];
        best = (mid, y);
        if fm == 0.0 {
            break;
        }
        if flo * fm < 0.0 {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    Ok(best)
}

/// Small duration t > 0 after which all three designated coordinates exceed
/// 1e-6 * sqrt(E) in magnitude, with the signs of the initially nonzero
/// coordinates preserved. Returns 0 when all three are already active.
pub fn activation_time(q: &[f64], query: &TriadOrbitQuery) -> Result<f64, ControlError> {
    let x0 = query.gather(q);
    let (e, _) = invariants_3d(&x0, &query.norms2);
    if e == 0.0 {
        return Err(ControlError::InsufficientActivity { zero_count: 3 });
    }
    let scale = e.sqrt();
    let zeros: Vec<usize> =
        (0..3).filter(|&i| x0[i].abs() <= ZERO_TOL_REL * scale).collect();
    match zeros.len() {
        0 => return Ok(0.0),
        1 => {}
        zc => return Err(ControlError::InsufficientActivity { zero_count: zc }),
    }
    let z = zeros[0];
    if query.rates[z] == 0.0 {
        return Err(ControlError::UnsuitableTriad(
            "the coupling coefficient driving the inactive coordinate vanishes".into(),
        ));
    }
    let (p, r) = match z {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let level = 1e-6 * scale;
    let omega = rate_scale(&query.rates, scale);
    // Initial derivative of the inactive coordinate; aim a little past the
    // activity level and adjust geometrically from there.
    let d = query.rates[z] * x0[p] * x0[r];
    let mut tau = (3.0 * level / d.abs()).min(0.05 / omega);
    for _ in 0..200 {
        let y = query.flow(x0, tau)?;
        let active = y.iter().all(|v| v.abs() > level);
        let signs_ok =
            y[p].signum() == x0[p].signum() && y[r].signum() == x0[r].signum();
        if active && signs_ok {
            return Ok(tau);
        }
        if !signs_ok || tau > 10.0 / omega {
            tau *= 0.5;
        } else {
            tau *= 1.8;
        }
    }
    Err(ControlError::RootSearchFailed(
        "no activation time found; the active pair may be too close to zero".into(),
    ))
}

/// For a triad with exactly one vanishing coefficient (a same-norm pair),
/// the two live designated coordinates rotate rigidly at angular rate
/// rho = g_r * x_z (z the fixed slot, r the later live slot) while x_z is
/// exactly fixed. Returns the least t >= 0 placing the live pair at
/// absolute phase `theta` (radians, atan2 convention).
pub fn pair_rotation_time(
    q: &[f64],
    query: &TriadOrbitQuery,
    theta: f64,
) -> Result<f64, ControlError> {
    let g = query.rates;
    let zeros: Vec<usize> = (0..3).filter(|&i| g[i] == 0.0).collect();
    if zeros.len() != 1 {
        return Err(ControlError::UnsuitableTriad(format!(
            "pair rotation needs exactly one vanishing coefficient, found {}",
            zeros.len()
        )));
    }
    let z = zeros[0];
    let (p, r) = match z {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let x = query.gather(q);
    if x[z] == 0.0 {
        return Err(ControlError::ZeroRotationRate);
    }
    // Counterclockwise phase rate in the (x_p, x_r) plane.
    let rho = g[r] * x[z];
    let theta0 = x[r].atan2(x[p]);
    let period = std::f64::consts::TAU / rho.abs();
    let t = ((theta - theta0) / rho).rem_euclid(period);
    // rem_euclid can return the period itself when the remainder rounds up.
    Ok(if t >= period { 0.0 } else { t })
}

/// Period of the (closed) orbit through `q`. Rotation-case triads get the
/// closed form; generic triads are scanned for the first return to the
/// starting point with positively aligned velocity, refined to 1e-12.
pub fn orbit_period(q: &[f64], query: &TriadOrbitQuery) -> Result<f64, ControlError> {
    let x0 = query.gather(q);
    let (e, _) = invariants_3d(&x0, &query.norms2);
    if e == 0.0 {
        return Err(ControlError::InsufficientActivity { zero_count: 3 });
    }
    let scale = e.sqrt();
    let g = query.rates;
    let zero_rates = g.iter().filter(|&&gi| gi == 0.0).count();
    if zero_rates >= 2 {
        return Err(ControlError::UnsuitableTriad(
            "all coupling coefficients vanish; the flow is the identity".into(),
        ));
    }
    if zero_rates == 1 {
        let z = (0..3).find(|&i| g[i] == 0.0).unwrap();
        let r = if z == 2 { 1 } else { 2 };
        if x0[z] == 0.0 {
            return Err(ControlError::ZeroRotationRate);
        }
        return Ok(std::f64::consts::TAU / (g[r] * x0[z]).abs());
    }
    let zero_count = x0.iter().filter(|v| v.abs() <= ZERO_TOL_REL * scale).count();
    if zero_count >= 2 {
        return Err(ControlError::InsufficientActivity { zero_count });
    }
    if query.degeneracy_margin(q).abs() <= DEG_MARGIN {
        return Err(ControlError::DegenerateOrbit(
            "separatrix orbits have no finite period".into(),
        ));
    }
    let f0 = triad_rhs(&g, &x0);
    let omega = rate_scale(&g, scale);
    let dt = 0.1 / omega;
    let t_cap = 4000.0 * std::f64::consts::TAU / omega;
    let return_tol = 1e-10 * scale.max(1.0);
    let dist = |y: &[f64; 3]| {
        ((y[0] - x0[0]).powi(2) + (y[1] - x0[1]).powi(2) + (y[2] - x0[2]).powi(2)).sqrt()
    };
    // Rolling window of the last three samples: (time, state, distance).
    let mut prev2 = (0.0, x0, 0.0);
    let mut prev1 = {
        let y = query.flow(x0, dt)?;
        (dt, y, dist(&y))
    };
    let mut t = dt;
    while t < t_cap {
        let x_next = query.flow(prev1.1, dt)?;
        t += dt;
        let cur = (t, x_next, dist(&x_next));
        // Local minimum of the distance to start at the middle sample.
        if prev2.0 > 0.0 && prev1.2 <= prev2.2 && prev1.2 <= cur.2 && prev1.2 < 0.5 * scale {
            let (off, y) = refine_min_distance(query, &prev2.1, &x0, 2.0 * dt)?;
            let fy = triad_rhs(&g, &y);
            let aligned = fy[0] * f0[0] + fy[1] * f0[1] + fy[2] * f0[2] > 0.0;
            if dist(&y) < return_tol && aligned {
                return Ok(prev2.0 + off);
            }
        }
        prev2 = prev1;
        prev1 = cur;
    }
    Err(ControlError::RootSearchFailed(format!(
        "no return to the starting point within t <= {t_cap:.3e}"
    )))
}

fn triad_rhs(g: &[f64; 3], x: &[f64; 3]) -> [f64; 3] {
    [g[0] * x[1] * x[2], g[1] * x[0] * x[2], g[2] * x[0] * x[1]]
}

/// Golden-section minimization of the distance to `target` for the flow
/// started at `anchor`, over the window [0, span].
fn refine_min_distance(
    query: &TriadOrbitQuery,
    anchor: &[f64; 3],
    target: &[f64; 3],
    span: f64,
) -> Result<(f64, [f64; 3]), ControlError> {
    let phi = 0.5 * (3.0 - 5.0f64.sqrt());
    let (mut lo, mut hi) = (0.0f64, span);
    let d2 = |y: &[f64; 3]| {
        (y[0] - target[0]).powi(2) + (y[1] - target[1]).powi(2) + (y[2] - target[2]).powi(2)
    };
    let mut a = lo + phi * (hi - lo);
    let mut b = hi - phi * (hi - lo);
    let mut ya = query.flow(*anchor, a)?;
    let mut yb = query.flow(*anchor, b)?;
    let (mut fa, mut fb) = (d2(&ya), d2(&yb));
    for _ in 0..120 {
        if hi - lo <= TIME_TOL {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            yb = ya;
            a = lo + phi * (hi - lo);
            ya = query.flow(*anchor, a)?;
            fa = d2(&ya);
        } else {
            lo = a;
            a = b;
            fa = fb;
            ya = yb;
            b = hi - phi * (hi - lo);
            yb = query.flow(*anchor, b)?;
            fb = d2(&yb);
        }
    }
    if fa <= fb {
        Ok((a, ya))
    } else {
        Ok((b, yb))
    }
}
