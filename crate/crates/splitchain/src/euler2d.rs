//! Spectrally truncated 2D vorticity dynamics in real Fourier coordinates.
//!
//! Modes live on the upper half-plane lattice (j2 > 0, or j2 = 0 and j1 > 0)
//! intersected with the box max(|j1|,|j2|) <= N; the conjugate-symmetric
//! lower half is implied. The state stores (a_j, b_j) = (Re q_j, Im q_j) per
//! mode, dimension 4N(N+1).
//!
//! The quadratic nonlinearity couples modes in triads j + k = l through the
//! coefficients
//!
//!   C_{kl} = <k, l_perp> / (4 pi) * (1/|k|^2 - 1/|l|^2),  l_perp = (l2, -l1),
//!
//! which satisfy, per triad, C_{kl} + C_{jl} - C_{jk} = 0 and
//! C_{kl}/|j|^2 + C_{jl}/|k|^2 - C_{jk}/|l|^2 = 0. Those two identities make
//! every triad field conserve both the enstrophy-type sum of squares and the
//! energy-type weighted sum, globally and restricted to the triad.
//!
//! Each triad carries four field variants (one per way of distributing real
//! and imaginary parts over the three slots); summed over all enumerated
//! triads the variants reproduce the full right-hand side exactly, which is
//! the correctness contract for the enumeration.

use std::collections::{BTreeSet, HashMap};

use crate::splitting::{
    ChainError, FlowError, FlowPrimitive, OrderPolicy, SplittingScheme, State, TimeLawSpec,
};

pub type EulerState = State;

/// Lattice site in the upper-half-plane representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    pub j1: i32,
    pub j2: i32,
}

impl ModeIndex {
    pub fn new(j1: i32, j2: i32) -> Self {
        ModeIndex { j1, j2 }
    }

    pub fn norm2(&self) -> f64 {
        (self.j1 as f64) * (self.j1 as f64) + (self.j2 as f64) * (self.j2 as f64)
    }

    pub fn is_zero(&self) -> bool {
        self.j1 == 0 && self.j2 == 0
    }

    /// Membership in the upper-half-plane index set.
    pub fn in_upper_half(&self) -> bool {
        self.j2 > 0 || (self.j2 == 0 && self.j1 > 0)
    }

    pub fn in_box(&self, n_max: u32) -> bool {
        self.j1.unsigned_abs() <= n_max && self.j2.unsigned_abs() <= n_max
    }

    pub fn add(&self, o: ModeIndex) -> ModeIndex {
        ModeIndex::new(self.j1 + o.j1, self.j2 + o.j2)
    }

    pub fn sub(&self, o: ModeIndex) -> ModeIndex {
        ModeIndex::new(self.j1 - o.j1, self.j2 - o.j2)
    }

    pub fn neg(&self) -> ModeIndex {
        ModeIndex::new(-self.j1, -self.j2)
    }

    /// Upper-half-plane representative of +/- self (self must be nonzero).
    pub fn canonical(&self) -> ModeIndex {
        if self.in_upper_half() {
            *self
        } else {
            self.neg()
        }
    }
}

/// All modes of the box-truncated upper-half lattice, sorted by (j2, j1).
/// Size 2N(N+1).
pub fn lattice(n_max: u32) -> Vec<ModeIndex> {
    assert!(n_max >= 2, "truncation must satisfy N >= 2");
    let n = n_max as i32;
    let mut modes = Vec::with_capacity((2 * n_max * (n_max + 1)) as usize);
    for j1 in 1..=n {
        modes.push(ModeIndex::new(j1, 0));
    }
    for j2 in 1..=n {
        for j1 in -n..=n {
            modes.push(ModeIndex::new(j1, j2));
        }
    }
    modes
}

/// Lattice with position lookup. Coordinate layout of a state vector:
/// slot 2i holds a_{modes[i]}, slot 2i+1 holds b_{modes[i]}.
#[derive(Debug, Clone)]
pub struct Lattice {
    n_max: u32,
    modes: Vec<ModeIndex>,
    pos: HashMap<ModeIndex, usize>,
}

impl Lattice {
    pub fn new(n_max: u32) -> Self {
        let modes = lattice(n_max);
        let pos = modes.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        Lattice { n_max, modes, pos }
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn position(&self, m: ModeIndex) -> Option<usize> {
        self.pos.get(&m).copied()
    }

    pub fn a_slot(&self, m: ModeIndex) -> Option<usize> {
        self.position(m).map(|p| 2 * p)
    }

    pub fn b_slot(&self, m: ModeIndex) -> Option<usize> {
        self.position(m).map(|p| 2 * p + 1)
    }
}

/// Interaction coefficient C_{kl}. Symmetric in (k, l); zero when k and l
/// are collinear or have equal norms. Both arguments must be nonzero.
pub fn coeff(k: ModeIndex, l: ModeIndex) -> f64 {
    assert!(!k.is_zero() && !l.is_zero(), "coefficient needs nonzero indices");
    let cross = (k.j1 as f64) * (l.j2 as f64) - (k.j2 as f64) * (l.j1 as f64);
    cross / (4.0 * std::f64::consts::PI) * (1.0 / k.norm2() - 1.0 / l.norm2())
}

/// Dissipation operator shape: Laplacian weights each mode by |j|^2,
/// Ekman drag weights uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dissipation {
    Laplacian,
    Ekman,
}

impl Dissipation {
    pub fn weight(&self, m: ModeIndex) -> f64 {
        match self {
            Dissipation::Laplacian => m.norm2(),
            Dissipation::Ekman => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerForcing {
    pub nu: f64,
    /// Forcing over the (a_j, b_j) coordinate layout, length = dim.
    pub f: Vec<f64>,
    pub dissipation: Dissipation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EulerSpec {
    pub n_max: u32,
    pub forcing: Option<EulerForcing>,
}

impl EulerSpec {
    pub fn conservative(n_max: u32) -> Self {
        EulerSpec { n_max, forcing: None }
    }

    pub fn forced(n_max: u32, nu: f64, f: Vec<f64>, dissipation: Dissipation) -> Self {
        EulerSpec { n_max, forcing: Some(EulerForcing { nu, f, dissipation }) }
    }

    pub fn dim(&self) -> usize {
        (4 * self.n_max * (self.n_max + 1)) as usize
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.n_max < 2 {
            return Err(ChainError::InvalidConfig(format!(
                "truncation must satisfy N >= 2, got {}",
                self.n_max
            )));
        }
        if let Some(fc) = &self.forcing {
            if !(fc.nu > 0.0 && fc.nu.is_finite()) {
                return Err(ChainError::InvalidConfig(format!(
                    "forced model needs nu > 0, got {}",
                    fc.nu
                )));
            }
            if fc.f.len() != self.dim() {
                return Err(ChainError::InvalidConfig(format!(
                    "forcing length {} does not match dimension {}",
                    fc.f.len(),
                    self.dim()
                )));
            }
            if fc.f.iter().all(|&v| v == 0.0) {
                return Err(ChainError::InvalidConfig("forced model needs F != 0".into()));
            }
        }
        Ok(())
    }

    /// Equilibrium of the dissipative field, componentwise F_j / (nu lambda_j).
    pub fn dissipative_equilibrium(&self, lat: &Lattice) -> Option<Vec<f64>> {
        let fc = self.forcing.as_ref()?;
        let mut q = vec![0.0; self.dim()];
        for (i, &m) in lat.modes().iter().enumerate() {
            let r = fc.nu * fc.dissipation.weight(m);
            q[2 * i] = fc.f[2 * i] / r;
            q[2 * i + 1] = fc.f[2 * i + 1] / r;
        }
        Some(q)
    }
}

/// Enstrophy-type invariant: sum of squared coordinates.
pub fn enstrophy(q: &[f64]) -> f64 {
    q.iter().map(|v| v * v).sum()
}

/// Energy-type invariant: squared coordinates weighted by 1/|j|^2.
pub fn energy(lat: &Lattice, q: &[f64]) -> f64 {
    let mut e = 0.0;
    for (i, m) in lat.modes().iter().enumerate() {
        e += (q[2 * i] * q[2 * i] + q[2 * i + 1] * q[2 * i + 1]) / m.norm2();
    }
    e
}

/// Full right-hand side of the truncated dynamics at `q`.
///
/// Convention pinned here (the one the triad enumeration reproduces):
/// for each mode j, the sum-type contributions run over every mode k with
/// l = j + k in the lattice, and the difference-type contributions run over
/// unordered pairs {k, l} with k + l = j, each pair counted once.
pub fn full_rhs(spec: &EulerSpec, lat: &Lattice, q: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; q.len()];
    full_rhs_into(spec, lat, q, &mut v);
    v
}

/// Allocation-free variant of [`full_rhs`] for tight oracle loops.
pub fn full_rhs_into(spec: &EulerSpec, lat: &Lattice, q: &[f64], v: &mut [f64]) {
    assert_eq!(q.len(), lat.dim(), "state length must match lattice dimension");
    assert_eq!(v.len(), q.len());
    let modes = lat.modes();
    v.fill(0.0);
    for (pj, &j) in modes.iter().enumerate() {
        let mut da = 0.0;
        let mut db = 0.0;
        for (pk, &k) in modes.iter().enumerate() {
            // Sum type: j + k = l.
            if let Some(pl) = lat.position(j.add(k)) {
                let c = coeff(k, j.add(k));
                let (ak, bk) = (q[2 * pk], q[2 * pk + 1]);
                let (al, bl) = (q[2 * pl], q[2 * pl + 1]);
                da += c * (ak * al + bk * bl);
                db += c * (ak * bl - bk * al);
            }
            // Difference type: k + l = j, unordered (position-ordered) pairs.
            let l = j.sub(k);
            if let Some(pl) = lat.position(l) {
                if pl > pk {
                    let c = coeff(k, l);
                    let (ak, bk) = (q[2 * pk], q[2 * pk + 1]);
                    let (al, bl) = (q[2 * pl], q[2 * pl + 1]);
                    da += c * (bk * bl - ak * al);
                    db -= c * (ak * bl + bk * al);
                }
            }
        }
        v[2 * pj] = da;
        v[2 * pj + 1] = db;
    }
    if let Some(fc) = &spec.forcing {
        for (i, &m) in modes.iter().enumerate() {
            let r = fc.nu * fc.dissipation.weight(m);
            v[2 * i] += -r * q[2 * i] + fc.f[2 * i];
            v[2 * i + 1] += -r * q[2 * i + 1] + fc.f[2 * i + 1];
        }
    }
}

/// Exact per-coordinate affine flow of the dissipative field.
pub fn dissipative_flow(spec: &EulerSpec, lat: &Lattice, q: &[f64], t: f64) -> EulerState {
    let fc = spec.forcing.as_ref().expect("dissipative flow needs a forced spec");
    let mut out = q.to_vec();
    dissipative_flow_in_place(fc, lat, &mut out, t);
    out
}

fn dissipative_flow_in_place(fc: &EulerForcing, lat: &Lattice, q: &mut [f64], t: f64) {
    for (i, &m) in lat.modes().iter().enumerate() {
        let r = fc.nu * fc.dissipation.weight(m);
        let decay = (-r * t).exp();
        let gain = -(-r * t).exp_m1() / r;
        q[2 * i] = decay * q[2 * i] + gain * fc.f[2 * i];
        q[2 * i + 1] = decay * q[2 * i + 1] + gain * fc.f[2 * i + 1];
    }
}

/// One interacting index triple j + k = l with its coefficients and the
/// positions of its modes in the lattice order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triad {
    pub j: ModeIndex,
    pub k: ModeIndex,
    pub l: ModeIndex,
    pub c_jk: f64,
    pub c_jl: f64,
    pub c_kl: f64,
    pub pj: usize,
    pub pk: usize,
    pub pl: usize,
}

/// The four ways one triad distributes real/imaginary parts, named by the
/// coordinate type in the (j, k, l) slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TriadVariant {
    Aaa,
    Abb,
    Bab,
    Bba,
}

pub const VARIANTS: [TriadVariant; 4] = [
    TriadVariant::Aaa,
    TriadVariant::Abb,
    TriadVariant::Bab,
    TriadVariant::Bba,
];

impl TriadVariant {
    pub fn tag(&self) -> &'static str {
        match self {
            TriadVariant::Aaa => "aaa",
            TriadVariant::Abb => "abb",
            TriadVariant::Bab => "bab",
            TriadVariant::Bba => "bba",
        }
    }
}

impl Triad {
    /// Designated coordinate slots and their rates: the variant's dynamics is
    ///   x1' = g1 x2 x3,  x2' = g2 x1 x3,  x3' = g3 x1 x2
    /// on the returned slots, with g1 + g2 + g3 = 0 and
    /// g1/|j|^2 + g2/|k|^2 + g3/|l|^2 = 0.
    pub fn designated(&self, v: TriadVariant) -> ([usize; 3], [f64; 3]) {
        let (aj, bj) = (2 * self.pj, 2 * self.pj + 1);
        let (ak, bk) = (2 * self.pk, 2 * self.pk + 1);
        let (al, bl) = (2 * self.pl, 2 * self.pl + 1);
        match v {
            TriadVariant::Aaa => ([aj, ak, al], [self.c_kl, self.c_jl, -self.c_jk]),
            TriadVariant::Abb => ([aj, bk, bl], [self.c_kl, self.c_jl, -self.c_jk]),
            TriadVariant::Bab => ([bj, ak, bl], [self.c_kl, self.c_jl, -self.c_jk]),
            TriadVariant::Bba => ([bj, bk, al], [-self.c_kl, -self.c_jl, self.c_jk]),
        }
    }

    /// Squared mode norms in slot order (j, k, l).
    pub fn norms2(&self) -> [f64; 3] {
        [self.j.norm2(), self.k.norm2(), self.l.norm2()]
    }

    /// All three coupling coefficients nonzero (the zero count per triad is
    /// 0, 1, or 3, never 2, by the sum identity).
    pub fn is_admissible(&self) -> bool {
        self.c_jk != 0.0 && self.c_jl != 0.0 && self.c_kl != 0.0
    }
}

/// Deduplicated triad enumeration: unordered mode pairs {j, k} whose sum
/// stays in the lattice, skipping triads with all three coefficients zero
/// (collinear triples). Summing all four variants of every returned triad
/// over a state reproduces [`full_rhs`].
pub fn enumerate_triads(lat: &Lattice) -> Vec<Triad> {
    let modes = lat.modes();
    let mut out = Vec::new();
    for (pj, &j) in modes.iter().enumerate() {
        for (pk, &k) in modes.iter().enumerate().skip(pj + 1) {
            let l = j.add(k);
            let Some(pl) = lat.position(l) else { continue };
            let c_jk = coeff(j, k);
            let c_jl = coeff(j, l);
            let c_kl = coeff(k, l);
            if c_jk == 0.0 && c_jl == 0.0 && c_kl == 0.0 {
                continue;
            }
            out.push(Triad { j, k, l, c_jk, c_jl, c_kl, pj, pk, pl });
        }
    }
    out
}

const INVARIANT_STEP_TOL: f64 = 1e-12;

/// Advance the three designated coordinates of `q` along one triad variant
/// for duration `t` (negative t integrates backwards). Exact rotation when a
/// coefficient vanishes; otherwise an embedded adaptive Runge-Kutta with
/// invariant-drift step rejection and a final projection onto the two
/// conserved quadrics, so both partial invariants hold to machine precision
/// per call.
pub fn triad_flow(q: &[f64], triad: &Triad, variant: TriadVariant, t: f64) -> Result<EulerState, FlowError> {
    let mut out = q.to_vec();
    triad_flow_in_place(&mut out, triad, variant, t)?;
    Ok(out)
}

pub fn triad_flow_in_place(
    q: &mut [f64],
    triad: &Triad,
    variant: TriadVariant,
    t: f64,
) -> Result<(), FlowError> {
    let (slots, g) = triad.designated(variant);
    let x = [q[slots[0]], q[slots[1]], q[slots[2]]];
    let y = variant_flow_3d(&g, &triad.norms2(), x, t, 1e-12).map_err(|mut e| {
        e.message = format!(
            "triad ({},{})+({},{})->({},{}) variant {}: {}",
            triad.j.j1, triad.j.j2, triad.k.j1, triad.k.j2, triad.l.j1, triad.l.j2,
            variant.tag(),
            e.message
        );
        e
    })?;
    q[slots[0]] = y[0];
    q[slots[1]] = y[1];
    q[slots[2]] = y[2];
    Ok(())
}

/// Flow of the canonical 3-dimensional triad system
///   x1' = g1 x2 x3,  x2' = g2 x1 x3,  x3' = g3 x1 x2
/// for duration t (any sign), where the rates satisfy the two conservation
/// identities (norms2 are the squared mode norms behind the weighted
/// invariant). Dispatches to the identity at equilibria, the exact rotation
/// when a rate vanishes, and the adaptive integrator otherwise.
pub fn variant_flow_3d(
    g: &[f64; 3],
    norms2: &[f64; 3],
    x: [f64; 3],
    t: f64,
    rel_tol: f64,
) -> Result<[f64; 3], FlowError> {
    if t == 0.0 {
        return Ok(x);
    }
    // Equilibrium: identity flow (covers all-zero rates and any state where
    // every product pair vanishes, e.g. purely real states under the mixed
    // variants).
    if g[0] * x[1] * x[2] == 0.0 && g[1] * x[0] * x[2] == 0.0 && g[2] * x[0] * x[1] == 0.0 {
        return Ok(x);
    }
    let zero_rates = g.iter().filter(|&&gi| gi == 0.0).count();
    match zero_rates {
        0 => integrate_triad_3d(g, norms2, x, t, rel_tol),
        1 => Ok(rotate_triad(g, x, t)),
        _ => Ok(x), // two zero rates force the third to zero by the sum identity
    }
}

/// Closed form when exactly one rate vanishes: the coordinate with the zero
/// rate is frozen and the other two rotate at a constant angular velocity
/// proportional to it. The sum identity forces the two live rates to be
/// equal and opposite.
fn rotate_triad(g: &[f64; 3], x: [f64; 3], t: f64) -> [f64; 3] {
    let (fixed, p, r) = if g[0] == 0.0 {
        (0, 1, 2)
    } else if g[1] == 0.0 {
        (1, 0, 2)
    } else {
        (2, 0, 1)
    };
    // d/dt x_p = g_p * x_fixed * x_r, d/dt x_r = -g_p * x_fixed * x_p.
    let omega = g[p] * x[fixed];
    let (s, c) = (omega * t).sin_cos();
    let mut y = x;
    y[p] = x[p] * c + x[r] * s;
    y[r] = -x[p] * s + x[r] * c;
    y
}

// Cash-Karp 5(4) tableau (distinct from the reference oracle's pair, so the
// two integrators cross-check each other through independent coefficients).
const CK_A2: [f64; 1] = [1.0 / 5.0];
const CK_A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const CK_A4: [f64; 3] = [3.0 / 10.0, -9.0 / 10.0, 6.0 / 5.0];
const CK_A5: [f64; 4] = [-11.0 / 54.0, 5.0 / 2.0, -70.0 / 27.0, 35.0 / 27.0];
const CK_A6: [f64; 5] = [
    1631.0 / 55296.0,
    175.0 / 512.0,
    575.0 / 13824.0,
    44275.0 / 110592.0,
    253.0 / 4096.0,
];
const CK_B5: [f64; 6] = [37.0 / 378.0, 0.0, 250.0 / 621.0, 125.0 / 594.0, 0.0, 512.0 / 1771.0];
const CK_B4: [f64; 6] = [
    2825.0 / 27648.0,
    0.0,
    18575.0 / 48384.0,
    13525.0 / 55296.0,
    277.0 / 14336.0,
    1.0 / 4.0,
];

fn integrate_triad_3d(
    g: &[f64; 3],
    norms2: &[f64; 3],
    x0: [f64; 3],
    t: f64,
    rel_tol: f64,
) -> Result<[f64; 3], FlowError> {
    // Negative durations integrate the reversed field.
    let (dir, horizon) = if t < 0.0 { (-1.0, -t) } else { (1.0, t) };
    let f = |x: &[f64; 3]| -> [f64; 3] {
        [dir * g[0] * x[1] * x[2], dir * g[1] * x[0] * x[2], dir * g[2] * x[0] * x[1]]
    };
    let w = [1.0 / norms2[0], 1.0 / norms2[1], 1.0 / norms2[2]];
    let sum_sq = |x: &[f64; 3]| x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let weighted = |x: &[f64; 3]| w[0] * x[0] * x[0] + w[1] * x[1] * x[1] + w[2] * x[2] * x[2];
    let e0 = sum_sq(&x0);
    let w0 = weighted(&x0);

    let scale = e0.sqrt().max(1e-300);
    let gmax = g.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let abs_tol = 1e-2 * rel_tol * scale;

    let mut x = x0;
    let mut time = 0.0;
    let mut h = (0.1 / (gmax * scale)).min(horizon);
    let mut steps = 0usize;
    const MAX_STEPS: usize = 2_000_000;
    while time < horizon {
        if steps >= MAX_STEPS {
            return Err(FlowError::new(format!("step budget exhausted at t = {time}")));
        }
        steps += 1;
        if time + h >= horizon {
            h = horizon - time;
        }
        let k1 = f(&x);
        let mut xs = [0.0; 3];
        let stage = |xs: &mut [f64; 3], ks: &[[f64; 3]], coefs: &[f64], x: &[f64; 3], h: f64| {
            for i in 0..3 {
                let mut acc = 0.0;
                for (c, kc) in coefs.iter().zip(ks) {
                    acc += c * kc[i];
                }
                xs[i] = x[i] + h * acc;
            }
        };
        stage(&mut xs, &[k1], &CK_A2, &x, h);
        let k2 = f(&xs);
        stage(&mut xs, &[k1, k2], &CK_A3, &x, h);
        let k3 = f(&xs);
        stage(&mut xs, &[k1, k2, k3], &CK_A4, &x, h);
        let k4 = f(&xs);
        stage(&mut xs, &[k1, k2, k3, k4], &CK_A5, &x, h);
        let k5 = f(&xs);
        stage(&mut xs, &[k1, k2, k3, k4, k5], &CK_A6, &x, h);
        let k6 = f(&xs);
        let ks = [k1, k2, k3, k4, k5, k6];
        let mut x5 = [0.0; 3];
        let mut err = 0.0f64;
        for i in 0..3 {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..6 {
                hi += CK_B5[s] * ks[s][i];
                lo += CK_B4[s] * ks[s][i];
            }
            x5[i] = x[i] + h * hi;
            let sc = abs_tol + rel_tol * x[i].abs().max(x5[i].abs());
            let e = h * (hi - lo) / sc;
            err += e * e;
        }
        err = (err / 3.0).sqrt();

        // Reject also on invariant drift beyond tolerance, relative to scale.
        let drift = ((sum_sq(&x5) - e0) / e0.max(1e-300)).abs()
            .max(((weighted(&x5) - w0) / w0.max(1e-300)).abs());
        let ok = err <= 1.0 && drift <= INVARIANT_STEP_TOL;
        if ok {
            time += h;
            x = x5;
        }
        let factor = if err > 0.0 { 0.9 * err.powf(-0.2) } else { 5.0 };
        let factor = if ok || err > 1.0 { factor } else { 0.5 };
        h *= factor.clamp(0.2, 5.0);
        if !h.is_finite() || h <= 0.0 {
            return Err(FlowError::new("step size underflow"));
        }
    }

    // Project back onto the two conserved quadrics (Gauss-Newton, least-norm
    // correction); drift after projection is at rounding level.
    for _ in 0..2 {
        let c1 = sum_sq(&x) - e0;
        let c2 = weighted(&x) - w0;
        if c1.abs() <= 1e-15 * e0 && c2.abs() <= 1e-15 * w0 {
            break;
        }
        let j1 = [2.0 * x[0], 2.0 * x[1], 2.0 * x[2]];
        let j2 = [2.0 * w[0] * x[0], 2.0 * w[1] * x[1], 2.0 * w[2] * x[2]];
        let a11: f64 = j1.iter().map(|v| v * v).sum();
        let a12: f64 = j1.iter().zip(&j2).map(|(u, v)| u * v).sum();
        let a22: f64 = j2.iter().map(|v| v * v).sum();
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-14 * a11 * a22 + 1e-300 {
            break; // gradients parallel (orbit pole); leave the RK value
        }
        let l1 = (c1 * a22 - c2 * a12) / det;
        let l2 = (c2 * a11 - c1 * a12) / det;
        for i in 0..3 {
            x[i] -= l1 * j1[i] + l2 * j2[i];
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(FlowError::new("non-finite state"));
    }
    Ok(x)
}

struct TriadField {
    triad: Triad,
    variant: TriadVariant,
}

impl FlowPrimitive for TriadField {
    fn id(&self) -> String {
        format!(
            "euler-triad-({},{})+({},{})-{}",
            self.triad.j.j1, self.triad.j.j2, self.triad.k.j1, self.triad.k.j2,
            self.variant.tag()
        )
    }

    fn apply(&self, x: &mut [f64], t: f64) -> Result<(), FlowError> {
        triad_flow_in_place(x, &self.triad, self.variant, t)
    }
}

struct EulerDissipativeField {
    fc: EulerForcing,
    lat: Lattice,
}

impl FlowPrimitive for EulerDissipativeField {
    fn id(&self) -> String {
        "euler-dissipative".into()
    }

    fn apply(&self, x: &mut [f64], t: f64) -> Result<(), FlowError> {
        dissipative_flow_in_place(&self.fc, &self.lat, x, t);
        Ok(())
    }
}

/// Build the splitting scheme: four variant primitives per enumerated triad,
/// in triad order, with the dissipative flow prepended for a forced spec.
pub fn build_scheme(spec: &EulerSpec, h: f64) -> Result<SplittingScheme, ChainError> {
    spec.validate()?;
    let lat = Lattice::new(spec.n_max);
    let triads = enumerate_triads(&lat);
    let mut fields: Vec<Box<dyn FlowPrimitive>> = Vec::with_capacity(4 * triads.len() + 1);
    let mut fixed_prefix = 0;
    if let Some(fc) = &spec.forcing {
        fields.push(Box::new(EulerDissipativeField { fc: fc.clone(), lat: lat.clone() }));
        fixed_prefix = 1;
    }
    for triad in &triads {
        for v in VARIANTS {
            fields.push(Box::new(TriadField { triad: *triad, variant: v }));
        }
    }
    SplittingScheme::new(
        if spec.forcing.is_some() { "euler2d-forced" } else { "euler2d" },
        lat.dim(),
        fields,
        fixed_prefix,
        TimeLawSpec::Exponential { mean: h },
        OrderPolicy::Fixed,
    )
}

/// Coordinate type of an extended index: the real (a) or imaginary (b) part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CoordType {
    Re,
    Im,
}

impl CoordType {
    /// Type produced by a quadratic interaction of two coordinates:
    /// Re*Re = Im*Im = Re, mixed = Im (sign multiplication with Re = +1).
    pub fn combine(a: CoordType, b: CoordType) -> CoordType {
        if a == b {
            CoordType::Re
        } else {
            CoordType::Im
        }
    }
}

pub type ExtIndex = (ModeIndex, CoordType);

/// Set of active extended indices (coordinates distinguishable from zero).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ActiveSet(pub BTreeSet<ExtIndex>);

impl ActiveSet {
    pub fn contains(&self, m: ModeIndex, t: CoordType) -> bool {
        self.0.contains(&(m, t))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Scale-aware default threshold separating active from inactive
/// coordinates: 1e-12 * max(1, ||q||).
pub fn default_active_tol(q: &[f64]) -> f64 {
    1e-12 * enstrophy(q).sqrt().max(1.0)
}

/// Coordinates of `q` with magnitude above `tol`.
pub fn active_set(lat: &Lattice, q: &[f64], tol: f64) -> ActiveSet {
    let mut set = BTreeSet::new();
    for (i, &m) in lat.modes().iter().enumerate() {
        if q[2 * i].abs() > tol {
            set.insert((m, CoordType::Re));
        }
        if q[2 * i + 1].abs() > tol {
            set.insert((m, CoordType::Im));
        }
    }
    ActiveSet(set)
}

/// Least fixed point of the triad expansion rule: from active (j, tj) and
/// (k, tk) with C_{jk} != 0, activate (l, tj*tk) for l = +/-(j+k) or
/// +/-(j-k) inside the lattice. Saturation terminates because the extended
/// index set is finite and growth is monotone.
pub fn oplus_closure(lat: &Lattice, set: &ActiveSet) -> ActiveSet {
    let mut cur: Vec<ExtIndex> = set.0.iter().copied().collect();
    let mut acc = set.0.clone();
    while !cur.is_empty() {
        // Pair every new element against everything accumulated so far;
        // inserts are deferred so the accumulator can be iterated freely.
        let mut found = Vec::new();
        for &(j, tj) in &cur {
            for &(k, tk) in &acc {
                if j == k {
                    continue; // C_{jj} = 0 blocks self-pairing
                }
                if coeff(j, k) == 0.0 {
                    continue;
                }
                let tl = CoordType::combine(tj, tk);
                for cand in [j.add(k), j.sub(k)] {
                    if cand.is_zero() {
                        continue;
                    }
                    let rep = cand.canonical();
                    if !rep.in_box(lat.n_max()) {
                        continue;
                    }
                    found.push((rep, tl));
                }
            }
        }
        let mut next = Vec::new();
        for item in found {
            if acc.insert(item) {
                next.push(item);
            }
        }
        cur = next;
    }
    ActiveSet(acc)
}

/// A state is nondegenerate when the closure of its active set contains the
/// two unit real modes and some imaginary mode of norm greater than one.
pub fn is_nondegenerate(lat: &Lattice, q: &[f64]) -> bool {
    let closure = oplus_closure(lat, &active_set(lat, q, default_active_tol(q)));
    closure.contains(ModeIndex::new(1, 0), CoordType::Re)
        && closure.contains(ModeIndex::new(0, 1), CoordType::Re)
        && closure.0.iter().any(|&(m, t)| t == CoordType::Im && m.norm2() > 1.0)
}

/// A state is generic when every coordinate is active at the default
/// threshold.
pub fn is_generic(lat: &Lattice, q: &[f64]) -> bool {
    debug_assert_eq!(q.len(), lat.dim(), "state length must match lattice dimension");
    let tol = default_active_tol(q);
    q.iter().all(|v| v.abs() > tol)
}
