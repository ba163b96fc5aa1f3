//! Cyclic shell model (Lorenz-96) and its exact splitting flows.
//!
//! The conservative dynamics is x_k' = (x_{k+1} - x_{k-2}) x_{k-1} with
//! cyclic indices; the forced variant subtracts nu * x_k and adds F_k. The
//! splitting decomposes the conservative field into n planar rotations
//!
//!   V_k = (x_{k+1} e_k - x_k e_{k+1}) x_{k-1},
//!
//! each an exact rotation of the (x_k, x_{k+1}) plane at angular velocity
//! x_{k-1}, so every splitting flow preserves the Euclidean norm. The forced
//! variant prepends the affine dissipative field V_0 = -nu x + F, whose flow
//! is also closed form.

use crate::splitting::{
    ChainError, FlowError, FlowPrimitive, OrderPolicy, SplittingScheme, State, TimeLawSpec,
};

pub type LorenzState = State;

/// Model parameters. `forcing: None` selects the conservative system; the
/// forced system requires nu > 0 and F != 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LorenzSpec {
    pub n: usize,
    pub forcing: Option<LorenzForcing>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorenzForcing {
    pub nu: f64,
    pub f: Vec<f64>,
}

impl LorenzSpec {
    pub fn conservative(n: usize) -> Self {
        LorenzSpec { n, forcing: None }
    }

    pub fn forced(n: usize, nu: f64, f: Vec<f64>) -> Self {
        LorenzSpec { n, forcing: Some(LorenzForcing { nu, f }) }
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if self.n < 4 {
            return Err(ChainError::InvalidConfig(format!(
                "dimension must be >= 4, got {}",
                self.n
            )));
        }
        if let Some(fc) = &self.forcing {
            if !(fc.nu > 0.0 && fc.nu.is_finite()) {
                return Err(ChainError::InvalidConfig(format!(
                    "forced model needs nu > 0, got {}",
                    fc.nu
                )));
            }
            if fc.f.len() != self.n {
                return Err(ChainError::InvalidConfig(format!(
                    "forcing length {} does not match dimension {}",
                    fc.f.len(),
                    self.n
                )));
            }
            if fc.f.iter().all(|&v| v == 0.0) {
                return Err(ChainError::InvalidConfig("forced model needs F != 0".into()));
            }
        }
        Ok(())
    }
}

/// Right-hand side of the full (unsplit) dynamics at `x`.
pub fn full_rhs(spec: &LorenzSpec, x: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; spec.n];
    full_rhs_into(spec, x, &mut v);
    v
}

/// Allocation-free variant of [`full_rhs`] for tight oracle loops.
pub fn full_rhs_into(spec: &LorenzSpec, x: &[f64], v: &mut [f64]) {
    let n = spec.n;
    assert_eq!(x.len(), n, "state length must match spec dimension");
    assert_eq!(v.len(), n);
    for k in 0..n {
        let xp1 = x[(k + 1) % n];
        let xm1 = x[(k + n - 1) % n];
        let xm2 = x[(k + n - 2) % n];
        v[k] = (xp1 - xm2) * xm1;
    }
    if let Some(fc) = &spec.forcing {
        for k in 0..n {
            v[k] += -fc.nu * x[k] + fc.f[k];
        }
    }
}

/// Value of the single splitting field V_k at `x` (zero-based k).
pub fn splitting_field(n: usize, k: usize, x: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    let kp1 = (k + 1) % n;
    let w = x[(k + n - 1) % n];
    v[k] = x[kp1] * w;
    v[kp1] = -x[k] * w;
    v
}

/// Exact flow of V_k: rotate the (x_k, x_{k+1}) plane by angle x_{k-1} * t
/// (zero-based k, cyclic neighbors). All other coordinates are untouched.
pub fn rotation_flow(x: &[f64], k: usize, t: f64) -> LorenzState {
    let mut out = x.to_vec();
    rotation_flow_in_place(&mut out, k, t);
    out
}

pub(crate) fn rotation_flow_in_place(x: &mut [f64], k: usize, t: f64) {
    let n = x.len();
    let kp1 = (k + 1) % n;
    let omega = x[(k + n - 1) % n];
    let (s, c) = (omega * t).sin_cos();
    let (a, b) = (x[k], x[kp1]);
    x[k] = a * c + b * s;
    x[kp1] = -a * s + b * c;
}

/// Exact flow of the affine dissipative field V_0 = -nu x + F:
/// x(t) = e^{-nu t} x + (1 - e^{-nu t}) F / nu, componentwise.
pub fn dissipative_flow(x: &[f64], t: f64, nu: f64, f: &[f64]) -> LorenzState {
    let mut out = x.to_vec();
    dissipative_flow_in_place(&mut out, t, nu, f);
    out
}

pub(crate) fn dissipative_flow_in_place(x: &mut [f64], t: f64, nu: f64, f: &[f64]) {
    let decay = (-nu * t).exp();
    let gain = -(-nu * t).exp_m1() / nu; // (1 - e^{-nu t}) / nu, stable for small nu*t
    for (xi, fi) in x.iter_mut().zip(f) {
        *xi = decay * *xi + gain * fi;
    }
}

/// Residual sum_k (x_k^2 + x_{k+1}^2) x_{k-1}^2; zero exactly at the common
/// fixed points of the conservative dynamics and of every splitting field.
pub fn fixed_point_residual(x: &[f64]) -> f64 {
    let n = x.len();
    let mut s = 0.0;
    for k in 0..n {
        let w = x[(k + n - 1) % n];
        s += (x[k] * x[k] + x[(k + 1) % n] * x[(k + 1) % n]) * w * w;
    }
    s
}

struct RotationField {
    k: usize,
}

impl FlowPrimitive for RotationField {
    fn id(&self) -> String {
        format!("lorenz-rot-{}", self.k)
    }

    fn apply(&self, x: &mut [f64], t: f64) -> Result<(), FlowError> {
        rotation_flow_in_place(x, self.k, t);
        Ok(())
    }
}

struct DissipativeField {
    nu: f64,
    f: Vec<f64>,
}

impl FlowPrimitive for DissipativeField {
    fn id(&self) -> String {
        "lorenz-dissipative".into()
    }

    fn apply(&self, x: &mut [f64], t: f64) -> Result<(), FlowError> {
        dissipative_flow_in_place(x, t, self.nu, &self.f);
        Ok(())
    }
}

/// Build the splitting scheme: n rotation primitives in index order, with
/// the dissipative flow prepended for a forced spec. Default time law is
/// exponential with mean `h`; order policy is fixed.
pub fn build_scheme(spec: &LorenzSpec, h: f64) -> Result<SplittingScheme, ChainError> {
    spec.validate()?;
    let mut fields: Vec<Box<dyn FlowPrimitive>> = Vec::with_capacity(spec.n + 1);
    let mut fixed_prefix = 0;
    if let Some(fc) = &spec.forcing {
        fields.push(Box::new(DissipativeField { nu: fc.nu, f: fc.f.clone() }));
        fixed_prefix = 1;
    }
    for k in 0..spec.n {
        fields.push(Box::new(RotationField { k }));
    }
    SplittingScheme::new(
        if spec.forcing.is_some() { "lorenz96-forced" } else { "lorenz96" },
        spec.n,
        fields,
        fixed_prefix,
        TimeLawSpec::Exponential { mean: h },
        OrderPolicy::Fixed,
    )
}
