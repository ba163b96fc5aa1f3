//! Model-agnostic random-splitting chain engine.
//!
//! One cycle applies every flow primitive of a [`SplittingScheme`] in order,
//! each for an independent random duration drawn from the scheme's
//! [`TimeLawSpec`]. Chains, Monte Carlo kernel averages, and the rescaled
//! pathwise runs used by the convergence experiments all reduce to that one
//! cycle operation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use thiserror::Error;

/// Flat coordinate vector of one model state.
pub type State = Vec<f64>;

/// Number of batches used for batch-means standard errors.
pub const BATCHES: usize = 50;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("invalid time law: {0}")]
    InvalidTimeLaw(String),
    #[error("non-finite coordinate after cycle {cycle}")]
    NonFinite { cycle: u64 },
    #[error("times length {got} does not match field count {expected}")]
    TimesLength { got: usize, expected: usize },
    #[error("state dimension {got} does not match scheme dimension {expected}")]
    DimMismatch { got: usize, expected: usize },
    #[error("time stream too short: need {needed} entries, have {have}")]
    StreamTooShort { needed: usize, have: usize },
    #[error("flow `{id}` failed at cycle {cycle}: {message}")]
    FlowFailed { id: String, cycle: u64, message: String },
    #[error("{0}")]
    InvalidConfig(String),
}

/// Failure inside a single flow evaluation (e.g. the adaptive integrator
/// behind a triad flow exhausting its step budget).
#[derive(Debug, Error)]
#[error("{message}")]
pub struct FlowError {
    pub message: String,
}

impl FlowError {
    pub fn new(message: impl Into<String>) -> Self {
        FlowError { message: message.into() }
    }
}

/// An exactly (or near-exactly) solvable flow map (x, t) -> x'.
///
/// Implementations must satisfy `flow(x, 0) = x` exactly and the semigroup
/// property `flow(flow(x, s), t) = flow(x, s + t)` up to their stated
/// tolerance, and must be safe to share read-only across threads.
pub trait FlowPrimitive: Send + Sync {
    /// Stable identifier for manifests and error context.
    fn id(&self) -> String;
    /// Advance `x` in place along this field's flow for duration `t`.
    fn apply(&self, x: &mut [f64], t: f64) -> Result<(), FlowError>;
}

/// Distribution of the random flow durations within one cycle.
///
/// Each duration must be nonnegative, have positive density near zero, and
/// have at least exponentially decaying tails. The default is exponential
/// with mean `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeLawSpec {
    Exponential { mean: f64 },
    /// Gamma with the given shape; scale chosen so the mean is `mean`.
    Gamma { shape: f64, mean: f64 },
    /// Uniform on [0, max]; mean max/2.
    UniformPositive { max: f64 },
}

impl TimeLawSpec {
    pub fn validate(&self) -> Result<(), ChainError> {
        let bad = |m: String| Err(ChainError::InvalidTimeLaw(m));
        match *self {
            TimeLawSpec::Exponential { mean } if !(mean > 0.0 && mean.is_finite()) => {
                bad(format!("exponential mean must be positive, got {mean}"))
            }
            TimeLawSpec::Gamma { shape, mean }
                if !(shape > 0.0 && shape.is_finite() && mean > 0.0 && mean.is_finite()) =>
            {
                bad(format!("gamma needs positive shape and mean, got shape {shape}, mean {mean}"))
            }
            TimeLawSpec::UniformPositive { max } if !(max > 0.0 && max.is_finite()) => {
                bad(format!("uniform max must be positive, got {max}"))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            TimeLawSpec::Exponential { mean } => mean,
            TimeLawSpec::Gamma { mean, .. } => mean,
            TimeLawSpec::UniformPositive { max } => max / 2.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            TimeLawSpec::Exponential { mean } => {
                // Inverse CDF; u < 1 so the log argument is positive.
                let u: f64 = rng.gen();
                -mean * (1.0 - u).ln()
            }
            TimeLawSpec::Gamma { shape, mean } => {
                let g = rand_distr::Gamma::new(shape, mean / shape).expect("validated");
                g.sample(rng)
            }
            TimeLawSpec::UniformPositive { max } => rng.gen::<f64>() * max,
        }
    }
}

/// Cycle-order policy: apply fields as listed, or re-permute the
/// non-dissipative suffix uniformly at random once per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderPolicy {
    Fixed,
    RandomPermutation,
}

/// Ordered family of flow primitives plus the cycle time law and order
/// policy. A dissipative primitive, when present, occupies position 0 and is
/// never permuted.
pub struct SplittingScheme {
    fields: Vec<Box<dyn FlowPrimitive>>,
    fixed_prefix: usize,
    dim: usize,
    time_law: TimeLawSpec,
    order_policy: OrderPolicy,
    label: String,
}

impl SplittingScheme {
    pub fn new(
        label: impl Into<String>,
        dim: usize,
        fields: Vec<Box<dyn FlowPrimitive>>,
        fixed_prefix: usize,
        time_law: TimeLawSpec,
        order_policy: OrderPolicy,
    ) -> Result<Self, ChainError> {
        time_law.validate()?;
        if fields.is_empty() {
            return Err(ChainError::InvalidConfig("scheme needs at least one field".into()));
        }
        if fixed_prefix > fields.len() {
            return Err(ChainError::InvalidConfig(format!(
                "fixed prefix {fixed_prefix} exceeds field count {}",
                fields.len()
            )));
        }
        Ok(SplittingScheme {
            fields,
            fixed_prefix,
            dim,
            time_law,
            order_policy,
            label: label.into(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn field_count(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[Box<dyn FlowPrimitive>] {
        &self.fields
    }

    pub fn time_law(&self) -> &TimeLawSpec {
        &self.time_law
    }

    pub fn order_policy(&self) -> OrderPolicy {
        self.order_policy
    }

    /// Count of leading fields exempt from permutation (1 when a dissipative
    /// head is present, else 0).
    pub fn fixed_prefix(&self) -> usize {
        self.fixed_prefix
    }

    pub fn with_time_law(mut self, law: TimeLawSpec) -> Result<Self, ChainError> {
        law.validate()?;
        self.time_law = law;
        Ok(self)
    }

    pub fn with_order_policy(mut self, policy: OrderPolicy) -> Self {
        self.order_policy = policy;
        self
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ChainError> {
        if x.len() != self.dim {
            return Err(ChainError::DimMismatch { got: x.len(), expected: self.dim });
        }
        Ok(())
    }
}

/// Chain run length, seed, and trajectory recording stride.
#[derive(Debug, Clone, Copy)]
pub struct ChainRunConfig {
    pub cycles: u64,
    pub seed: u64,
    pub record_every: u64,
}

impl ChainRunConfig {
    fn validate(&self) -> Result<(), ChainError> {
        if self.record_every == 0 {
            return Err(ChainError::InvalidConfig("record_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Recorded output of one chain run. `states[0]` is always the initial
/// state; `head_times` holds the duration fed to field 0 on every cycle when
/// the scheme has a dissipative head (used by the Lyapunov diagnostics).
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub cycle_indices: Vec<u64>,
    pub head_times: Vec<f64>,
}

/// Deterministic RNG substream `index` of the root `seed`.
///
/// Streams with distinct indices are statistically independent and can be
/// consumed in any order, which keeps parallel Monte Carlo reproducible.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draw `count` independent cycle durations from `law`.
pub fn sample_cycle_times<R: Rng + ?Sized>(
    law: &TimeLawSpec,
    count: usize,
    rng: &mut R,
) -> Result<Vec<f64>, ChainError> {
    law.validate()?;
    if count == 0 {
        return Err(ChainError::InvalidConfig("count must be >= 1".into()));
    }
    Ok((0..count).map(|_| law.sample(rng)).collect())
}

/// Apply one full cycle in the scheme's listed order with the provided
/// durations. Zero durations leave the state exactly unchanged.
pub fn apply_cycle(
    scheme: &SplittingScheme,
    x: &[f64],
    times: &[f64],
) -> Result<State, ChainError> {
    scheme.check_dim(x)?;
    if times.len() != scheme.field_count() {
        return Err(ChainError::TimesLength { got: times.len(), expected: scheme.field_count() });
    }
    let mut out = x.to_vec();
    for (field, &t) in scheme.fields.iter().zip(times) {
        field.apply(&mut out, t).map_err(|e| ChainError::FlowFailed {
            id: field.id(),
            cycle: 0,
            message: e.message,
        })?;
    }
    Ok(out)
}

/// One cycle, in place, with an explicit application order.
///
/// Per-cycle stream layout: when the order policy is random permutation, the
/// permutation of the non-fixed suffix is drawn first, then the durations;
/// duration i goes to the i-th field of the resolved order.
fn cycle_in_place<R: Rng + ?Sized>(
    scheme: &SplittingScheme,
    x: &mut [f64],
    order: &mut [usize],
    rng: &mut R,
    cycle: u64,
) -> Result<f64, ChainError> {
    if scheme.order_policy == OrderPolicy::RandomPermutation {
        order[scheme.fixed_prefix..].shuffle(rng);
    }
    let mut head_time = 0.0;
    for (slot, &idx) in order.iter().enumerate() {
        let t = scheme.time_law.sample(rng);
        if slot == 0 && scheme.fixed_prefix == 1 {
            head_time = t;
        }
        scheme.fields[idx].apply(x, t).map_err(|e| ChainError::FlowFailed {
            id: scheme.fields[idx].id(),
            cycle,
            message: e.message,
        })?;
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(ChainError::NonFinite { cycle });
    }
    Ok(head_time)
}

/// Stateful cycle-by-cycle chain driver for streaming consumers that do not
/// want a stored trajectory (moment accumulation, drift tracking).
///
/// `ChainStepper::new(scheme, seed)` walks the exact same path as
/// [`run_chain`] with the same seed.
pub struct ChainStepper<'a> {
    scheme: &'a SplittingScheme,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    cycle: u64,
}

impl<'a> ChainStepper<'a> {
    pub fn new(scheme: &'a SplittingScheme, seed: u64) -> Self {
        Self::from_rng(scheme, substream(seed, 0))
    }

    /// Drive the chain from an explicit RNG (e.g. a substream that already
    /// produced the initial state).
    pub fn from_rng(scheme: &'a SplittingScheme, rng: ChaCha8Rng) -> Self {
        ChainStepper { scheme, rng, order: (0..scheme.field_count()).collect(), cycle: 0 }
    }

    /// Advance `x` by one cycle in place; returns the head (slot-0) duration.
    pub fn step(&mut self, x: &mut [f64]) -> Result<f64, ChainError> {
        self.cycle += 1;
        cycle_in_place(self.scheme, x, &mut self.order, &mut self.rng, self.cycle)
    }

    pub fn cycles_done(&self) -> u64 {
        self.cycle
    }
}

/// Run the chain for `cfg.cycles` cycles, recording every `record_every`-th
/// state (plus the initial one). Identical inputs give byte-identical output.
pub fn run_chain(
    scheme: &SplittingScheme,
    x0: &[f64],
    cfg: &ChainRunConfig,
) -> Result<Trajectory, ChainError> {
    scheme.check_dim(x0)?;
    cfg.validate()?;
    let mut rng = substream(cfg.seed, 0);
    let mut x = x0.to_vec();
    let mut order: Vec<usize> = (0..scheme.field_count()).collect();
    let mut traj = Trajectory {
        states: vec![x.clone()],
        cycle_indices: vec![0],
        head_times: Vec::new(),
    };
    for cycle in 1..=cfg.cycles {
        let head = cycle_in_place(scheme, &mut x, &mut order, &mut rng, cycle)?;
        if scheme.fixed_prefix == 1 {
            traj.head_times.push(head);
        }
        if cycle % cfg.record_every == 0 {
            traj.states.push(x.clone());
            traj.cycle_indices.push(cycle);
        }
    }
    Ok(traj)
}

/// Monte Carlo estimate of several kernel averages E[f(Phi^m(x0))] sharing
/// one set of chain samples. Sample i consumes `substream(seed, i)`, so the
/// estimate is independent of evaluation order and parallelism.
///
/// Returns one `(mean, batch-means standard error)` pair per observable.
pub fn estimate_kernel_averages(
    scheme: &SplittingScheme,
    observables: &[&(dyn Fn(&[f64]) -> f64 + Sync)],
    x0: &[f64],
    cycles: u64,
    samples: u64,
    seed: u64,
) -> Result<Vec<(f64, f64)>, ChainError> {
    scheme.check_dim(x0)?;
    if samples < 2 {
        return Err(ChainError::InvalidConfig("need at least 2 samples".into()));
    }
    let n_obs = observables.len();
    struct Acc {
        batch_sums: Vec<[f64; BATCHES]>,
        batch_counts: [u64; BATCHES],
        error: Option<ChainError>,
    }
    impl Acc {
        fn new(n_obs: usize) -> Self {
            Acc {
                batch_sums: vec![[0.0; BATCHES]; n_obs],
                batch_counts: [0; BATCHES],
                error: None,
            }
        }
    }
    let merged = (0..samples)
        .into_par_iter()
        .fold(
            || (Acc::new(n_obs), Vec::new(), Vec::new()),
            |(mut acc, mut x, mut order), i| {
                if acc.error.is_some() {
                    return (acc, x, order);
                }
                x.clear();
                x.extend_from_slice(x0);
                if order.is_empty() {
                    order.extend(0..scheme.field_count());
                }
                let mut rng = substream(seed, i);
                for cycle in 1..=cycles {
                    if let Err(e) = cycle_in_place(scheme, &mut x, &mut order, &mut rng, cycle) {
                        acc.error = Some(e);
                        return (acc, x, order);
                    }
                }
                let batch = (i * BATCHES as u64 / samples) as usize;
                acc.batch_counts[batch] += 1;
                for (o, f) in observables.iter().enumerate() {
                    acc.batch_sums[o][batch] += f(&x);
                }
                (acc, x, order)
            },
        )
        .map(|(acc, _, _)| acc)
        .reduce(
            || Acc::new(n_obs),
            |mut a, b| {
                if a.error.is_none() {
                    a.error = b.error;
                }
                for o in 0..n_obs {
                    for bch in 0..BATCHES {
                        a.batch_sums[o][bch] += b.batch_sums[o][bch];
                    }
                }
                for bch in 0..BATCHES {
                    a.batch_counts[bch] += b.batch_counts[bch];
                }
                a
            },
        );
    if let Some(e) = merged.error {
        return Err(e);
    }
    let total: u64 = merged.batch_counts.iter().sum();
    let mut out = Vec::with_capacity(n_obs);
    for o in 0..n_obs {
        let grand: f64 = merged.batch_sums[o].iter().sum::<f64>() / total as f64;
        // Equal-weight batch means; batch sizes differ by at most one sample.
        let mut var = 0.0;
        let mut nb = 0usize;
        for bch in 0..BATCHES {
            if merged.batch_counts[bch] > 0 {
                let mb = merged.batch_sums[o][bch] / merged.batch_counts[bch] as f64;
                var += (mb - grand) * (mb - grand);
                nb += 1;
            }
        }
        let se = if nb > 1 { (var / (nb as f64 * (nb - 1) as f64)).sqrt() } else { 0.0 };
        out.push((grand, se));
    }
    Ok(out)
}

/// Monte Carlo estimate of the single kernel average E[f(Phi^m(x0))].
pub fn estimate_kernel_average(
    scheme: &SplittingScheme,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x0: &[f64],
    cycles: u64,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64), ChainError> {
    Ok(estimate_kernel_averages(scheme, &[f], x0, cycles, samples, seed)?[0])
}

/// Run m^2 cycles whose durations are `t * stream[i] / m^2`, consuming the
/// first `m^2 * field_count` entries of the fixed stream in cycle order.
///
/// Reusing one stream across different m realizes the pathwise-convergence
/// experiment: as m grows the composition converges to the true flow at
/// time t along that fixed realization. The field order is the scheme's
/// listed order; the order policy is ignored here.
pub fn pathwise_rescaled_run(
    scheme: &SplittingScheme,
    x0: &[f64],
    t: f64,
    m: u64,
    stream: &[f64],
) -> Result<State, ChainError> {
    scheme.check_dim(x0)?;
    if m == 0 {
        return Err(ChainError::InvalidConfig("m must be >= 1".into()));
    }
    let k = scheme.field_count();
    let cycles = (m * m) as usize;
    let needed = cycles * k;
    if stream.len() < needed {
        return Err(ChainError::StreamTooShort { needed, have: stream.len() });
    }
    let scale = t / (m * m) as f64;
    let mut x = x0.to_vec();
    for cycle in 0..cycles {
        for (field, &tau) in scheme.fields.iter().zip(&stream[cycle * k..cycle * k + k]) {
            field.apply(&mut x, scale * tau).map_err(|e| ChainError::FlowFailed {
                id: field.id(),
                cycle: cycle as u64 + 1,
                message: e.message,
            })?;
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(ChainError::NonFinite { cycle: cycle as u64 + 1 });
        }
    }
    Ok(x)
}
