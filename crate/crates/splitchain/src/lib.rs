//! Random-splitting Markov chains for fluid-type ODE systems.
//!
//! A splitting scheme decomposes a vector field V = sum V_k into pieces whose
//! flows are cheap to evaluate (closed form or low-dimensional). One chain
//! cycle composes those flows, each run for an independent random duration
//! with mean h. The resulting Markov chain approximates the flow of V weakly
//! at order h while preserving the invariants that every V_k shares with V.
//!
//! The crate provides the model-agnostic chain engine ([`splitting`]), two
//! concrete models (cyclic shell model [`lorenz96`], spectrally truncated 2D
//! vorticity dynamics [`euler2d`]), a high-accuracy reference integrator
//! ([`oracle`]), root-finding primitives on triad orbits ([`control`]), and
//! the verification experiments ([`diagnostics`]).

pub mod control;
pub mod diagnostics;
pub mod euler2d;
pub mod lorenz96;
pub mod oracle;
pub mod splitting;
