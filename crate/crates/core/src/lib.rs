//! Robustness certification for small feedforward networks.
//!
//! The pipeline encodes a local-robustness query (does the predicted class
//! stay constant on an l-infinity ball around a nominal input?) as a mixed
//! binary/continuous constraint system, then solves it by one of three
//! routes: explicit enumeration of activation patterns with an LP per
//! pattern, lowering to QUBO and annealing, or Benders decomposition with
//! a binary master over segment selectors.
//!
//! Module map:
//! - [`net`]: network representation, forward evaluation, pruning masks
//! - [`interval`]: interval bound propagation and segment pruning
//! - [`system`]: the shared mixed constraint system and the enumeration solver
//! - [`pwl`]: exact encoding for piecewise-linear activations (Model 1)
//! - [`stepbound`]: piecewise-constant over-approximation (Model 2)
//! - [`lp`]: dense two-phase simplex with duals and Farkas certificates
//! - [`qubo`]: bit encoding, penalty assembly, decode
//! - [`anneal`]: exhaustive and simulated-annealing QUBO solvers
//! - [`benders`]: master/subproblem decomposition over segment selectors
//! - [`prune`]: pruning residual bound and margin-transfer certificates
//! - [`partition`]: layerwise prefix/suffix split verification
//! - [`data`], [`train`], [`campaign`]: dataset generation, fixture training,
//!   and end-to-end verification campaigns

pub mod anneal;
pub mod benders;
pub mod campaign;
pub mod data;
pub mod error;
pub mod interval;
pub mod lp;
pub mod net;
pub mod partition;
pub mod prune;
pub mod pwl;
pub mod qubo;
pub mod stepbound;
pub mod system;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use net::{ActivationKind, Layer, Network, PruneMask, Sample};
pub use system::{MixedConstraintSystem, OneHotGroup, VariableLayout};
