//! Dense-tensor reverse-mode differentiation, loss primitives, and Adam.
//!
//! Sized for desk-scale graphs (≤128 nodes, feature dims ≤128), all math
//! in `f64`. The [`tape::Tape`] records primitive operations eagerly and
//! replays them in reverse; [`functional`] holds the plain (non-recorded)
//! counterparts used by oracles and metrics.

pub mod adam;
pub mod functional;
pub mod tape;
pub mod tensor;

pub use adam::{AdamParams, AdamState};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
