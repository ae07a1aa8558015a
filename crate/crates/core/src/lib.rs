//! Joint pre-training and distillation of graph encoders on EEG-style
//! functional-connectivity graphs.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`synth`] generates multichannel recordings with controllable
//!    cross-channel coupling and converts them into graphs (band-pass,
//!    Welch PSD node features, Pearson-correlation adjacency).
//! 2. [`pretrain`] jointly pre-trains a high-density teacher and a
//!    low-density student encoder with a unified contrastive +
//!    masked-autoencoder objective over a shared momentum key queue.
//! 3. [`distill`] fine-tunes the student with cross-entropy, logit
//!    distillation, and a graph topology distillation loss driven by
//!    positive/negative pair selection between the teacher's and
//!    student's learned adjacencies.
//!
//! Everything runs on a small dense-tensor reverse-mode autodiff engine
//! ([`numerics`]) in 64-bit floats, deterministically given a seed.

pub mod distill;
pub mod encoders;
pub mod error;
pub mod graph;
pub mod numerics;
pub mod pretrain;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use graph::EegGraph;
pub use numerics::tensor::Tensor;
