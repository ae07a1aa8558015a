//! Readout, decoder, and classifier heads over node embeddings.

use super::ParamBinding;
use crate::numerics::tape::{Tape, Var};

/// Mean-pool node embeddings, project through a two-layer head to the
/// shared contrastive dimension, and L2-normalize. The unit norm lets
/// graphs of different node counts share one key queue.
pub fn readout_project(tape: &mut Tape, binding: &ParamBinding, nodes: Var) -> Var {
    let pooled = tape.mean_rows(nodes);
    let width = tape.value(pooled).len();
    let row = tape.reshape(pooled, vec![1, width]);
    let h = tape.matmul_nt(row, binding.var("proj.w1"));
    let h = tape.add_bias(h, binding.var("proj.b1"));
    let h = tape.relu(h);
    let z = tape.matmul_nt(h, binding.var("proj.w2"));
    let z = tape.add_bias(z, binding.var("proj.b2"));
    let c = tape.value(z).len();
    let flat = tape.reshape(z, vec![c]);
    tape.l2_normalize(flat)
}

/// Two-layer per-node map from embedding dim back to feature dim; the
/// reconstructed structure X̃·X̃ᵀ is formed by the loss, not stored.
pub fn decode(tape: &mut Tape, binding: &ParamBinding, nodes: Var) -> Var {
    let h = tape.matmul_nt(nodes, binding.var("dec.w1"));
    let h = tape.add_bias(h, binding.var("dec.b1"));
    let h = tape.relu(h);
    let x = tape.matmul_nt(h, binding.var("dec.w2"));
    tape.add_bias(x, binding.var("dec.b2"))
}

/// Mean-pool and classify; returns the logit vector.
pub fn classify(tape: &mut Tape, binding: &ParamBinding, nodes: Var) -> Var {
    let pooled = tape.mean_rows(nodes);
    let width = tape.value(pooled).len();
    let row = tape.reshape(pooled, vec![1, width]);
    let h = tape.matmul_nt(row, binding.var("cls.w1"));
    let h = tape.add_bias(h, binding.var("cls.b1"));
    let h = tape.relu(h);
    let z = tape.matmul_nt(h, binding.var("cls.w2"));
    let z = tape.add_bias(z, binding.var("cls.b2"));
    let c = tape.value(z).len();
    tape.reshape(z, vec![c])
}
