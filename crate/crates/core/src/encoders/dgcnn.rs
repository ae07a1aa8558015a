//! Dynamic-adjacency GCN: edge weights are learned from the current
//! node embeddings each layer and hard-gated by a threshold, with
//! gradients flowing through the retained entries only.

use super::{EncodeOut, ModelConfig, ParamBinding};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

/// Edge scores and the gated adjacency for one layer.
///
/// alpha = sigmoid((P·xᵢ)·(P·xⱼ)/√D) is symmetric by construction;
/// `a_dyn` keeps alpha where it exceeds `theta_dyn` and is exactly
/// zero elsewhere. The gate mask is treated as a constant, so the
/// retained entries pass gradients straight through.
pub fn dynamic_edge_weights(tape: &mut Tape, x_emb: Var, p: Var, theta_dyn: f64) -> (Var, Var) {
    let proj_dim = tape.value(p).dims2().0;
    let y = tape.matmul_nt(x_emb, p);
    let raw = tape.matmul_nt(y, y);
    let scores = tape.scale(raw, 1.0 / (proj_dim as f64).sqrt());
    let alpha = tape.sigmoid(scores);

    let (n, _) = tape.value(alpha).dims2();
    let gate: Vec<f64> = tape
        .value(alpha)
        .data
        .iter()
        .map(|&a| if a > theta_dyn { 1.0 } else { 0.0 })
        .collect();
    let gate = tape.constant(Tensor::matrix(n, n, gate));
    let a_dyn = tape.mul(alpha, gate);
    (alpha, a_dyn)
}

/// L layers of x ← σ(Wx + b + Σⱼ α'ᵢⱼ·W_msg·xⱼ) with ReLU, where α' is
/// the gated dynamic adjacency recomputed from each layer's input.
pub fn gcn_forward(tape: &mut Tape, binding: &ParamBinding, config: &ModelConfig, x: Var) -> EncodeOut {
    let in_w = binding.var("enc.in_proj.w");
    let in_b = binding.var("enc.in_proj.b");
    let proj = tape.matmul_nt(x, in_w);
    let mut h = tape.add_bias(proj, in_b);

    let mut last_a_dyn = None;
    for l in 0..config.encoder.layers {
        let p = binding.var(&format!("enc.layer{}.p", l));
        let w_msg = binding.var(&format!("enc.layer{}.w_msg", l));
        let w = binding.var(&format!("enc.layer{}.w", l));
        let b = binding.var(&format!("enc.layer{}.b", l));

        let (_alpha, a_dyn) = dynamic_edge_weights(tape, h, p, config.encoder.theta_dyn);
        // degree-normalize the aggregation: the raw sum grows with the
        // retained-neighbor count and blows up activations on dense
        // dynamic adjacencies
        let (n, _) = tape.value(a_dyn).dims2();
        let mut inv_deg = vec![0.0; n * n];
        for i in 0..n {
            let deg = tape.value(a_dyn).row(i).iter().filter(|&&v| v > 0.0).count();
            let inv = 1.0 / deg.max(1) as f64;
            for j in 0..n {
                inv_deg[i * n + j] = inv;
            }
        }
        let inv_deg = tape.constant(Tensor::matrix(n, n, inv_deg));
        let a_norm = tape.mul(a_dyn, inv_deg);
        let msg_src = tape.matmul_nt(h, w_msg);
        let messages = tape.matmul(a_norm, msg_src);
        let hw = tape.matmul_nt(h, w);
        let pre = tape.add(hw, messages);
        let pre = tape.add_bias(pre, b);
        h = tape.relu(pre);
        last_a_dyn = Some(a_dyn);
    }

    let mut learned_adj = tape.value(last_a_dyn.expect("at least one layer")).clone();
    let (n, _) = learned_adj.dims2();
    for i in 0..n {
        learned_adj.data[i * n + i] = 0.0;
    }
    EncodeOut { nodes: h, learned_adj }
}
