//! Spatial graph transformer: multi-head self-attention restricted to
//! graph edges plus self, learned per-electrode position embeddings
//! shared across density tiers, post-norm residual blocks.

use super::{EncodeOut, ModelConfig, ParamBinding};
use crate::graph::MaskedGraph;
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

const LN_EPS: f64 = 1e-5;

/// Additive attention bias: 0 on edges and the diagonal, −inf elsewhere.
fn attention_mask(mg: &MaskedGraph) -> Tensor {
    let n = mg.graph.n_nodes();
    let mut mask = vec![f64::NEG_INFINITY; n * n];
    for i in 0..n {
        mask[i * n + i] = 0.0;
        for j in 0..n {
            if mg.graph.a.at(i, j) > 0.0 {
                mask[i * n + j] = 0.0;
            }
        }
    }
    Tensor::matrix(n, n, mask)
}

pub fn gformer_forward(
    tape: &mut Tape,
    binding: &ParamBinding,
    config: &ModelConfig,
    x: Var,
    mg: &MaskedGraph,
) -> EncodeOut {
    let dim = config.encoder.hidden_dim;
    let heads = config.encoder.heads;
    assert_eq!(dim % heads, 0, "contract violation: heads must divide hidden dim");
    let head_dim = dim / heads;
    let n = mg.graph.n_nodes();

    let in_w = binding.var("enc.in_proj.w");
    let in_b = binding.var("enc.in_proj.b");
    let proj = tape.matmul_nt(x, in_w);
    let mut h = tape.add_bias(proj, in_b);
    if config.encoder.position_embedding {
        let table = binding.var("enc.pos_emb");
        let pe = tape.gather_rows(table, &mg.graph.node_ids);
        h = tape.add(h, pe);
    }

    let mask = tape.constant(attention_mask(mg));
    let mut last_probs: Vec<Var> = Vec::new();

    for l in 0..config.encoder.layers {
        let name = |part: &str| format!("enc.layer{}.{}", l, part);
        let wq = binding.var(&name("wq"));
        let bq = binding.var(&name("wq_b"));
        let wk = binding.var(&name("wk"));
        let bk = binding.var(&name("wk_b"));
        let wv = binding.var(&name("wv"));
        let bv = binding.var(&name("wv_b"));
        let wo = binding.var(&name("wo"));
        let bo = binding.var(&name("wo_b"));

        let q = tape.matmul_nt(h, wq);
        let q = tape.add_bias(q, bq);
        let k = tape.matmul_nt(h, wk);
        let k = tape.add_bias(k, bk);
        let v = tape.matmul_nt(h, wv);
        let v = tape.add_bias(v, bv);

        let mut ctx_heads = Vec::with_capacity(heads);
        let mut probs_heads = Vec::with_capacity(heads);
        for head in 0..heads {
            let qh = tape.slice_cols(q, head * head_dim, head_dim);
            let kh = tape.slice_cols(k, head * head_dim, head_dim);
            let vh = tape.slice_cols(v, head * head_dim, head_dim);
            let scores = tape.matmul_nt(qh, kh);
            let scores = tape.scale(scores, 1.0 / (head_dim as f64).sqrt());
            let masked = tape.add(scores, mask);
            let probs = tape.softmax_rows(masked);
            let ctx = tape.matmul(probs, vh);
            ctx_heads.push(ctx);
            probs_heads.push(probs);
        }
        let ctx = if ctx_heads.len() == 1 {
            ctx_heads[0]
        } else {
            tape.concat_cols(&ctx_heads)
        };
        let att = tape.matmul_nt(ctx, wo);
        let att = tape.add_bias(att, bo);

        let res = tape.add(h, att);
        let g1 = binding.var(&name("ln1.g"));
        let b1 = binding.var(&name("ln1.b"));
        let h1 = tape.layer_norm(res, g1, b1, LN_EPS);

        let w1 = binding.var(&name("ffn.w1"));
        let fb1 = binding.var(&name("ffn.b1"));
        let w2 = binding.var(&name("ffn.w2"));
        let fb2 = binding.var(&name("ffn.b2"));
        let f = tape.matmul_nt(h1, w1);
        let f = tape.add_bias(f, fb1);
        let f = tape.relu(f);
        let f = tape.matmul_nt(f, w2);
        let f = tape.add_bias(f, fb2);

        let res2 = tape.add(h1, f);
        let g2 = binding.var(&name("ln2.g"));
        let b2 = binding.var(&name("ln2.b"));
        h = tape.layer_norm(res2, g2, b2, LN_EPS);

        if l == config.encoder.layers - 1 {
            last_probs = probs_heads;
        }
    }

    // learned adjacency: head-averaged attention, symmetrized, zero diag
    let mut adj = vec![0.0; n * n];
    for &p in &last_probs {
        for (dst, src) in adj.iter_mut().zip(&tape.value(p).data) {
            *dst += src;
        }
    }
    let scale = 1.0 / last_probs.len() as f64;
    let mut learned = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                learned[i * n + j] = scale * 0.5 * (adj[i * n + j] + adj[j * n + i]);
            }
        }
    }
    EncodeOut {
        nodes: h,
        learned_adj: Tensor::matrix(n, n, learned),
    }
}
