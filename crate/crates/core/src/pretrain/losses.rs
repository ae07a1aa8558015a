//! Reconstruction and InfoNCE losses, in plain and tape-recorded forms.

use super::queue::KeyQueue;
use crate::error::{Error, Result};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::{self, Tensor};

/// Masked-autoencoder reconstruction loss: mean squared feature error
/// plus mean squared structure error against X̃·X̃ᵀ. Each term is
/// normalized by its entry count so graphs of different sizes
/// contribute on comparable scales.
pub fn reconstruction_loss(x: &Tensor, a: &Tensor, x_tilde: &Tensor) -> Result<f64> {
    let (n, d) = x.dims2();
    if x_tilde.shape != x.shape || a.shape != vec![n, n] {
        return Err(Error::contract(format!(
            "reconstruction_loss: x {:?}, a {:?}, x̃ {:?} disagree",
            x.shape, a.shape, x_tilde.shape
        )));
    }
    let feat: f64 = x
        .data
        .iter()
        .zip(&x_tilde.data)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / (n * d) as f64;
    let a_tilde = tensor::matmul_nt(&x_tilde.data, &x_tilde.data, n, d, n);
    let structure: f64 = a
        .data
        .iter()
        .zip(&a_tilde)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        / (n * n) as f64;
    Ok(feat + structure)
}

/// Tape form of [`reconstruction_loss`]; `x` and `a` are the original
/// (unaugmented) targets, usually constants.
pub fn reconstruction_loss_on_tape(tape: &mut Tape, x: Var, a: Var, x_tilde: Var) -> Var {
    let (n, d) = tape.value(x).dims2();
    assert_eq!(tape.value(x_tilde).shape, vec![n, d], "reconstruction shape mismatch");
    assert_eq!(tape.value(a).shape, vec![n, n], "adjacency shape mismatch");
    let diff = tape.sub(x_tilde, x);
    let sq = tape.mul(diff, diff);
    let feat = tape.mean(sq);
    let a_tilde = tape.matmul_nt(x_tilde, x_tilde);
    let adiff = tape.sub(a_tilde, a);
    let asq = tape.mul(adiff, adiff);
    let structure = tape.mean(asq);
    tape.add(feat, structure)
}

/// InfoNCE of one query against its positives and the queue.
///
/// For each positive p the denominator holds the positive plus every
/// queue entry from a different source; the result is averaged over
/// positives. Queue entries sharing the query's source are excluded
/// from the negatives.
pub fn info_nce(
    query: &[f64],
    source_id: u64,
    positives: &[Vec<f64>],
    queue: &KeyQueue,
    tau: f64,
) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::contract("info_nce needs at least one positive".to_string()));
    }
    if !(tau > 0.0) {
        return Err(Error::contract("temperature must be positive".to_string()));
    }
    let negatives: Vec<&[f64]> = queue
        .iter()
        .filter(|e| e.source_id != source_id)
        .map(|e| e.embedding.as_slice())
        .collect();
    if negatives.is_empty() {
        return Err(Error::contract(
            "info_nce: queue holds no negatives after excluding the query's source".to_string(),
        ));
    }
    let mut total = 0.0;
    for p in positives {
        let pos_logit = tensor::dot(query, p) / tau;
        let mut logits = Vec::with_capacity(1 + negatives.len());
        logits.push(pos_logit);
        for k in &negatives {
            logits.push(tensor::dot(query, k) / tau);
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln();
        total += lse - pos_logit;
    }
    Ok(total / positives.len() as f64)
}

/// Tape form of [`info_nce`]. `negatives` is the pre-filtered N×C
/// matrix of queue embeddings, already inserted on the tape as a
/// constant (shareable across several queries); gradients flow through
/// the query only.
pub fn info_nce_on_tape(
    tape: &mut Tape,
    query: Var,
    positives: &[Vec<f64>],
    negatives: Var,
    tau: f64,
) -> Var {
    assert!(!positives.is_empty(), "contract violation: no positives");
    let n_neg = tape.value(negatives).dims2().0;
    assert!(n_neg > 0, "contract violation: no negatives");
    let c = tape.value(query).len();
    let q_row = tape.reshape(query, vec![1, c]);
    let neg_sims = tape.matmul_nt(q_row, negatives);
    let neg_logits_m = tape.scale(neg_sims, 1.0 / tau);
    let neg_logits = tape.reshape(neg_logits_m, vec![n_neg]);

    let mut terms = Vec::with_capacity(positives.len());
    for p in positives {
        let p_const = tape.constant(Tensor::vector(p.clone()));
        let q_flat = tape.reshape(q_row, vec![c]);
        let sim = tape.dot(q_flat, p_const);
        let pos_logit = tape.scale(sim, 1.0 / tau);
        let all = tape.concat(&[pos_logit, neg_logits]);
        let lse = tape.logsumexp(all);
        terms.push(tape.sub(lse, pos_logit));
    }
    let total = tape.sum_vars(&terms);
    tape.scale(total, 1.0 / positives.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{EncoderSide, ViewKind};
    use crate::pretrain::QueueEntry;

    fn queue_of(embs: &[(u64, Vec<f64>)]) -> KeyQueue {
        let mut q = KeyQueue::new(128);
        q.enqueue(
            embs.iter()
                .map(|(id, e)| QueueEntry {
                    embedding: e.clone(),
                    source_id: *id,
                    origin: EncoderSide::Teacher,
                    kind: ViewKind::Key,
                })
                .collect(),
        )
        .unwrap();
        q
    }

    #[test]
    fn reconstruction_zero_iff_exact() {
        // x̃ == x and a == x·xᵀ -> 0
        let x = Tensor::matrix(2, 1, vec![1.0, 2.0]);
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        assert_eq!(reconstruction_loss(&x, &a, &x).unwrap(), 0.0);
    }

    #[test]
    fn reconstruction_hand_case() {
        // x=[[1]], x̃=[[0]], a=[[1]] -> 1 + 1 = 2
        let x = Tensor::matrix(1, 1, vec![1.0]);
        let a = Tensor::matrix(1, 1, vec![1.0]);
        let xt = Tensor::matrix(1, 1, vec![0.0]);
        assert_eq!(reconstruction_loss(&x, &a, &xt).unwrap(), 2.0);
    }

    #[test]
    fn reconstruction_nonnegative_and_matches_tape() {
        let mut rng = crate::rng::StreamRng::new(3).stream(&[0]);
        for _ in 0..20 {
            let x = Tensor::matrix(3, 2, crate::encoders::normal_matrix(&mut rng, 3, 2, 1.0));
            let a = Tensor::matrix(3, 3, crate::encoders::normal_matrix(&mut rng, 3, 3, 1.0));
            let xt = Tensor::matrix(3, 2, crate::encoders::normal_matrix(&mut rng, 3, 2, 1.0));
            let plain = reconstruction_loss(&x, &a, &xt).unwrap();
            assert!(plain >= 0.0);
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let av = tape.constant(a.clone());
            let xtv = tape.leaf(xt.clone());
            let loss = reconstruction_loss_on_tape(&mut tape, xv, av, xtv);
            assert!((tape.value(loss).data[0] - plain).abs() < 1e-12);
        }
    }

    #[test]
    fn info_nce_worked_example() {
        // q=[1,0], one positive [1,0], one negative [0,1], τ=1
        // -> -log(e / (e + 1)) ≈ 0.3133
        let q = queue_of(&[(99, vec![0.0, 1.0])]);
        let loss = info_nce(&[1.0, 0.0], 0, &[vec![1.0, 0.0]], &q, 1.0).unwrap();
        assert!((loss - 0.3132616875182228).abs() < 1e-12, "loss {}", loss);
    }

    #[test]
    fn info_nce_uniform_similarities() {
        // positive == negatives == q: loss = log(1 + N_neg)
        let q = queue_of(&[(99, vec![1.0, 0.0])]);
        let loss = info_nce(&[1.0, 0.0], 0, &[vec![1.0, 0.0]], &q, 1.0).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn info_nce_huge_temperature_washes_out() {
        let q = queue_of(&[(9, vec![0.0, 1.0]), (10, vec![0.6, 0.8]), (11, vec![-1.0, 0.0])]);
        let loss = info_nce(&[1.0, 0.0], 0, &[vec![0.8, -0.6]], &q, 1e6).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-6, "loss {} vs ln(1+3)", loss);
    }

    #[test]
    fn info_nce_errors() {
        let q = queue_of(&[(0, vec![0.0, 1.0])]);
        // no positives
        assert!(info_nce(&[1.0, 0.0], 0, &[], &q, 1.0).is_err());
        // all queue entries share the query's source -> no negatives
        assert!(info_nce(&[1.0, 0.0], 0, &[vec![1.0, 0.0]], &q, 1.0).is_err());
    }

    #[test]
    fn tape_form_matches_plain_and_is_differentiable() {
        let q = queue_of(&[(9, vec![0.0, 1.0]), (10, vec![0.6, 0.8])]);
        let query = vec![0.8, -0.6];
        let positives = vec![vec![1.0, 0.0], vec![0.0, -1.0]];
        let plain = info_nce(&query, 0, &positives, &q, 0.5).unwrap();
        let negs = q.negatives(0).unwrap();
        let mut tape = Tape::new();
        let qv = tape.leaf(Tensor::vector(query.clone()));
        let negs = tape.constant(negs);
        let loss = info_nce_on_tape(&mut tape, qv, &positives, negs, 0.5);
        assert!((tape.value(loss).data[0] - plain).abs() < 1e-12);
        tape.backward(loss).unwrap();
        let g = tape.grad(qv).unwrap().to_vec();
        // finite-difference check on the query coordinates
        let fd = crate::numerics::functional::finite_diff_grad(
            |x| info_nce(x, 0, &positives, &q, 0.5).unwrap(),
            &query,
            1e-6,
        );
        for (a, b) in g.iter().zip(&fd) {
            assert!(
                crate::numerics::functional::relative_error(*a, *b) < 1e-6,
                "grad {} vs fd {}",
                a,
                b
            );
        }
    }
}
