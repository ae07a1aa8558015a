//! Topology and logit distillation losses, plus the fine-tune total.

use super::kernel::{pair_scores, pair_scores_on_tape};
use super::pairs::PairSets;
use super::DistillConfig;
use crate::error::{Error, Result};
use crate::numerics::functional::{kl_div, softmax, PROB_FLOOR};
use crate::numerics::tape::{Tape, Var};
use crate::numerics::tensor::Tensor;

/// Topology distillation from raw kernel-score vectors: both sides'
/// scores over a pair set are softmaxed into distributions and compared
/// with KL (student first). The ratio pulls positives together and
/// pushes wrongly connected negatives apart.
pub fn gtd_from_scores(
    z_s_pos: &[f64],
    z_t_pos: &[f64],
    z_s_neg: &[f64],
    z_t_neg: &[f64],
    eps: f64,
) -> f64 {
    let c_pos = z_s_pos.len();
    let c_neg = z_s_neg.len();
    if c_pos == 0 {
        return 0.0;
    }
    let l_pos = kl_div(&softmax(z_s_pos), &softmax(z_t_pos));
    let neg_avg = if c_neg == 0 {
        0.0
    } else {
        kl_div(&softmax(z_s_neg), &softmax(z_t_neg)) / c_neg as f64
    };
    (l_pos / c_pos as f64) / (neg_avg + eps)
}

/// Topology distillation over student/teacher node embeddings.
///
/// `teacher_emb` must already be restricted to the retained nodes in
/// LD-local order; pair indices address rows of both matrices.
pub fn gtd_loss(
    student_emb: &Tensor,
    teacher_emb: &Tensor,
    pairs: &PairSets,
    cfg: &DistillConfig,
) -> Result<f64> {
    validate_pair_range(student_emb, teacher_emb, pairs)?;
    let z_s_pos = pair_scores(student_emb, &pairs.positives, &cfg.kernel);
    let z_t_pos = pair_scores(teacher_emb, &pairs.positives, &cfg.kernel);
    let z_s_neg = pair_scores(student_emb, &pairs.negatives, &cfg.kernel);
    let z_t_neg = pair_scores(teacher_emb, &pairs.negatives, &cfg.kernel);
    Ok(gtd_from_scores(&z_s_pos, &z_t_pos, &z_s_neg, &z_t_neg, cfg.epsilon))
}

fn validate_pair_range(student_emb: &Tensor, teacher_emb: &Tensor, pairs: &PairSets) -> Result<()> {
    let n = student_emb.dims2().0;
    if teacher_emb.dims2().0 != n {
        return Err(Error::contract(format!(
            "teacher embeddings cover {} nodes, student {}",
            teacher_emb.dims2().0,
            n
        )));
    }
    let ok = pairs
        .positives
        .iter()
        .chain(&pairs.negatives)
        .all(|&(i, j)| i < n && j < n);
    if !ok {
        return Err(Error::contract("pair index out of embedding range".to_string()));
    }
    Ok(())
}

/// Tape form of [`gtd_loss`]; gradients flow through the student
/// embeddings only (the teacher side is a frozen constant).
pub fn gtd_loss_on_tape(
    tape: &mut Tape,
    student_nodes: Var,
    teacher_emb: &Tensor,
    pairs: &PairSets,
    cfg: &DistillConfig,
) -> Result<Var> {
    validate_pair_range(tape.value(student_nodes), teacher_emb, pairs)?;
    if pairs.c_pos == 0 {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let z_s_pos = pair_scores_on_tape(tape, student_nodes, &pairs.positives, &cfg.kernel);
    let p_s_pos = tape.softmax_vec(z_s_pos);
    let t_pos = softmax(&pair_scores(teacher_emb, &pairs.positives, &cfg.kernel));
    let p_t_pos = tape.constant(Tensor::vector(t_pos));
    let l_pos = tape.kl_div(p_s_pos, p_t_pos, PROB_FLOOR);
    let pos_avg = tape.scale(l_pos, 1.0 / pairs.c_pos as f64);

    let eps = tape.constant(Tensor::scalar(cfg.epsilon));
    let denom = if pairs.c_neg == 0 {
        eps
    } else {
        let z_s_neg = pair_scores_on_tape(tape, student_nodes, &pairs.negatives, &cfg.kernel);
        let p_s_neg = tape.softmax_vec(z_s_neg);
        let t_neg = softmax(&pair_scores(teacher_emb, &pairs.negatives, &cfg.kernel));
        let p_t_neg = tape.constant(Tensor::vector(t_neg));
        let l_neg = tape.kl_div(p_s_neg, p_t_neg, PROB_FLOOR);
        let neg_avg = tape.scale(l_neg, 1.0 / pairs.c_neg as f64);
        tape.add(neg_avg, eps)
    };
    Ok(tape.div(pos_avg, denom))
}

/// Classic logit distillation: T²·KL(softmax(s/T) ‖ softmax(t/T)).
pub fn logits_distill(student_logits: &[f64], teacher_logits: &[f64], temperature: f64) -> Result<f64> {
    if student_logits.len() != teacher_logits.len() {
        return Err(Error::contract(format!(
            "class counts differ: {} vs {}",
            student_logits.len(),
            teacher_logits.len()
        )));
    }
    if !(temperature > 0.0) {
        return Err(Error::contract("temperature must be positive".to_string()));
    }
    let t = temperature;
    let p_s = softmax(&student_logits.iter().map(|v| v / t).collect::<Vec<_>>());
    let p_t = softmax(&teacher_logits.iter().map(|v| v / t).collect::<Vec<_>>());
    Ok(t * t * kl_div(&p_s, &p_t))
}

/// Batch mean of [`logits_distill`].
pub fn logits_distill_batch(
    student_logits: &[Vec<f64>],
    teacher_logits: &[Vec<f64>],
    temperature: f64,
) -> Result<f64> {
    if student_logits.len() != teacher_logits.len() || student_logits.is_empty() {
        return Err(Error::contract("batch sizes differ or empty".to_string()));
    }
    let mut total = 0.0;
    for (s, t) in student_logits.iter().zip(teacher_logits) {
        total += logits_distill(s, t, temperature)?;
    }
    Ok(total / student_logits.len() as f64)
}

/// Tape form of [`logits_distill`] for one sample; the teacher side is
/// a constant.
pub fn logits_distill_on_tape(
    tape: &mut Tape,
    student_logits: Var,
    teacher_logits: &[f64],
    temperature: f64,
) -> Var {
    assert_eq!(
        tape.value(student_logits).len(),
        teacher_logits.len(),
        "contract violation: class counts differ"
    );
    let t = temperature;
    let scaled = tape.scale(student_logits, 1.0 / t);
    let p_s = tape.softmax_vec(scaled);
    let p_t = softmax(&teacher_logits.iter().map(|v| v / t).collect::<Vec<_>>());
    let p_t = tape.constant(Tensor::vector(p_t));
    let kl = tape.kl_div(p_s, p_t, PROB_FLOOR);
    tape.scale(kl, t * t)
}

/// Cross-entropy of one logit vector against an integer label.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    assert!(label < logits.len(), "contract violation: label out of range");
    let p = softmax(logits);
    -p[label].max(PROB_FLOOR).ln()
}

/// Tape form of [`cross_entropy`]: logsumexp(logits) − logits[label].
pub fn cross_entropy_on_tape(tape: &mut Tape, logits: Var, label: usize) -> Var {
    assert!(
        label < tape.value(logits).len(),
        "contract violation: label out of range"
    );
    let lse = tape.logsumexp(logits);
    let picked = tape.index(logits, label);
    tape.sub(lse, picked)
}

/// Weighted fine-tune total.
pub fn finetune_loss(ce: f64, kd: f64, gtd: f64, weights: [f64; 3]) -> f64 {
    weights[0] * ce + weights[1] * kd + weights[2] * gtd
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distill::FinetuneMode;

    fn cfg() -> DistillConfig {
        DistillConfig {
            mode: FinetuneMode::Tuned,
            ..DistillConfig::default()
        }
    }

    #[test]
    fn identical_embeddings_give_zero() {
        let emb = Tensor::matrix(4, 3, (0..12).map(|k| 0.2 * k as f64).collect());
        let pairs = PairSets {
            positives: vec![(0, 1), (2, 3)],
            negatives: vec![(0, 2)],
            c_pos: 2,
            c_neg: 1,
        };
        let loss = gtd_loss(&emb, &emb, &pairs, &cfg()).unwrap();
        assert_eq!(loss, 0.0, "KL of identical distributions");
    }

    #[test]
    fn zero_negative_count_divides_by_epsilon() {
        let s = Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let t = Tensor::matrix(3, 2, vec![0.0, 1.0, 1.0, 0.0, -1.0, 1.0]);
        let pairs = PairSets {
            positives: vec![(0, 1), (0, 2), (1, 2)],
            negatives: vec![],
            c_pos: 3,
            c_neg: 0,
        };
        let c = cfg();
        let loss = gtd_loss(&s, &t, &pairs, &c).unwrap();
        let z_s = pair_scores(&s, &pairs.positives, &c.kernel);
        let z_t = pair_scores(&t, &pairs.positives, &c.kernel);
        let expect = (kl_div(&softmax(&z_s), &softmax(&z_t)) / 3.0) / c.epsilon;
        assert!((loss - expect).abs() / expect < 1e-12);
        assert!(loss.is_finite() && loss > 0.0);
    }

    #[test]
    fn zero_positive_count_returns_zero() {
        let s = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let pairs = PairSets {
            positives: vec![],
            negatives: vec![(0, 1)],
            c_pos: 0,
            c_neg: 1,
        };
        assert_eq!(gtd_loss(&s, &s, &pairs, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn hand_set_scores_match_direct_oracle() {
        // student [1,0,0] vs teacher [0,0,1] over three positives
        let loss = gtd_from_scores(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[], &[], 1e-8);
        let expect = (kl_div(&softmax(&[1.0, 0.0, 0.0]), &softmax(&[0.0, 0.0, 1.0])) / 3.0) / 1e-8;
        assert!((loss - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn shift_invariance_of_scores() {
        let base = gtd_from_scores(&[0.5, -0.2, 1.0], &[1.0, 1.0, 0.0], &[0.3, 0.4], &[0.1, 0.9], 1e-8);
        let shifted = gtd_from_scores(
            &[100.5, 99.8, 101.0],
            &[1.0, 1.0, 0.0],
            &[0.3, 0.4],
            &[0.1, 0.9],
            1e-8,
        );
        assert!((base - shifted).abs() < 1e-10, "softmax shift invariance");
    }

    #[test]
    fn tape_gtd_matches_plain_and_differentiates() {
        let s_data = vec![0.4, -0.3, 0.8, 0.2, -0.6, 0.1, 0.9, 0.5];
        let s = Tensor::matrix(4, 2, s_data.clone());
        let t = Tensor::matrix(4, 2, vec![0.1, 0.2, -0.4, 0.6, 0.3, 0.3, -0.2, 0.8]);
        let pairs = PairSets {
            positives: vec![(0, 1), (1, 2)],
            negatives: vec![(0, 3), (2, 3)],
            c_pos: 2,
            c_neg: 2,
        };
        let c = cfg();
        let plain = gtd_loss(&s, &t, &pairs, &c).unwrap();
        let mut tape = Tape::new();
        let sv = tape.leaf(s.clone());
        let loss = gtd_loss_on_tape(&mut tape, sv, &t, &pairs, &c).unwrap();
        assert!((tape.value(loss).data[0] - plain).abs() < 1e-12);
        tape.backward(loss).unwrap();
        let grad = tape.grad(sv).unwrap().to_vec();
        let fd = crate::numerics::functional::finite_diff_grad(
            |x| {
                let s = Tensor::matrix(4, 2, x.to_vec());
                gtd_loss(&s, &t, &pairs, &c).unwrap()
            },
            &s_data,
            1e-6,
        );
        for (a, b) in grad.iter().zip(&fd) {
            assert!(
                crate::numerics::functional::relative_error(*a, *b) < 1e-5,
                "grad {} vs fd {}",
                a,
                b
            );
        }
    }

    #[test]
    fn logit_distillation_worked_case() {
        // student [0,0], teacher [ln 3, 0], T=1 -> KL([.5,.5],[.75,.25])
        let loss = logits_distill(&[0.0, 0.0], &[3f64.ln(), 0.0], 1.0).unwrap();
        assert!((loss - 0.14384103622589042).abs() < 1e-12, "loss {}", loss);
    }

    #[test]
    fn logit_distillation_properties() {
        assert_eq!(logits_distill(&[0.3, -0.7], &[0.3, -0.7], 2.0).unwrap(), 0.0);
        let mut rng = crate::rng::StreamRng::new(5).stream(&[0]);
        use rand::Rng;
        for _ in 0..50 {
            let s: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let t: Vec<f64> = (0..3).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            assert!(logits_distill(&s, &t, 2.0).unwrap() >= 0.0);
        }
        assert!(logits_distill(&[0.0], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn finetune_total_is_weighted_sum() {
        assert_eq!(finetune_loss(0.5, 0.0, 0.0, [1.0; 3]), 0.5);
        assert!((finetune_loss(0.5, 0.2, 0.1, [1.0; 3]) - 0.8).abs() < 1e-15);
        // teacher path: distillation terms forced to zero
        assert_eq!(finetune_loss(0.7, 0.0, 0.0, [1.0, 0.0, 0.0]), 0.7);
    }

    #[test]
    fn cross_entropy_matches_tape() {
        let logits = vec![0.2, -1.3, 0.8];
        let plain = cross_entropy(&logits, 2);
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor::vector(logits.clone()));
        let ce = cross_entropy_on_tape(&mut tape, l, 2);
        assert!((tape.value(ce).data[0] - plain).abs() < 1e-12);
        tape.backward(ce).unwrap();
        let fd = crate::numerics::functional::finite_diff_grad(|x| cross_entropy(x, 2), &logits, 1e-6);
        for (a, b) in tape.grad(l).unwrap().iter().zip(&fd) {
            assert!(crate::numerics::functional::relative_error(*a, *b) < 1e-6);
        }
    }
}
