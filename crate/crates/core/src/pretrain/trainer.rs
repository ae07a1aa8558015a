//! The joint teacher+student pre-training loop.
//!
//! One step runs two phases per sample. Phase A (no gradients)
//! augments the HD/LD pair into query/key views, masks them, and runs
//! the momentum key encoders: original and reconstructed key
//! embeddings for both encoders are produced here and enqueued. Phase
//! B records the gradient tape: query views are masked, encoded,
//! decoded (reconstruction loss against the unaugmented graph), the
//! reconstructed queries are re-encoded into the contrastive space,
//! and both original and reconstructed query embeddings contrast
//! against the shared queue. Key-view reconstructions also run here so
//! the decoder trains on them (their encoder inputs are detached key
//! activations; no gradient ever reaches key-side parameters).
//!
//! Parallel fan-out is over fixed-size sample chunks with ordered
//! reduction, so results are bitwise independent of thread count.

use rayon::prelude::*;

use super::losses::{info_nce_on_tape, reconstruction_loss_on_tape};
use super::queue::{KeyQueue, QueueEntry};
use super::{EpochLoss, LossReport, PretrainConfig};
use crate::encoders::{
    decode, encode, encode_features, momentum_update, readout_project, Model, ModelConfig,
    ParamBinding, ParamStore,
};
use crate::error::{Error, Result};
use crate::graph::{augment, mask_graph, reduce_density, EegGraph, EncoderSide, MaskedGraph, ViewKind};
use crate::numerics::adam::AdamState;
use crate::numerics::tape::Tape;
use crate::numerics::tensor::Tensor;
use crate::rng::StreamRng;
use crate::synth::GraphSample;

/// Fixed parallel chunk width; part of the determinism contract.
const CHUNK: usize = 8;

/// Query-side models plus their momentum key-side parameter subsets.
pub struct PretrainModels {
    pub teacher: Model,
    pub student: Model,
    pub teacher_key: ParamStore,
    pub student_key: ParamStore,
}

impl PretrainModels {
    pub fn new(teacher: Model, student: Model) -> Self {
        let teacher_key = teacher.momentum_subset();
        let student_key = student.momentum_subset();
        PretrainModels {
            teacher,
            student,
            teacher_key,
            student_key,
        }
    }
}

/// Batch-mean loss components of one step. The total is the weighted
/// sum of the four components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub l_cl_t: f64,
    pub l_cl_s: f64,
    pub l_rec_t: f64,
    pub l_rec_s: f64,
    pub l_pretrain: f64,
}

struct PhaseA {
    qh_masked: MaskedGraph,
    ql_masked: MaskedGraph,
    keys: Vec<QueueEntry>,
    key_nodes_t: Tensor,
    key_nodes_s: Tensor,
}

struct SampleGrad {
    grads_t: Vec<f64>,
    grads_s: Vec<f64>,
    cl_t: f64,
    cl_s: f64,
    rec_t: f64,
    rec_s: f64,
    total: f64,
}

fn unmasked_wrapper(g: &EegGraph, source_id: u64, origin: EncoderSide) -> MaskedGraph {
    MaskedGraph {
        masked: vec![false; g.n_nodes()],
        graph: g.clone(),
        kind: ViewKind::ReconstructedQuery,
        source_id,
        origin,
    }
}

/// Phase A for one sample: views, masks, and all four key embeddings.
fn key_side_forward(
    models: &PretrainModels,
    hd: &EegGraph,
    ld: &EegGraph,
    source_id: u64,
    config: &PretrainConfig,
    rng: &StreamRng,
    slot: usize,
) -> Result<PhaseA> {
    let mut rng_t = rng.stream(&[slot as u64, 0]);
    let mut rng_s = rng.stream(&[slot as u64, 1]);
    let (qh, kh) = augment(
        hd,
        source_id,
        EncoderSide::Teacher,
        config.node_drop_ratio,
        config.edge_drop_ratio,
        &mut rng_t,
    );
    let (ql, kl) = augment(
        ld,
        source_id,
        EncoderSide::Student,
        config.node_drop_ratio,
        config.edge_drop_ratio,
        &mut rng_s,
    );

    let qh_masked = mask_graph(&qh, models.teacher.params.get("mask_emb"))?;
    let ql_masked = mask_graph(&ql, models.student.params.get("mask_emb"))?;
    let kh_masked = mask_graph(&kh, models.teacher_key.get("mask_emb"))?;
    let kl_masked = mask_graph(&kl, models.student_key.get("mask_emb"))?;

    let mut tape = Tape::new();
    let side = |tape: &mut Tape,
                    key_store: &ParamStore,
                    query_store: &ParamStore,
                    mc: &ModelConfig,
                    km: &MaskedGraph,
                    orig: &EegGraph,
                    origin: EncoderSide|
     -> (Vec<QueueEntry>, Tensor) {
        let key_b = ParamBinding::bind_all(tape, key_store, false);
        let query_b = ParamBinding::bind_all(tape, query_store, false);
        let enc = encode(tape, &key_b, mc, km);
        let z_key = readout_project(tape, &key_b, enc.nodes);
        // reconstruct with the query-side decoder, then re-embed the
        // detached reconstruction through the key encoder
        let x_tilde = decode(tape, &query_b, enc.nodes);
        let x_tilde = tape.detach(x_tilde);
        let wrapper = unmasked_wrapper(orig, source_id, origin);
        let enc_rec = encode_features(tape, &key_b, mc, x_tilde, &wrapper);
        let z_rec = readout_project(tape, &key_b, enc_rec.nodes);
        let entries = vec![
            QueueEntry {
                embedding: tape.value(z_key).data.clone(),
                source_id,
                origin,
                kind: ViewKind::Key,
            },
            QueueEntry {
                embedding: tape.value(z_rec).data.clone(),
                source_id,
                origin,
                kind: ViewKind::ReconstructedKey,
            },
        ];
        (entries, tape.value(enc.nodes).clone())
    };

    let (mut keys, key_nodes_t) = side(
        &mut tape,
        &models.teacher_key,
        &models.teacher.params,
        &models.teacher.config,
        &kh_masked,
        hd,
        EncoderSide::Teacher,
    );
    let (keys_s, key_nodes_s) = side(
        &mut tape,
        &models.student_key,
        &models.student.params,
        &models.student.config,
        &kl_masked,
        ld,
        EncoderSide::Student,
    );
    keys.extend(keys_s);

    Ok(PhaseA {
        qh_masked,
        ql_masked,
        keys,
        key_nodes_t,
        key_nodes_s,
    })
}

/// Phase B for one sample: the full differentiable loss and gradients.
fn sample_backward(
    teacher: &Model,
    student: &Model,
    pa: &PhaseA,
    hd: &EegGraph,
    ld: &EegGraph,
    source_id: u64,
    queue: &KeyQueue,
    warm: bool,
    config: &PretrainConfig,
) -> Result<SampleGrad> {
    let mut tape = Tape::new();
    let t_b = ParamBinding::bind_all(&mut tape, &teacher.params, true);
    let s_b = ParamBinding::bind_all(&mut tape, &student.params, true);

    let branch = |tape: &mut Tape,
                      binding: &ParamBinding,
                      mc: &ModelConfig,
                      masked: &MaskedGraph,
                      key_nodes: &Tensor,
                      orig: &EegGraph,
                      origin: EncoderSide| {
        let x_orig = tape.constant(orig.x.clone());
        let a_orig = tape.constant(orig.a.clone());
        let enc_q = encode(tape, binding, mc, masked);
        let z_q = readout_project(tape, binding, enc_q.nodes);
        let x_tilde_q = decode(tape, binding, enc_q.nodes);
        let rec_q = reconstruction_loss_on_tape(tape, x_orig, a_orig, x_tilde_q);
        let wrapper = unmasked_wrapper(orig, source_id, origin);
        let enc_rq = encode_features(tape, binding, mc, x_tilde_q, &wrapper);
        let z_rq = readout_project(tape, binding, enc_rq.nodes);
        let kn = tape.constant(key_nodes.clone());
        let x_tilde_k = decode(tape, binding, kn);
        let rec_k = reconstruction_loss_on_tape(tape, x_orig, a_orig, x_tilde_k);
        let rec_sum = tape.add(rec_q, rec_k);
        let rec = tape.scale(rec_sum, 0.5);
        (z_q, z_rq, rec)
    };

    let (z_qh, z_rqh, rec_t) = branch(
        &mut tape,
        &t_b,
        &teacher.config,
        &pa.qh_masked,
        &pa.key_nodes_t,
        hd,
        EncoderSide::Teacher,
    );
    let (z_ql, z_rql, rec_s) = branch(
        &mut tape,
        &s_b,
        &student.config,
        &pa.ql_masked,
        &pa.key_nodes_s,
        ld,
        EncoderSide::Student,
    );

    let rec_joint = tape.add(rec_t, rec_s);
    let mut total = tape.scale(rec_joint, config.weight_rec);
    let mut cl_t_val = 0.0;
    let mut cl_s_val = 0.0;
    if warm && config.weight_cl > 0.0 {
        let negatives = queue.negatives(source_id).ok_or_else(|| {
            Error::contract("contrastive step without negatives in the queue".to_string())
        })?;
        let negatives = tape.constant(negatives);
        let positives: Vec<Vec<f64>> = pa.keys.iter().map(|k| k.embedding.clone()).collect();
        let tau = config.temperature;
        let nce_qh = info_nce_on_tape(&mut tape, z_qh, &positives, negatives, tau);
        let nce_rqh = info_nce_on_tape(&mut tape, z_rqh, &positives, negatives, tau);
        let sum_t = tape.add(nce_qh, nce_rqh);
        let cl_t = tape.scale(sum_t, 0.5);
        let nce_ql = info_nce_on_tape(&mut tape, z_ql, &positives, negatives, tau);
        let nce_rql = info_nce_on_tape(&mut tape, z_rql, &positives, negatives, tau);
        let sum_s = tape.add(nce_ql, nce_rql);
        let cl_s = tape.scale(sum_s, 0.5);
        cl_t_val = tape.value(cl_t).data[0];
        cl_s_val = tape.value(cl_s).data[0];
        let cl_joint = tape.add(cl_t, cl_s);
        let cl_weighted = tape.scale(cl_joint, config.weight_cl);
        total = tape.add(total, cl_weighted);
    }

    let rec_t_val = tape.value(rec_t).data[0];
    let rec_s_val = tape.value(rec_s).data[0];
    let total_val = tape.value(total).data[0];
    tape.backward(total)?;

    Ok(SampleGrad {
        grads_t: t_b.extract_grads(&tape, &teacher.params),
        grads_s: s_b.extract_grads(&tape, &student.params),
        cl_t: cl_t_val,
        cl_s: cl_s_val,
        rec_t: rec_t_val,
        rec_s: rec_s_val,
        total: total_val,
    })
}

/// One optimization step over a batch of paired (HD, LD) graphs
/// sharing source ids. Updates query parameters of both encoders plus
/// decoders by Adam, then both key encoders by momentum.
pub fn pretrain_step(
    models: &mut PretrainModels,
    opt_t: &mut AdamState,
    opt_s: &mut AdamState,
    queue: &mut KeyQueue,
    batch: &[(&EegGraph, &EegGraph, u64)],
    config: &PretrainConfig,
    rng: &StreamRng,
    warm_threshold: usize,
) -> Result<StepLosses> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch".to_string()));
    }
    for (hd, ld, _) in batch {
        if ld.n_nodes() > hd.n_nodes() {
            return Err(Error::contract("LD graph larger than its HD parent".to_string()));
        }
    }

    // phase A: key-side forwards, parallel over fixed chunks
    let slots: Vec<usize> = (0..batch.len()).collect();
    let phase_a: Vec<PhaseA> = slots
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&slot| {
                    let (hd, ld, sid) = batch[slot];
                    key_side_forward(models, hd, ld, sid, config, rng, slot)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    // contrastive warm-up: the queue must already hold a batch worth of
    // keys before the first contrastive step
    let warm = queue.len() >= warm_threshold;
    let fresh: Vec<QueueEntry> = phase_a.iter().flat_map(|pa| pa.keys.clone()).collect();
    queue.enqueue(fresh)?;

    // phase B: gradients, parallel over fixed chunks, ordered reduction
    let n_t = models.teacher.params.n_params();
    let n_s = models.student.params.n_params();
    let chunk_results: Vec<(Vec<f64>, Vec<f64>, [f64; 5])> = slots
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut gt = vec![0.0; n_t];
            let mut gs = vec![0.0; n_s];
            let mut comps = [0.0; 5];
            for &slot in chunk {
                let (hd, ld, sid) = batch[slot];
                let sg = sample_backward(
                    &models.teacher,
                    &models.student,
                    &phase_a[slot],
                    hd,
                    ld,
                    sid,
                    &*queue,
                    warm,
                    config,
                )?;
                for (a, b) in gt.iter_mut().zip(&sg.grads_t) {
                    *a += b;
                }
                for (a, b) in gs.iter_mut().zip(&sg.grads_s) {
                    *a += b;
                }
                comps[0] += sg.cl_t;
                comps[1] += sg.cl_s;
                comps[2] += sg.rec_t;
                comps[3] += sg.rec_s;
                comps[4] += sg.total;
            }
            Ok((gt, gs, comps))
        })
        .collect::<Result<Vec<_>>>()?;

    let inv = 1.0 / batch.len() as f64;
    let mut grads_t = vec![0.0; n_t];
    let mut grads_s = vec![0.0; n_s];
    let mut comps = [0.0; 5];
    for (gt, gs, c) in chunk_results {
        for (a, b) in grads_t.iter_mut().zip(&gt) {
            *a += b;
        }
        for (a, b) in grads_s.iter_mut().zip(&gs) {
            *a += b;
        }
        for (a, b) in comps.iter_mut().zip(&c) {
            *a += b;
        }
    }
    for g in grads_t.iter_mut() {
        *g *= inv;
    }
    for g in grads_s.iter_mut() {
        *g *= inv;
    }

    opt_t.step(models.teacher.params.data_mut(), &grads_t)?;
    opt_s.step(models.student.params.data_mut(), &grads_s)?;
    momentum_update(&mut models.teacher_key, &models.teacher.params, config.momentum)?;
    momentum_update(&mut models.student_key, &models.student.params, config.momentum)?;

    Ok(StepLosses {
        l_cl_t: comps[0] * inv,
        l_cl_s: comps[1] * inv,
        l_rec_t: comps[2] * inv,
        l_rec_s: comps[3] * inv,
        l_pretrain: comps[4] * inv,
    })
}

/// A frozen per-sample loss context for gradient verification.
///
/// Key-side embeddings and the queue are captured once; the loss then
/// becomes a pure function of the query-side parameters, which is
/// exactly the function whose gradient the optimizer consumes (keys
/// never propagate gradients).
pub struct PretrainProbe {
    phase_a: PhaseA,
    queue: KeyQueue,
    hd: EegGraph,
    ld: EegGraph,
    source_id: u64,
    config: PretrainConfig,
}

impl PretrainProbe {
    pub fn new(
        models: &PretrainModels,
        hd: &EegGraph,
        ld: &EegGraph,
        source_id: u64,
        mut queue: KeyQueue,
        config: &PretrainConfig,
        rng: &StreamRng,
    ) -> Result<Self> {
        let phase_a = key_side_forward(models, hd, ld, source_id, config, rng, 0)?;
        queue.enqueue(phase_a.keys.clone())?;
        Ok(PretrainProbe {
            phase_a,
            queue,
            hd: hd.clone(),
            ld: ld.clone(),
            source_id,
            config: config.clone(),
        })
    }

    /// Full per-sample pre-training loss and query-side gradients at
    /// the given parameters.
    pub fn loss_and_grads(&self, teacher: &Model, student: &Model) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let sg = sample_backward(
            teacher,
            student,
            &self.phase_a,
            &self.hd,
            &self.ld,
            self.source_id,
            &self.queue,
            true,
            &self.config,
        )?;
        Ok((sg.total, sg.grads_t, sg.grads_s))
    }

    /// Loss value only (used as the finite-difference functional).
    pub fn loss(&self, teacher: &Model, student: &Model) -> Result<f64> {
        Ok(self.loss_and_grads(teacher, student)?.0)
    }
}

/// Result of a full pre-training run.
pub struct PretrainOutcome {
    pub teacher: Model,
    pub student: Model,
    pub report: LossReport,
}

/// Pre-train a teacher/student pair on HD graphs; LD partners are
/// derived on the fly from `keep`. Deterministic given `seed`.
pub fn run_pretraining(
    samples: &[GraphSample],
    keep: &[usize],
    teacher_config: ModelConfig,
    student_config: ModelConfig,
    config: &PretrainConfig,
    seed: u64,
    on_epoch: &mut dyn FnMut(&EpochLoss),
) -> Result<PretrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::data("empty dataset".to_string()));
    }
    let root = StreamRng::new(seed);
    let teacher = Model::init(teacher_config, &root.child(10))?;
    let student = Model::init(student_config, &root.child(11))?;
    let mut models = PretrainModels::new(teacher, student);
    let mut opt_t = AdamState::new(models.teacher.params.n_params(), config.adam);
    let mut opt_s = AdamState::new(models.student.params.n_params(), config.adam);
    let mut queue = KeyQueue::new(config.queue_capacity);

    let tier = if keep.len() == samples[0].graph.n_nodes() {
        samples[0].graph.density_tier
    } else {
        crate::graph::DensityTier::Ld
    };
    let pairs: Vec<(EegGraph, EegGraph, u64)> = samples
        .iter()
        .map(|s| {
            let (ld, _) = reduce_density(&s.graph, keep, tier)?;
            Ok((s.graph.clone(), ld, s.sample_id))
        })
        .collect::<Result<Vec<_>>>()?;

    // with tiny corpora a full batch may be unreachable; the warm-up
    // threshold uses the effective batch size
    let warm_threshold = config.batch_size.min(pairs.len());

    let shuffle_root = root.child(2);
    let aug_root = root.child(3);
    let mut report = LossReport::default();
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_root.stream(&[epoch as u64]));

        let mut sums = [0.0; 5];
        let mut count = 0usize;
        for (step, batch_ids) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<(&EegGraph, &EegGraph, u64)> = batch_ids
                .iter()
                .map(|&i| (&pairs[i].0, &pairs[i].1, pairs[i].2))
                .collect();
            let step_rng = aug_root.child(((epoch as u64) << 32) | step as u64);
            let losses = pretrain_step(
                &mut models,
                &mut opt_t,
                &mut opt_s,
                &mut queue,
                &batch,
                config,
                &step_rng,
                warm_threshold,
            )?;
            let w = batch.len() as f64;
            sums[0] += losses.l_cl_t * w;
            sums[1] += losses.l_cl_s * w;
            sums[2] += losses.l_rec_t * w;
            sums[3] += losses.l_rec_s * w;
            sums[4] += losses.l_pretrain * w;
            count += batch.len();
        }
        let inv = 1.0 / count as f64;
        let e = EpochLoss {
            epoch,
            l_cl_t: sums[0] * inv,
            l_cl_s: sums[1] * inv,
            l_rec_t: sums[2] * inv,
            l_rec_s: sums[3] * inv,
            l_pretrain: sums[4] * inv,
        };
        on_epoch(&e);
        report.epochs.push(e);
    }

    Ok(PretrainOutcome {
        teacher: models.teacher,
        student: models.student,
        report,
    })
}
