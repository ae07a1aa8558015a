//! Fine-tuning driver: the teacher is first fitted with plain
//! cross-entropy on HD graphs, then frozen as the distillation source
//! while the student fits on LD graphs with cross-entropy, logit
//! distillation, and topology distillation. Teacher outputs are cached
//! per sample since the frozen teacher never changes.

use rayon::prelude::*;

use super::gtd::{cross_entropy_on_tape, gtd_loss_on_tape, logits_distill_on_tape};
use super::metrics::{accuracy, auroc};
use super::pairs::select_pairs;
use super::{DistillConfig, FinetuneMode};
use crate::encoders::{classify, encode_features, Model, ParamBinding};
use crate::error::{Error, Result};
use crate::graph::{EegGraph, EncoderSide, MaskedGraph, NodePartition, ViewKind};
use crate::numerics::adam::AdamState;
use crate::numerics::functional::softmax;
use crate::numerics::tape::Tape;
use crate::numerics::tensor::Tensor;
use crate::rng::StreamRng;

const CHUNK: usize = 8;

/// One labeled sample: the LD graph, its HD parent, and the partition
/// tying them together.
#[derive(Debug, Clone)]
pub struct FinetuneData {
    pub hd: EegGraph,
    pub ld: EegGraph,
    pub partition: NodePartition,
    pub label: u32,
}

/// Index sets of a train/val/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Deterministic per-class shuffle and proportional assignment.
pub fn stratified_split(labels: &[u32], train_frac: f64, val_frac: f64, rng: &StreamRng) -> Splits {
    use rand::seq::SliceRandom;
    let classes: std::collections::BTreeSet<u32> = labels.iter().cloned().collect();
    let mut splits = Splits {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for class in classes {
        let mut ids: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        ids.shuffle(&mut rng.stream(&[class as u64]));
        let n = ids.len();
        let n_train = (train_frac * n as f64).round() as usize;
        let n_val = (val_frac * n as f64).round() as usize;
        for (k, id) in ids.into_iter().enumerate() {
            if k < n_train {
                splits.train.push(id);
            } else if k < n_train + n_val {
                splits.val.push(id);
            } else {
                splits.test.push(id);
            }
        }
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();
    splits
}

/// Aggregated metrics of one split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitMetrics {
    pub ce: f64,
    pub kd: f64,
    pub gtd: f64,
    pub total: f64,
    pub acc: f64,
    pub auroc: f64,
}

/// One line of the per-epoch metrics log.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub epoch: usize,
    pub split: String,
    pub metrics: SplitMetrics,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("epoch,split,ce,kd,gtd,total,acc,auroc\n");
    for r in rows {
        let m = r.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.split, m.ce, m.kd, m.gtd, m.total, m.acc, m.auroc
        ));
    }
    out
}

/// Result of a fine-tuning run.
pub struct FinetuneOutcome {
    pub teacher: Model,
    pub student: Model,
    pub metrics: Vec<MetricsRow>,
    pub student_test: SplitMetrics,
    pub teacher_test: SplitMetrics,
    pub best_epoch: usize,
    pub trainable_params: usize,
    pub total_params: usize,
}

/// Frozen-teacher outputs for one sample.
struct TeacherCache {
    /// Teacher node embeddings restricted to retained nodes, LD order.
    nodes_restricted: Tensor,
    logits: Vec<f64>,
    /// Teacher's learned adjacency on the HD input.
    a_h: Tensor,
}

enum Role {
    Teacher,
    Student,
}

struct SampleEval {
    ce: f64,
    kd: f64,
    gtd: f64,
    total: f64,
    logits: Vec<f64>,
}

fn input_graph<'a>(role: &Role, item: &'a FinetuneData) -> &'a EegGraph {
    match role {
        Role::Teacher => &item.hd,
        Role::Student => &item.ld,
    }
}

fn plain_wrapper(g: &EegGraph, origin: EncoderSide) -> MaskedGraph {
    MaskedGraph {
        masked: vec![false; g.n_nodes()],
        graph: g.clone(),
        kind: ViewKind::Query,
        source_id: 0,
        origin,
    }
}

/// Forward one sample; returns losses/logits and, when `trainable` is
/// given, the flat gradient of the weighted total.
fn sample_pass(
    model: &Model,
    role: &Role,
    cache: Option<&TeacherCache>,
    item: &FinetuneData,
    cfg: &DistillConfig,
    weights: [f64; 3],
    trainable: Option<&(dyn Fn(&str) -> bool + Sync)>,
) -> Result<(SampleEval, Option<Vec<f64>>)> {
    let graph = input_graph(role, item);
    let origin = match role {
        Role::Teacher => EncoderSide::Teacher,
        Role::Student => EncoderSide::Student,
    };
    let mut tape = Tape::new();
    let binding = match trainable {
        Some(f) => ParamBinding::bind_where(&mut tape, &model.params, f),
        None => ParamBinding::bind_all(&mut tape, &model.params, false),
    };
    let wrapper = plain_wrapper(graph, origin);
    let x = tape.constant(graph.x.clone());
    let enc = encode_features(&mut tape, &binding, &model.config, x, &wrapper);
    let logits = classify(&mut tape, &binding, enc.nodes);
    let label = item.label as usize;
    let ce = cross_entropy_on_tape(&mut tape, logits, label);

    let mut kd_val = 0.0;
    let mut gtd_val = 0.0;
    let mut total = tape.scale(ce, weights[0]);
    if let Some(cache) = cache {
        if weights[1] > 0.0 {
            let kd = logits_distill_on_tape(&mut tape, logits, &cache.logits, cfg.kd_temperature);
            kd_val = tape.value(kd).data[0];
            let w = tape.scale(kd, weights[1]);
            total = tape.add(total, w);
        }
        if weights[2] > 0.0 {
            let pairs = select_pairs(&cache.a_h, &enc.learned_adj, &item.partition, cfg.theta)?;
            let gtd = gtd_loss_on_tape(&mut tape, enc.nodes, &cache.nodes_restricted, &pairs, cfg)?;
            gtd_val = tape.value(gtd).data[0];
            let w = tape.scale(gtd, weights[2]);
            total = tape.add(total, w);
        }
    }

    let eval = SampleEval {
        ce: tape.value(ce).data[0],
        kd: kd_val,
        gtd: gtd_val,
        total: tape.value(total).data[0],
        logits: tape.value(logits).data.clone(),
    };
    let grads = if trainable.is_some() {
        tape.backward(total)?;
        Some(binding.extract_grads(&tape, &model.params))
    } else {
        None
    };
    Ok((eval, grads))
}

fn aggregate(evals: &[(u32, SampleEval)]) -> SplitMetrics {
    let n = evals.len().max(1) as f64;
    let mut m = SplitMetrics {
        ce: 0.0,
        kd: 0.0,
        gtd: 0.0,
        total: 0.0,
        acc: 0.0,
        auroc: f64::NAN,
    };
    for (_, e) in evals {
        m.ce += e.ce / n;
        m.kd += e.kd / n;
        m.gtd += e.gtd / n;
        m.total += e.total / n;
    }
    let logits: Vec<Vec<f64>> = evals.iter().map(|(_, e)| e.logits.clone()).collect();
    let labels: Vec<u32> = evals.iter().map(|(l, _)| *l).collect();
    m.acc = accuracy(&logits, &labels);
    let scores: Vec<f64> = logits.iter().map(|l| softmax(l)[1]).collect();
    if let Ok(a) = auroc(&scores, &labels) {
        m.auroc = a;
    }
    m
}

fn eval_split(
    model: &Model,
    role: &Role,
    caches: Option<&[TeacherCache]>,
    data: &[FinetuneData],
    ids: &[usize],
    cfg: &DistillConfig,
    weights: [f64; 3],
) -> Result<SplitMetrics> {
    let evals: Vec<(u32, SampleEval)> = ids
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&i| {
                    let cache = caches.map(|c| &c[i]);
                    let (e, _) = sample_pass(model, role, cache, &data[i], cfg, weights, None)?;
                    Ok((data[i].label, e))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(aggregate(&evals))
}

struct FitResult {
    metrics: Vec<MetricsRow>,
    best_epoch: usize,
}

#[allow(clippy::too_many_arguments)]
fn fit(
    model: &mut Model,
    role: Role,
    caches: Option<&[TeacherCache]>,
    data: &[FinetuneData],
    splits: &Splits,
    cfg: &DistillConfig,
    weights: [f64; 3],
    mode: FinetuneMode,
    rng: &StreamRng,
) -> Result<FitResult> {
    use rand::seq::SliceRandom;
    let trainable: Box<dyn Fn(&str) -> bool + Sync> = match mode {
        FinetuneMode::Tuned => Box::new(|_: &str| true),
        FinetuneMode::Frozen => Box::new(|name: &str| name.starts_with("cls.")),
    };
    let mut opt = AdamState::new(model.params.n_params(), cfg.adam);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = model.params.data().to_vec();
    let mut since_best = 0usize;
    let mut metrics = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let mut order = splits.train.clone();
        order.shuffle(&mut rng.stream(&[100, epoch as u64]));

        let mut train_evals: Vec<(u32, SampleEval)> = Vec::with_capacity(order.len());
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(Vec<f64>, Vec<(u32, SampleEval)>)> = batch
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grads = vec![0.0; model.params.n_params()];
                    let mut evals = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        let cache = caches.map(|c| &c[i]);
                        let (e, g) = sample_pass(
                            model,
                            &role,
                            cache,
                            &data[i],
                            cfg,
                            weights,
                            Some(trainable.as_ref()),
                        )?;
                        for (a, b) in grads.iter_mut().zip(&g.expect("training pass returns grads")) {
                            *a += b;
                        }
                        evals.push((data[i].label, e));
                    }
                    Ok((grads, evals))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grads = vec![0.0; model.params.n_params()];
            for (g, evals) in results {
                for (a, b) in grads.iter_mut().zip(&g) {
                    *a += b;
                }
                train_evals.extend(evals);
            }
            let inv = 1.0 / batch.len() as f64;
            for g in grads.iter_mut() {
                *g *= inv;
            }
            opt.step(model.params.data_mut(), &grads)?;
        }

        let train_m = aggregate(&train_evals);
        metrics.push(MetricsRow {
            epoch,
            split: "train".into(),
            metrics: train_m,
        });

        let watch = if splits.val.is_empty() {
            train_m
        } else {
            let val_m = eval_split(model, &role, caches, data, &splits.val, cfg, weights)?;
            metrics.push(MetricsRow {
                epoch,
                split: "val".into(),
                metrics: val_m,
            });
            val_m
        };

        if watch.ce < best_val - 1e-12 {
            best_val = watch.ce;
            best_epoch = epoch;
            best_params.copy_from_slice(model.params.data());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                break;
            }
        }
    }
    model.params.data_mut().copy_from_slice(&best_params);
    Ok(FitResult { metrics, best_epoch })
}

fn build_teacher_cache(teacher: &Model, data: &[FinetuneData], cfg: &DistillConfig) -> Result<Vec<TeacherCache>> {
    let ids: Vec<usize> = (0..data.len()).collect();
    let caches: Vec<TeacherCache> = ids
        .par_chunks(CHUNK)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&i| {
                    let item = &data[i];
                    let mut tape = Tape::new();
                    let binding = ParamBinding::bind_all(&mut tape, &teacher.params, false);
                    let wrapper = plain_wrapper(&item.hd, EncoderSide::Teacher);
                    let x = tape.constant(item.hd.x.clone());
                    let enc = encode_features(&mut tape, &binding, &teacher.config, x, &wrapper);
                    let logits = classify(&mut tape, &binding, enc.nodes);
                    let nodes = tape.value(enc.nodes);
                    let dim = nodes.dims2().1;
                    let mut restricted = Vec::with_capacity(item.partition.n() * dim);
                    for &hd_idx in &item.partition.v_l {
                        restricted.extend_from_slice(nodes.row(hd_idx));
                    }
                    let _ = cfg;
                    Ok(TeacherCache {
                        nodes_restricted: Tensor::matrix(item.partition.n(), dim, restricted),
                        logits: tape.value(logits).data.clone(),
                        a_h: enc.learned_adj,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())?;
    Ok(caches)
}

/// A frozen-teacher per-sample loss context for gradient verification:
/// the fine-tune total as a pure function of the student parameters.
pub struct DistillProbe {
    cache: TeacherCache,
    item: FinetuneData,
    cfg: DistillConfig,
}

impl DistillProbe {
    pub fn new(teacher: &Model, item: FinetuneData, cfg: DistillConfig) -> Result<Self> {
        let caches = build_teacher_cache(teacher, std::slice::from_ref(&item), &cfg)?;
        Ok(DistillProbe {
            cache: caches.into_iter().next().expect("one cache"),
            item,
            cfg,
        })
    }

    /// Full per-sample fine-tune loss (CE + logit KD + topology
    /// distillation) and student gradients.
    pub fn loss_and_grads(&self, student: &Model) -> Result<(f64, Vec<f64>)> {
        let weights = [self.cfg.weight_ce, self.cfg.weight_kd, self.cfg.weight_gtd];
        let trainable: &(dyn Fn(&str) -> bool + Sync) = &|_: &str| true;
        let (eval, grads) = sample_pass(
            student,
            &Role::Student,
            Some(&self.cache),
            &self.item,
            &self.cfg,
            weights,
            Some(trainable),
        )?;
        Ok((eval.total, grads.expect("training pass returns grads")))
    }

    pub fn loss(&self, student: &Model) -> Result<f64> {
        Ok(self.loss_and_grads(student)?.0)
    }

    /// (ce, kd, gtd, total) at the current student parameters.
    pub fn loss_components(&self, student: &Model) -> Result<(f64, f64, f64, f64)> {
        let weights = [self.cfg.weight_ce, self.cfg.weight_kd, self.cfg.weight_gtd];
        let (eval, _) = sample_pass(
            student,
            &Role::Student,
            Some(&self.cache),
            &self.item,
            &self.cfg,
            weights,
            None,
        )?;
        Ok((eval.ce, eval.kd, eval.gtd, eval.total))
    }

    /// Pair selection at the current student parameters.
    pub fn pair_sets(&self, student: &Model) -> Result<super::pairs::PairSets> {
        let adj = self.student_learned_adj(student)?;
        select_pairs(&self.cache.a_h, &adj, &self.item.partition, self.cfg.theta)
    }

    /// Student-side learned adjacency at the current parameters
    /// (normalized-margin inspection for finite-difference stability).
    pub fn student_learned_adj(&self, student: &Model) -> Result<Tensor> {
        let mut tape = Tape::new();
        let binding = ParamBinding::bind_all(&mut tape, &student.params, false);
        let wrapper = plain_wrapper(&self.item.ld, EncoderSide::Student);
        let x = tape.constant(self.item.ld.x.clone());
        let enc = encode_features(&mut tape, &binding, &student.config, x, &wrapper);
        Ok(enc.learned_adj)
    }

    pub fn teacher_learned_adj(&self) -> &Tensor {
        &self.cache.a_h
    }
}

/// Fine-tune the teacher (cross-entropy only), freeze it, then
/// fine-tune the student with the configured loss weights against the
/// frozen teacher. Deterministic given `seed`.
pub fn run_finetune(
    teacher: Model,
    student: Model,
    data: &[FinetuneData],
    cfg: &DistillConfig,
    seed: u64,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::data("no labeled samples".to_string()));
    }
    for item in data {
        if item.partition.m() != item.hd.n_nodes() || item.partition.n() != item.ld.n_nodes() {
            return Err(Error::contract(
                "sample partition inconsistent with its HD parent".to_string(),
            ));
        }
    }
    let labels: Vec<u32> = data.iter().map(|d| d.label).collect();
    let root = StreamRng::new(seed);
    let splits = stratified_split(&labels, cfg.train_frac, cfg.val_frac, &root.child(20));
    if splits.train.is_empty() || splits.test.is_empty() {
        return Err(Error::config("split leaves train or test empty".to_string()));
    }

    // stage 1: teacher, cross-entropy only, all parameters
    let mut teacher = teacher;
    fit(
        &mut teacher,
        Role::Teacher,
        None,
        data,
        &splits,
        cfg,
        [1.0, 0.0, 0.0],
        FinetuneMode::Tuned,
        &root.child(21),
    )?;
    let teacher_test = eval_split(&teacher, &Role::Teacher, None, data, &splits.test, cfg, [1.0, 0.0, 0.0])?;

    // stage 2: frozen teacher as distillation source
    let caches = build_teacher_cache(&teacher, data, cfg)?;
    let weights = [cfg.weight_ce, cfg.weight_kd, cfg.weight_gtd];
    let mut student = student;
    let total_params = student.params.n_params();
    let trainable_params = match cfg.mode {
        FinetuneMode::Tuned => total_params,
        FinetuneMode::Frozen => student.params.count_matching(|n| n.starts_with("cls.")),
    };
    let result = fit(
        &mut student,
        Role::Student,
        Some(&caches),
        data,
        &splits,
        cfg,
        weights,
        cfg.mode,
        &root.child(22),
    )?;
    let student_test = eval_split(
        &student,
        &Role::Student,
        Some(&caches),
        data,
        &splits.test,
        cfg,
        weights,
    )?;

    Ok(FinetuneOutcome {
        teacher,
        student,
        metrics: result.metrics,
        student_test,
        teacher_test,
        best_epoch: result.best_epoch,
        trainable_params,
        total_params,
    })
}
