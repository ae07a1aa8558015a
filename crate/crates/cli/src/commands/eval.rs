//! `eval`: metrics of a student checkpoint on the held-out test split.

use std::path::Path;

use disgcmae::distill::{accuracy, auroc, cross_entropy, stratified_split};
use disgcmae::encoders::{classify, encode_features, load_checkpoint, ParamBinding};
use disgcmae::error::{Error, Result};
use disgcmae::graph::{EncoderSide, MaskedGraph, ViewKind};
use disgcmae::numerics::functional::softmax;
use disgcmae::numerics::tape::Tape;
use disgcmae::rng::StreamRng;
use disgcmae::synth::load_dataset;
use rayon::prelude::*;

use crate::config::ExperimentConfig;

#[derive(serde::Serialize)]
struct EvalReport {
    n_test: usize,
    ce: f64,
    acc: f64,
    auroc: f64,
}

pub fn run(cfg: &ExperimentConfig, student: &Path, dataset: &Path, out: Option<&Path>) -> Result<()> {
    let (manifest, samples) = load_dataset(dataset)?;
    let (model, _, _) = load_checkpoint(student)?;
    super::finetune::check_compat(&model, &manifest, "student")?;
    let data = super::finetune::build_finetune_data(cfg, &manifest, &samples)?;

    let labels: Vec<u32> = data.iter().map(|d| d.label).collect();
    let splits = stratified_split(
        &labels,
        cfg.distill.train_frac,
        cfg.distill.val_frac,
        &StreamRng::new(cfg.seed).child(20),
    );
    if splits.test.is_empty() {
        return Err(Error::config("test split is empty".to_string()));
    }

    let results: Vec<(u32, Vec<f64>, f64)> = splits
        .test
        .par_chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&i| {
                    let item = &data[i];
                    let mut tape = Tape::new();
                    let binding = ParamBinding::bind_all(&mut tape, &model.params, false);
                    let wrapper = MaskedGraph {
                        masked: vec![false; item.ld.n_nodes()],
                        graph: item.ld.clone(),
                        kind: ViewKind::Query,
                        source_id: 0,
                        origin: EncoderSide::Student,
                    };
                    let x = tape.constant(item.ld.x.clone());
                    let enc = encode_features(&mut tape, &binding, &model.config, x, &wrapper);
                    let logits = classify(&mut tape, &binding, enc.nodes);
                    let logits = tape.value(logits).data.clone();
                    let ce = cross_entropy(&logits, item.label as usize);
                    (item.label, logits, ce)
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();

    let logits: Vec<Vec<f64>> = results.iter().map(|(_, l, _)| l.clone()).collect();
    let test_labels: Vec<u32> = results.iter().map(|(l, _, _)| *l).collect();
    let scores: Vec<f64> = logits.iter().map(|l| softmax(l)[1]).collect();
    let report = EvalReport {
        n_test: results.len(),
        ce: results.iter().map(|(_, _, c)| c).sum::<f64>() / results.len() as f64,
        acc: accuracy(&logits, &test_labels),
        auroc: auroc(&scores, &test_labels).unwrap_or(f64::NAN),
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match out {
        Some(path) => super::write_text(path, &json)?,
        None => println!("{}", json),
    }
    eprintln!(
        "evaluated {} test samples: acc {:.4}, auroc {:.4}",
        report.n_test, report.acc, report.auroc
    );
    Ok(())
}
