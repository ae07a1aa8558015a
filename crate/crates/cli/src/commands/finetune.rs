//! `finetune`: distillation fine-tuning over several seeds, emitting
//! per-seed metrics CSVs, fine-tuned checkpoints, and a summary JSON.

use std::path::Path;

use disgcmae::distill::{metrics_csv, run_finetune, FinetuneData};
use disgcmae::encoders::{load_checkpoint, save_checkpoint, Model};
use disgcmae::error::{Error, Result};
use disgcmae::graph::{reduce_density, DensityTier};
use disgcmae::synth::{load_dataset, DatasetManifest};

use crate::config::ExperimentConfig;

pub(crate) fn check_compat(model: &Model, manifest: &DatasetManifest, what: &str) -> Result<()> {
    if model.config.feat_dim != manifest.feat_dim {
        return Err(Error::config(format!(
            "{} checkpoint expects feature dim {} but dataset has {}",
            what, model.config.feat_dim, manifest.feat_dim
        )));
    }
    if model.config.n_electrodes != manifest.channels {
        return Err(Error::config(format!(
            "{} checkpoint spans {} electrodes but dataset has {}",
            what, model.config.n_electrodes, manifest.channels
        )));
    }
    Ok(())
}

pub(crate) fn build_finetune_data(
    cfg: &ExperimentConfig,
    manifest: &DatasetManifest,
    samples: &[disgcmae::synth::GraphSample],
) -> Result<Vec<FinetuneData>> {
    if manifest.channels != cfg.hd_channels {
        return Err(Error::config(format!(
            "dataset has {} channels but config expects hd_channels {}",
            manifest.channels, cfg.hd_channels
        )));
    }
    let keep = cfg.keep_set()?;
    let tier = if keep.len() == cfg.hd_channels {
        DensityTier::Hd
    } else {
        DensityTier::Ld
    };
    let data: Vec<FinetuneData> = samples
        .iter()
        .filter(|s| s.graph.label.is_some())
        .map(|s| {
            let (ld, partition) = reduce_density(&s.graph, &keep, tier)?;
            Ok(FinetuneData {
                label: s.graph.label.expect("filtered to labeled"),
                hd: s.graph.clone(),
                ld,
                partition,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if data.is_empty() {
        return Err(Error::data("dataset holds no labeled samples".to_string()));
    }
    Ok(data)
}

#[derive(serde::Serialize)]
struct SeedSummary {
    seed: u64,
    best_epoch: usize,
    test_acc: f64,
    test_auroc: f64,
    test_ce: f64,
    teacher_test_acc: f64,
    teacher_test_auroc: f64,
}

#[derive(serde::Serialize)]
struct Summary {
    mode: String,
    weight_ce: f64,
    weight_kd: f64,
    weight_gtd: f64,
    trainable_params: usize,
    total_params: usize,
    per_seed: Vec<SeedSummary>,
    mean_test_acc: f64,
    std_test_acc: f64,
    mean_test_auroc: f64,
    std_test_auroc: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn run(cfg: &ExperimentConfig, dataset: &Path, teacher: &Path, student: &Path, out: &Path) -> Result<()> {
    let (manifest, samples) = load_dataset(dataset)?;
    let (teacher_model, _, _) = load_checkpoint(teacher)?;
    let (student_model, _, _) = load_checkpoint(student)?;
    check_compat(&teacher_model, &manifest, "teacher")?;
    check_compat(&student_model, &manifest, "student")?;
    let data = build_finetune_data(cfg, &manifest, &samples)?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut per_seed = Vec::new();
    let mut accs = Vec::new();
    let mut aurocs = Vec::new();
    let mut trainable_params = 0;
    let mut total_params = 0;
    for i in 0..cfg.finetune_seeds.max(1) {
        let seed = cfg.seed + i as u64;
        let outcome = run_finetune(teacher_model.clone(), student_model.clone(), &data, &cfg.distill, seed)?;
        super::write_text(&out.join(format!("metrics_seed{}.csv", seed)), &metrics_csv(&outcome.metrics))?;
        save_checkpoint(
            &out.join(format!("student_ft_seed{}.ckpt", seed)),
            &outcome.student,
            outcome.best_epoch as u64,
            seed,
        )?;
        eprintln!(
            "seed {}: student test acc {:.4} auroc {:.4} (teacher acc {:.4}), best epoch {}",
            seed,
            outcome.student_test.acc,
            outcome.student_test.auroc,
            outcome.teacher_test.acc,
            outcome.best_epoch
        );
        accs.push(outcome.student_test.acc);
        aurocs.push(outcome.student_test.auroc);
        trainable_params = outcome.trainable_params;
        total_params = outcome.total_params;
        per_seed.push(SeedSummary {
            seed,
            best_epoch: outcome.best_epoch,
            test_acc: outcome.student_test.acc,
            test_auroc: outcome.student_test.auroc,
            test_ce: outcome.student_test.ce,
            teacher_test_acc: outcome.teacher_test.acc,
            teacher_test_auroc: outcome.teacher_test.auroc,
        });
    }
    let (mean_acc, std_acc) = mean_std(&accs);
    let (mean_auroc, std_auroc) = mean_std(&aurocs);
    let summary = Summary {
        mode: format!("{:?}", cfg.distill.mode).to_lowercase(),
        weight_ce: cfg.distill.weight_ce,
        weight_kd: cfg.distill.weight_kd,
        weight_gtd: cfg.distill.weight_gtd,
        trainable_params,
        total_params,
        per_seed,
        mean_test_acc: mean_acc,
        std_test_acc: std_acc,
        mean_test_auroc: mean_auroc,
        std_test_auroc: std_auroc,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    super::write_text(&out.join("summary.json"), &json)?;
    println!(
        "fine-tuned {} seeds: mean test acc {:.4} ± {:.4}; outputs in {}",
        cfg.finetune_seeds.max(1),
        mean_acc,
        std_acc,
        out.display()
    );
    Ok(())
}
