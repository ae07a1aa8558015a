//! `pretrain`: run the joint pre-training loop and write checkpoints
//! plus the loss CSV.

use std::path::Path;

use disgcmae::encoders::save_checkpoint;
use disgcmae::error::{Error, Result};
use disgcmae::pretrain::run_pretraining;
use disgcmae::synth::load_dataset;

use crate::config::ExperimentConfig;

pub fn run(cfg: &ExperimentConfig, dataset: &Path, out: &Path) -> Result<()> {
    let (manifest, samples) = load_dataset(dataset)?;
    if manifest.channels != cfg.hd_channels {
        return Err(Error::config(format!(
            "dataset has {} channels but config expects hd_channels {}",
            manifest.channels, cfg.hd_channels
        )));
    }
    let keep = cfg.keep_set()?;
    let teacher_cfg = cfg.teacher_model_config(manifest.channels, manifest.feat_dim);
    let student_cfg = cfg.student_model_config(manifest.channels, manifest.feat_dim);

    let outcome = run_pretraining(
        &samples,
        &keep,
        teacher_cfg,
        student_cfg,
        &cfg.pretrain,
        cfg.seed,
        &mut |e| {
            eprintln!(
                "epoch {:4}  cl_t {:.4}  cl_s {:.4}  rec_t {:.4}  rec_s {:.4}  total {:.4}",
                e.epoch, e.l_cl_t, e.l_cl_s, e.l_rec_t, e.l_rec_s, e.l_pretrain
            );
        },
    )?;

    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    save_checkpoint(&out.join("teacher.ckpt"), &outcome.teacher, cfg.pretrain.epochs as u64, cfg.seed)?;
    save_checkpoint(&out.join("student.ckpt"), &outcome.student, cfg.pretrain.epochs as u64, cfg.seed)?;
    super::write_text(&out.join("pretrain_loss.csv"), &outcome.report.to_csv())?;
    println!(
        "pre-trained {} epochs on {} samples; outputs in {}",
        cfg.pretrain.epochs,
        samples.len(),
        out.display()
    );
    Ok(())
}
