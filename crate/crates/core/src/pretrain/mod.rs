//! Unified contrastive + masked-autoencoder pre-training of the
//! teacher/student encoder pair over a shared momentum key queue.

mod losses;
mod queue;
mod trainer;

pub use losses::{info_nce, info_nce_on_tape, reconstruction_loss, reconstruction_loss_on_tape};
pub use queue::{KeyQueue, QueueEntry};
pub use trainer::{
    pretrain_step, run_pretraining, PretrainModels, PretrainOutcome, PretrainProbe, StepLosses,
};

use crate::error::{Error, Result};
use crate::numerics::adam::AdamParams;

/// Pre-training hyperparameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    /// InfoNCE temperature τ.
    pub temperature: f64,
    /// Key queue capacity K.
    pub queue_capacity: usize,
    /// Key-encoder momentum.
    pub momentum: f64,
    pub node_drop_ratio: f64,
    pub edge_drop_ratio: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamParams,
    /// Weight on the joint contrastive term (0 disables it).
    pub weight_cl: f64,
    /// Weight on the joint reconstruction term (0 disables it).
    pub weight_rec: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            temperature: 0.07,
            queue_capacity: 1024,
            momentum: 0.999,
            node_drop_ratio: 0.5,
            edge_drop_ratio: 0.5,
            batch_size: 128,
            epochs: 200,
            adam: AdamParams::default(),
            weight_cl: 1.0,
            weight_rec: 1.0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::config("temperature must be positive".to_string()));
        }
        if self.queue_capacity < self.batch_size {
            return Err(Error::config(format!(
                "queue capacity {} must be ≥ batch size {}",
                self.queue_capacity, self.batch_size
            )));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0,1]".to_string()));
        }
        if !(0.0..1.0).contains(&self.node_drop_ratio) || !(0.0..1.0).contains(&self.edge_drop_ratio) {
            return Err(Error::config("drop ratios must lie in [0,1)".to_string()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::config("batch size and epochs must be positive".to_string()));
        }
        if self.weight_cl < 0.0 || self.weight_rec < 0.0 {
            return Err(Error::config("loss weights must be nonnegative".to_string()));
        }
        Ok(())
    }
}

/// Per-epoch loss components. The total equals the weighted sum of the
/// four components on every step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub l_cl_t: f64,
    pub l_cl_s: f64,
    pub l_rec_t: f64,
    pub l_rec_s: f64,
    pub l_pretrain: f64,
}

/// Loss trajectory of one pre-training run.
#[derive(Debug, Clone, Default)]
pub struct LossReport {
    pub epochs: Vec<EpochLoss>,
}

impl LossReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,l_cl_t,l_cl_s,l_rec_t,l_rec_s,l_pretrain\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch, e.l_cl_t, e.l_cl_s, e.l_rec_t, e.l_rec_s, e.l_pretrain
            ));
        }
        out
    }
}
