//! Downstream fine-tuning with cross-entropy, logit distillation, and
//! graph topology distillation.

mod gtd;
mod kernel;
mod metrics;
mod pairs;
mod trainer;

pub use gtd::{
    cross_entropy, cross_entropy_on_tape, finetune_loss, gtd_from_scores, gtd_loss,
    gtd_loss_on_tape, logits_distill, logits_distill_batch, logits_distill_on_tape,
};
pub use kernel::{kernel_similarity, pair_scores, pair_scores_on_tape, KernelKind, KernelSpec};
pub use metrics::{accuracy, auroc};
pub use pairs::{select_pairs, PairSets};
pub use trainer::{
    metrics_csv, DistillProbe,
    run_finetune, stratified_split, FinetuneData, FinetuneOutcome, MetricsRow,
    SplitMetrics, Splits,
};

use crate::error::{Error, Result};
use crate::numerics::adam::AdamParams;

/// Which parameters fine-tuning updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinetuneMode {
    /// All parameters.
    Tuned,
    /// Classifier head only.
    Frozen,
}

/// Fine-tuning and distillation hyperparameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub kernel: KernelSpec,
    /// Division-by-zero guard in the topology-distillation ratio.
    pub epsilon: f64,
    /// Pair-selection threshold applied after min-max normalization.
    pub theta: f64,
    /// Logit-distillation temperature.
    pub kd_temperature: f64,
    pub weight_ce: f64,
    pub weight_kd: f64,
    pub weight_gtd: f64,
    pub mode: FinetuneMode,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early-stopping patience on validation cross-entropy.
    pub patience: usize,
    pub adam: AdamParams,
    pub train_frac: f64,
    pub val_frac: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            kernel: KernelSpec::linear(),
            epsilon: 1e-8,
            theta: 0.2,
            kd_temperature: 2.0,
            weight_ce: 1.0,
            weight_kd: 1.0,
            weight_gtd: 1.0,
            mode: FinetuneMode::Tuned,
            batch_size: 32,
            max_epochs: 400,
            patience: 20,
            adam: AdamParams::default(),
            train_frac: 0.6,
            val_frac: 0.2,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon must be positive".to_string()));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::config("theta must lie in [0,1)".to_string()));
        }
        if !(self.kd_temperature > 0.0) {
            return Err(Error::config("KD temperature must be positive".to_string()));
        }
        if self.weight_ce < 0.0 || self.weight_kd < 0.0 || self.weight_gtd < 0.0 {
            return Err(Error::config("loss weights must be nonnegative".to_string()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::config("batch size and epochs must be positive".to_string()));
        }
        if !(self.train_frac > 0.0 && self.val_frac >= 0.0 && self.train_frac + self.val_frac < 1.0) {
            return Err(Error::config("split fractions must leave room for a test set".to_string()));
        }
        Ok(())
    }
}
