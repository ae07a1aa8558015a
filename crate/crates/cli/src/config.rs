//! Experiment configuration: one JSON document with every
//! hyperparameter explicit. `print-config` dumps the defaults.

use std::path::{Path, PathBuf};

use disgcmae::distill::DistillConfig;
use disgcmae::encoders::{EncoderConfig, EncoderFamily, ModelConfig, ModelTier};
use disgcmae::error::{Error, Result};
use disgcmae::graph::default_keep_set;
use disgcmae::pretrain::PretrainConfig;
use disgcmae::synth::{Band, SynthSpec};

/// Encoder selection for one side of the teacher/student pair.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ModelSpecConfig {
    pub family: EncoderFamily,
    pub tier: ModelTier,
    /// Desk-scale overrides; `null` keeps the tier dimension.
    pub layers: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub heads: Option<usize>,
}

impl Default for ModelSpecConfig {
    fn default() -> Self {
        ModelSpecConfig {
            family: EncoderFamily::Dgcnn,
            tier: ModelTier::Tiny,
            layers: None,
            hidden_dim: None,
            heads: None,
        }
    }
}

impl ModelSpecConfig {
    pub fn encoder_config(&self) -> EncoderConfig {
        let mut cfg = EncoderConfig::from_tier(self.family, self.tier);
        if let Some(l) = self.layers {
            cfg.layers = l;
        }
        if let Some(d) = self.hidden_dim {
            cfg.hidden_dim = d;
        }
        if let Some(h) = self.heads {
            cfg.heads = h;
        }
        cfg
    }
}

/// Dataset-generation settings (synthesis plus graph construction).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SynthDatasetConfig {
    pub spec: SynthSpec,
    pub band: Band,
    pub n_bins: usize,
    pub theta_a: f64,
    pub window_s: f64,
    pub overlap_s: f64,
    /// Also emit the full-length series as one extra sample per subject.
    pub include_full: bool,
}

impl Default for SynthDatasetConfig {
    fn default() -> Self {
        SynthDatasetConfig {
            spec: SynthSpec::default(),
            band: Band::alpha(),
            n_bins: 8,
            theta_a: 0.3,
            window_s: 50.0,
            overlap_s: 20.0,
            include_full: true,
        }
    }
}

/// The experiment document.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub synth: SynthDatasetConfig,
    pub hd_channels: usize,
    pub ld_channels: usize,
    /// JSON array of global electrode indices; `null` uses the evenly
    /// spread default keep-set.
    pub keep_set_file: Option<PathBuf>,
    pub teacher: ModelSpecConfig,
    pub student: ModelSpecConfig,
    pub contrastive_dim: usize,
    pub pretrain: PretrainConfig,
    pub distill: DistillConfig,
    /// Fine-tuning fans out over seed..seed+k.
    pub finetune_seeds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            synth: SynthDatasetConfig::default(),
            hd_channels: 64,
            ld_channels: 16,
            keep_set_file: None,
            teacher: ModelSpecConfig {
                family: EncoderFamily::Dgcnn,
                tier: ModelTier::Large,
                ..ModelSpecConfig::default()
            },
            student: ModelSpecConfig::default(),
            contrastive_dim: 64,
            pretrain: PretrainConfig::default(),
            distill: DistillConfig::default(),
            finetune_seeds: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&raw).map_err(|e| Error::config(format!("{}: {}", path.display(), e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.spec.validate()?;
        self.pretrain.validate()?;
        self.distill.validate()?;
        if self.ld_channels > self.hd_channels {
            return Err(Error::config(format!(
                "ld_channels {} exceeds hd_channels {}",
                self.ld_channels, self.hd_channels
            )));
        }
        if self.ld_channels == 0 {
            return Err(Error::config("ld_channels must be positive".to_string()));
        }
        if let Some(path) = &self.keep_set_file {
            if !path.exists() {
                return Err(Error::config(format!("keep-set file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// The LD keep-set: from the configured file or the spread default.
    pub fn keep_set(&self) -> Result<Vec<usize>> {
        let keep = match &self.keep_set_file {
            Some(path) => disgcmae::graph::read_keep_set(path)?,
            None => default_keep_set(self.hd_channels, self.ld_channels),
        };
        if keep.len() != self.ld_channels {
            return Err(Error::config(format!(
                "keep-set holds {} indices but ld_channels is {}",
                keep.len(),
                self.ld_channels
            )));
        }
        if keep.iter().any(|&k| k >= self.hd_channels) {
            return Err(Error::config("keep-set index outside the HD montage".to_string()));
        }
        Ok(keep)
    }

    pub fn teacher_model_config(&self, channels: usize, feat_dim: usize) -> ModelConfig {
        ModelConfig {
            encoder: self.teacher.encoder_config(),
            feat_dim,
            n_electrodes: channels,
            contrastive_dim: self.contrastive_dim,
            n_classes: 2,
        }
    }

    pub fn student_model_config(&self, channels: usize, feat_dim: usize) -> ModelConfig {
        ModelConfig {
            encoder: self.student.encoder_config(),
            feat_dim,
            n_electrodes: channels,
            contrastive_dim: self.contrastive_dim,
            n_classes: 2,
        }
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_validate() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let json = cfg.to_pretty_json();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        back.validate().unwrap();
        assert_eq!(back.hd_channels, 64);
        assert_eq!(back.keep_set().unwrap().len(), 16);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seed": 9, "ld_channels": 32}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.ld_channels, 32);
        assert_eq!(cfg.pretrain.epochs, 200);
    }

    #[test]
    fn h2h_config_is_allowed() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"hd_channels": 16, "ld_channels": 16, "synth": {"spec": {"channels": 16, "group_a": [0,1], "group_b": [14,15], "bridge": [1]}}}"#)
                .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.keep_set().unwrap(), (0..16).collect::<Vec<_>>());
    }
}
