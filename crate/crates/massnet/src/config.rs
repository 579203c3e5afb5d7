//! Experiment configuration files: one TOML document drives a full run.
//!
//! The file mirrors the sub-config types directly:
//!
//! ```toml
//! output_dir = "runs/slp"
//!
//! [dataset]
//! path = "data/slp"
//! format = "slp_pm"
//!
//! [split]
//! strategy = "weight_binned"   # weight_binned | loso | random_kfold
//! n_bins = 10
//! seed = 0
//!
//! [preprocess]
//! upsample_factor = 1
//! gaussian_kernel = 5
//! gaussian_sigma = 1.0
//! target_rows = 192
//! target_cols = 192
//! normalization = "per_dataset_max"
//!
//! [model]
//! n_sensing_layers = 4
//!
//! [train]
//! base_lr = 3e-4
//! batch_size = 16
//! lambda = 0.25
//! tau = 0.1
//! ```
//!
//! Presets bundle the per-dataset defaults: learning rate 3e-4 with 4 sensing
//! layers for the SLP-style run, 5e-4 with 8 layers for leave-one-subject-out,
//! 2e-4 with 6 layers for the random split. Missing keys fall back to these
//! defaults, so a minimal file only names the dataset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DatasetFormat;
use crate::error::ConfigError;
use crate::network::ModelConfig;
use crate::preprocess::PreprocessConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRef {
    pub path: PathBuf,
    pub format: DatasetFormat,
}

/// Which split strategy to apply, with its parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    /// `weight_binned`, `loso`, or `random_kfold`.
    pub strategy: String,
    pub n_bins: usize,
    pub seed: u64,
    /// Held-out subject for `loso`.
    pub held_subject: Option<String>,
    pub k: usize,
    /// Which fold acts as the test set for `random_kfold`.
    pub fold: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            strategy: "weight_binned".into(),
            n_bins: 10,
            seed: 0,
            held_subject: None,
            k: 5,
            fold: 0,
        }
    }
}

/// Everything one experiment needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetRef,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/experiment")
}

impl ExperimentConfig {
    /// Defaults for an SLP-style run: 192x84 frames are padded (not
    /// upsampled) to 192x192; 4 sensing layers; learning rate 3e-4.
    pub fn slp_preset(dataset_path: impl Into<PathBuf>) -> Self {
        Self {
            dataset: DatasetRef {
                path: dataset_path.into(),
                format: DatasetFormat::SlpPm,
            },
            split: SplitConfig::default(),
            preprocess: PreprocessConfig {
                upsample_factor: 1,
                ..PreprocessConfig::default()
            },
            model: ModelConfig {
                n_sensing_layers: 4,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                base_lr: 3e-4,
                ..TrainConfig::default()
            },
            output_dir: PathBuf::from("runs/slp"),
        }
    }

    /// Defaults for leave-one-subject-out on the native static set: 3x
    /// upsampling, 8 sensing layers, learning rate 5e-4.
    pub fn loso_preset(dataset_path: impl Into<PathBuf>, held_subject: impl Into<String>) -> Self {
        Self {
            dataset: DatasetRef {
                path: dataset_path.into(),
                format: DatasetFormat::MassnetStatic,
            },
            split: SplitConfig {
                strategy: "loso".into(),
                held_subject: Some(held_subject.into()),
                ..SplitConfig::default()
            },
            preprocess: PreprocessConfig::default(),
            model: ModelConfig {
                n_sensing_layers: 8,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                base_lr: 5e-4,
                ..TrainConfig::default()
            },
            output_dir: PathBuf::from("runs/loso"),
        }
    }

    /// Defaults for the sample-level random split: 3x upsampling, 6 sensing
    /// layers, learning rate 2e-4, 5-fold cross-validation.
    pub fn random_preset(dataset_path: impl Into<PathBuf>) -> Self {
        Self {
            dataset: DatasetRef {
                path: dataset_path.into(),
                format: DatasetFormat::MassnetStatic,
            },
            split: SplitConfig {
                strategy: "random_kfold".into(),
                ..SplitConfig::default()
            },
            preprocess: PreprocessConfig::default(),
            model: ModelConfig {
                n_sensing_layers: 6,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                base_lr: 2e-4,
                ..TrainConfig::default()
            },
            output_dir: PathBuf::from("runs/random"),
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        if !path.exists() {
            return Err(ConfigError::NotFound {
                path: path.to_path_buf(),
            });
        }
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn validate(&self, path: &Path) -> Result<(), ConfigError> {
        let invalid = |message: String| ConfigError::Invalid {
            path: path.to_path_buf(),
            message,
        };
        self.model.validate().map_err(|e| invalid(e.to_string()))?;
        self.train.validate().map_err(|e| invalid(e.to_string()))?;
        self.preprocess
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        match self.split.strategy.as_str() {
            "weight_binned" | "random_kfold" => {}
            "loso" => {
                if self.split.held_subject.is_none() {
                    return Err(invalid("loso split needs held_subject".into()));
                }
            }
            other => {
                return Err(invalid(format!(
                    "unknown split strategy {other:?}; expected weight_binned, loso, random_kfold"
                )));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("serializable config")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    #[test]
    fn presets_carry_per_dataset_hyperparameters() {
        let slp = ExperimentConfig::slp_preset("data/slp");
        assert_eq!(slp.model.n_sensing_layers, 4);
        assert_eq!(slp.train.base_lr, 3e-4);
        assert_eq!(slp.preprocess.upsample_factor, 1);
        assert_eq!(slp.train.lambda, 0.25);
        assert_eq!(slp.train.batch_size, 16);

        let loso = ExperimentConfig::loso_preset("data/native", "s01");
        assert_eq!(loso.model.n_sensing_layers, 8);
        assert_eq!(loso.train.base_lr, 5e-4);
        assert_eq!(loso.preprocess.upsample_factor, 3);

        let random = ExperimentConfig::random_preset("data/native");
        assert_eq!(random.model.n_sensing_layers, 6);
        assert_eq!(random.train.base_lr, 2e-4);
        assert_eq!(random.split.k, 5);
    }

    #[test]
    fn toml_round_trip() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("exp.toml");
        let cfg = ExperimentConfig::loso_preset("data/native", "s03");
        std::fs::write(&path, cfg.to_toml()).unwrap();
        let back = ExperimentConfig::load(&path).unwrap();
        assert_eq!(back.model, cfg.model);
        assert_eq!(back.train.base_lr, cfg.train.base_lr);
        assert_eq!(back.split.held_subject.as_deref(), Some("s03"));
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(
            &path,
            "[dataset]\npath = \"d\"\nformat = \"synthetic\"\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.split.strategy, "weight_binned");
    }

    #[test]
    fn missing_file_is_a_named_error() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/exp.toml")).unwrap_err();
        assert!(err.to_string().contains("exp.toml"));
        assert!(matches!(err, ConfigError::NotFound { .. }));
    }

    #[test]
    fn invalid_strategy_is_rejected() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(
            &path,
            "[dataset]\npath = \"d\"\nformat = \"synthetic\"\n[split]\nstrategy = \"bogus\"\n",
        )
        .unwrap();
        assert!(ExperimentConfig::load(&path).is_err());
    }
}
