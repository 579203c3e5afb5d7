//! Optimizer schedule, the dual-loss training loop, checkpointing, and early
//! stopping.
//!
//! Each step draws a batch of samples and builds two independently augmented
//! views per sample; both views share the sample's subject id and weight.
//! The 2N views run through the network together, the MAE loss applies to all
//! predictions and the contrastive loss to all embeddings, and Adam updates
//! every parameter at the scheduled learning rate. The learning rate warms up
//! linearly for `warmup_epochs`, then steps down by `decay_factor` every
//! `decay_every` epochs.
//!
//! Training is fully deterministic for a given seed: batch order, augmentation
//! draws, and parameter updates all derive from one seeded RNG consumed in a
//! fixed order (parallelism inside the math kernels never reorders
//! reductions).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Array4};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::error::TrainError;
use crate::losses::{mae_loss_with_grad, masscon_loss_with_grad, overall_loss, ContrastiveBatch};
use crate::network::{save_checkpoint, CheckpointMeta, MassNet};
use crate::preprocess::{preprocess_pipeline, random_augment, AugmentConfig, PreprocessConfig};

/// Momentum for batch-norm running statistics.
const BN_MOMENTUM: f64 = 0.1;

/// All training hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation-MAE improvement before stopping; ignored
    /// when there is no validation set.
    pub early_stop_patience: usize,
    /// Weight of the contrastive term in the overall loss.
    pub lambda: f64,
    /// Contrastive temperature.
    pub tau: f64,
    /// Weight-gap penalty on (true) or plain supervised contrastive (false).
    pub penalty_enabled: bool,
    /// Initialize the regressor bias to the mean training weight.
    pub init_bias_to_mean: bool,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 3e-4,
            decay_factor: 0.25,
            decay_every: 5,
            warmup_epochs: 3,
            batch_size: 16,
            max_epochs: 60,
            early_stop_patience: 15,
            lambda: 0.25,
            tau: 0.1,
            penalty_enabled: true,
            init_bias_to_mean: true,
            seed: 0,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let err = |m: String| Err(TrainError::Config(m));
        if self.base_lr <= 0.0 || self.decay_factor <= 0.0 {
            return err("learning rates must be > 0".into());
        }
        if self.decay_every == 0 {
            return err("decay_every must be >= 1".into());
        }
        if self.batch_size < 2 {
            return err(format!(
                "batch_size must be >= 2 for contrastive pairs, got {}",
                self.batch_size
            ));
        }
        if self.max_epochs == 0 {
            return err("max_epochs must be >= 1".into());
        }
        if self.lambda < 0.0 {
            return err(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.tau <= 0.0 {
            return err(format!("tau must be > 0, got {}", self.tau));
        }
        Ok(())
    }
}

/// Learning rate at `epoch`: linear warm-up to `base_lr`, then step decay
/// with post-warm-up epochs numbered from zero.
pub fn lr_at_epoch(cfg: &TrainConfig, epoch: usize) -> f64 {
    if epoch < cfg.warmup_epochs {
        return cfg.base_lr * (epoch + 1) as f64 / cfg.warmup_epochs as f64;
    }
    let e_post = epoch - cfg.warmup_epochs;
    cfg.base_lr * cfg.decay_factor.powi((e_post / cfg.decay_every) as i32)
}

/// One epoch of the training history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub l_mae: f64,
    pub l_con: f64,
    pub l_all: f64,
    pub val_mae: Option<f64>,
    pub val_mape: Option<f64>,
}

/// Progress and results of a training run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainState {
    /// Completed epochs.
    pub epoch: usize,
    pub best_val_mae: Option<f64>,
    pub history: Vec<EpochRecord>,
}

/// Adam with bias correction; state lives in two structural twins of the
/// model.
pub struct Adam {
    m: MassNet,
    v: MassNet,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(model: &MassNet) -> Self {
        Self {
            m: model.zeros_like(),
            v: model.zeros_like(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, model: &mut MassNet, grads: &mut MassNet, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let params = model.collect_params();
        let gs = grads.collect_params();
        let ms = self.m.collect_params();
        let vs = self.v.collect_params();
        for (((p, g), m), v) in params.into_iter().zip(gs).zip(ms).zip(vs) {
            debug_assert_eq!(p.0, g.0);
            debug_assert_eq!(p.0, m.0);
            for i in 0..p.1.len() {
                let grad = g.1[i];
                m.1[i] = self.beta1 * m.1[i] + (1.0 - self.beta1) * grad;
                v.1[i] = self.beta2 * v.1[i] + (1.0 - self.beta2) * grad * grad;
                let mhat = m.1[i] / bc1;
                let vhat = v.1[i] / bc2;
                p.1[i] -= lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Preprocessed tensors for one set of views.
pub struct ViewBatch {
    pub frames: Array4<f64>,
    pub joints: Array2<f64>,
    pub weights: Vec<f64>,
    pub subjects: Vec<String>,
}

/// Preprocess `samples` (no augmentation) into stacked network inputs.
pub fn prepare_batch(
    samples: &[Sample],
    prep: &PreprocessConfig,
    dataset_max: f64,
    joint_count: usize,
) -> Result<ViewBatch, TrainError> {
    let n = samples.len();
    let mut frames = Array4::zeros((n, 1, prep.target_rows, prep.target_cols));
    let mut joints = Array2::zeros((n, 2 * joint_count));
    let mut weights = Vec::with_capacity(n);
    let mut subjects = Vec::with_capacity(n);
    for (i, sample) in samples.iter().enumerate() {
        let processed = preprocess_pipeline(sample, prep, dataset_max, joint_count)?;
        frames
            .index_axis_mut(ndarray::Axis(0), i)
            .index_axis_mut(ndarray::Axis(0), 0)
            .assign(&processed.frame);
        joints.row_mut(i).assign(&processed.joints);
        weights.push(sample.weight_kg);
        subjects.push(sample.subject_id.clone());
    }
    Ok(ViewBatch {
        frames,
        joints,
        weights,
        subjects,
    })
}

/// Largest raw cell value over the samples (per-dataset-max normalization).
pub fn dataset_max(samples: &[Sample]) -> f64 {
    samples
        .iter()
        .map(|s| s.frame.max())
        .fold(0.0, f64::max)
        .max(1e-12)
}

/// Mean absolute error and mean absolute percentage error of inference-mode
/// predictions over `samples`.
pub fn evaluate_mae_mape(
    model: &MassNet,
    samples: &[Sample],
    prep: &PreprocessConfig,
    data_max: f64,
) -> Result<(f64, f64), TrainError> {
    let batch = prepare_batch(samples, prep, data_max, model.cfg.joint_count)?;
    let preds = model.predict(Some(&batch.frames), Some(&batch.joints))?;
    let mut mae = 0.0;
    let mut mape = 0.0;
    for (p, t) in preds.iter().zip(&batch.weights) {
        mae += (p - t).abs();
        mape += (p - t).abs() / t * 100.0;
    }
    let n = samples.len() as f64;
    Ok((mae / n, mape / n))
}

/// Train `model` in place. `run_dir`, when given, receives
/// `history.jsonl`, `ckpt_last`, and (with a validation set) `ckpt_best`.
pub fn train_model(
    model: &mut MassNet,
    train: &[Sample],
    val: &[Sample],
    prep: &PreprocessConfig,
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
) -> Result<TrainState, TrainError> {
    cfg.validate()?;
    prep.validate()?;
    if train.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    if cfg.batch_size > train.len() {
        return Err(TrainError::Config(format!(
            "batch_size {} exceeds training set size {}",
            cfg.batch_size,
            train.len()
        )));
    }

    let data_max = dataset_max(train);
    let meta = CheckpointMeta {
        model: model.cfg.clone(),
        preprocess: Some(prep.clone()),
        dataset_max: Some(data_max),
    };

    if cfg.init_bias_to_mean {
        let mean = train.iter().map(|s| s.weight_kg).sum::<f64>() / train.len() as f64;
        model.regressor.bias[0] = mean;
    }

    let mut history_file = match run_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|source| TrainError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
            // an initial last-good checkpoint, so aborts always leave one
            save_checkpoint(model, &meta, &dir.join("ckpt_last"))?;
            let path = dir.join("history.jsonl");
            Some((
                fs::File::create(&path).map_err(|source| TrainError::Io {
                    path: path.clone(),
                    source,
                })?,
                path,
            ))
        }
        None => None,
    };

    let joint_count = model.cfg.joint_count;
    let use_contrastive = cfg.lambda > 0.0 && model.cfg.use_deep_branch;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model);
    let mut state = TrainState::default();
    let mut epochs_since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        let lr = lr_at_epoch(cfg, epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        let mut sum_mae = 0.0;
        let mut sum_con = 0.0;
        let mut sum_all = 0.0;
        let mut steps = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            // two augmented views per drawn sample, same label and subject
            let mut views: Vec<Sample> = Vec::with_capacity(chunk.len() * 2);
            for &idx in chunk {
                for _ in 0..2 {
                    views.push(random_augment(&train[idx], &cfg.augment, &mut rng)?);
                }
            }
            let batch = prepare_batch(&views, prep, data_max, joint_count)?;

            let (out, cache) = model.forward_train(Some(&batch.frames), Some(&batch.joints))?;
            if out.predictions.iter().any(|v| !v.is_finite())
                || out
                    .embeddings
                    .as_ref()
                    .is_some_and(|e| e.iter().any(|v| !v.is_finite()))
            {
                return Err(TrainError::Diverged { epoch, step: steps });
            }
            let preds: Vec<f64> = out.predictions.to_vec();
            let (l_mae, dpred) = mae_loss_with_grad(&preds, &batch.weights)?;

            let (l_con, demb) = if use_contrastive {
                let embeddings = out.embeddings.as_ref().expect("deep branch embeddings");
                let contrastive = ContrastiveBatch {
                    embeddings: embeddings.view(),
                    subject_ids: &batch.subjects,
                    weights_kg: &batch.weights,
                    temperature: cfg.tau,
                    penalty_enabled: cfg.penalty_enabled,
                };
                let (l, g) = masscon_loss_with_grad(&contrastive)?;
                (l, Some(g * cfg.lambda))
            } else {
                (0.0, None)
            };

            let breakdown = overall_loss(l_mae, l_con, cfg.lambda)?;
            if !breakdown.l_all.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    step: steps,
                });
            }

            let mut grads = model.zeros_like();
            let dpred: Array1<f64> = dpred;
            model.backward(
                Some(&batch.frames),
                Some(&batch.joints),
                &cache,
                &dpred,
                demb.as_ref(),
                &mut grads,
            );
            adam.step(model, &mut grads, lr);
            model.update_running(&cache, BN_MOMENTUM);

            sum_mae += breakdown.l_mae;
            sum_con += breakdown.l_con;
            sum_all += breakdown.l_all;
            steps += 1;
        }

        let inv = 1.0 / steps.max(1) as f64;
        let (val_mae, val_mape) = if val.is_empty() {
            (None, None)
        } else {
            let (mae, mape) = evaluate_mae_mape(model, val, prep, data_max)?;
            (Some(mae), Some(mape))
        };

        let record = EpochRecord {
            epoch,
            lr,
            l_mae: sum_mae * inv,
            l_con: sum_con * inv,
            l_all: sum_all * inv,
            val_mae,
            val_mape,
        };
        if let Some((file, path)) = &mut history_file {
            let line = serde_json::to_string(&record)
                .map_err(|e| TrainError::Config(format!("history serialization: {e}")))?;
            writeln!(file, "{line}").map_err(|source| TrainError::Io {
                path: path.clone(),
                source,
            })?;
        }
        state.history.push(record);
        state.epoch = epoch + 1;

        if let Some(dir) = run_dir {
            save_checkpoint(model, &meta, &dir.join("ckpt_last"))?;
        }
        if let Some(mae) = val_mae {
            let improved = state.best_val_mae.is_none_or(|best| mae < best);
            if improved {
                state.best_val_mae = Some(mae);
                epochs_since_best = 0;
                if let Some(dir) = run_dir {
                    save_checkpoint(model, &meta, &dir.join("ckpt_best"))?;
                }
            } else {
                epochs_since_best += 1;
                if epochs_since_best >= cfg.early_stop_patience {
                    break;
                }
            }
        }
    }

    Ok(state)
}

/// Save-then-load convenience used by callers that only need the round trip.
pub fn checkpoint_roundtrip(
    model: &MassNet,
    meta: &CheckpointMeta,
    path: &PathBuf,
) -> Result<MassNet, TrainError> {
    save_checkpoint(model, meta, path)?;
    Ok(crate::network::load_checkpoint(path)?.model)
}
