//! Metrics, classical baselines, and the ablation harness.
//!
//! [`compute_metrics`] reports MAE (kg) and MAPE (%) with population-sigma
//! spreads plus per-posture and per-subject breakdowns. Baselines implement
//! the same [`WeightRegressor`] trait as the trained network, so reference
//! architectures can plug in without touching the evaluation path:
//!
//! - [`LinearFit`]: least-squares weight on the frame value sum. Exact in an
//!   ideal linear world, badly biased once the sensor saturates.
//! - [`StatFeatureRegressor`]: ridge regression over 14 hand-designed frame
//!   statistics (sum, mean, std, max, contact area, nonzero percentiles,
//!   centroid, spreads, peak count).
//!
//! [`run_ablation`] re-trains the network across one study axis per call:
//! branch contributions, contrastive-loss variants, sensing-layer depth scan,
//! or joint-noise robustness. Every cell shares the same seed so rows differ
//! only in the ablated component.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Posture, PressureFrame, Sample};
use crate::error::EvalError;
use crate::network::{MassNet, ModelConfig};
use crate::preprocess::{inject_joint_noise, preprocess_pipeline, sigma_for_l1, PreprocessConfig};
use crate::training::{dataset_max, prepare_batch, train_model, EpochRecord, TrainConfig};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Per-group error summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub mae: f64,
    pub mape: f64,
    pub n: usize,
}

/// Full evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae_mean: f64,
    /// Population sigma of per-sample absolute errors.
    pub mae_std: f64,
    pub mape_mean: f64,
    pub mape_std: f64,
    pub n: usize,
    pub per_posture: BTreeMap<Posture, GroupMetrics>,
    /// Subject id -> (mae, n).
    pub per_subject: BTreeMap<String, (f64, usize)>,
}

fn population_std(values: &[f64], mean: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64).sqrt()
}

/// MAE/MAPE with per-posture and per-subject breakdowns.
pub fn compute_metrics(
    preds: &[f64],
    targets: &[f64],
    postures: &[Posture],
    subjects: &[String],
) -> Result<MetricsReport, EvalError> {
    let n = preds.len();
    if n == 0 || targets.len() != n || postures.len() != n || subjects.len() != n {
        return Err(EvalError::InvalidArgument(format!(
            "inconsistent lengths: preds {n}, targets {}, postures {}, subjects {}",
            targets.len(),
            postures.len(),
            subjects.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t <= 0.0) {
        return Err(EvalError::InvalidArgument(format!(
            "target {t} <= 0: MAPE undefined"
        )));
    }

    let abs_errors: Vec<f64> = preds.iter().zip(targets).map(|(p, t)| (p - t).abs()).collect();
    let pct_errors: Vec<f64> = abs_errors
        .iter()
        .zip(targets)
        .map(|(e, t)| e / t * 100.0)
        .collect();
    let mae_mean = abs_errors.iter().sum::<f64>() / n as f64;
    let mape_mean = pct_errors.iter().sum::<f64>() / n as f64;

    let mut per_posture: BTreeMap<Posture, (f64, f64, usize)> = BTreeMap::new();
    let mut per_subject: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for i in 0..n {
        let entry = per_posture.entry(postures[i]).or_insert((0.0, 0.0, 0));
        entry.0 += abs_errors[i];
        entry.1 += pct_errors[i];
        entry.2 += 1;
        let s = per_subject.entry(subjects[i].clone()).or_insert((0.0, 0));
        s.0 += abs_errors[i];
        s.1 += 1;
    }

    Ok(MetricsReport {
        mae_mean,
        mae_std: population_std(&abs_errors, mae_mean),
        mape_mean,
        mape_std: population_std(&pct_errors, mape_mean),
        n,
        per_posture: per_posture
            .into_iter()
            .map(|(p, (mae, mape, count))| {
                (
                    p,
                    GroupMetrics {
                        mae: mae / count as f64,
                        mape: mape / count as f64,
                        n: count,
                    },
                )
            })
            .collect(),
        per_subject: per_subject
            .into_iter()
            .map(|(s, (mae, count))| (s, (mae / count as f64, count)))
            .collect(),
    })
}

impl MetricsReport {
    /// Plain-text rendering for terminal output.
    pub fn render_text(&self) -> String {
        let mut out = format!(
            "n = {}\nMAE  = {:.3} ± {:.3} kg\nMAPE = {:.3} ± {:.3} %\n",
            self.n, self.mae_mean, self.mae_std, self.mape_mean, self.mape_std
        );
        if !self.per_posture.is_empty() {
            out.push_str("per posture:\n");
            for (p, g) in &self.per_posture {
                out.push_str(&format!(
                    "  {:<11} mae {:.3} kg  mape {:.3} %  (n = {})\n",
                    p.to_string(),
                    g.mae,
                    g.mape,
                    g.n
                ));
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Regressor interface + baselines
// ---------------------------------------------------------------------------

/// Anything that can map a sample to a weight estimate. Reference
/// architectures plug in through this trait.
pub trait WeightRegressor {
    fn name(&self) -> &str;

    fn predict_sample(&self, sample: &Sample) -> Result<f64, EvalError>;

    /// Batched prediction; the default loops over samples.
    fn predict_batch(&self, samples: &[Sample]) -> Result<Vec<f64>, EvalError> {
        samples.iter().map(|s| self.predict_sample(s)).collect()
    }
}

/// Least-squares fit of `weight = a * sum(frame) + b`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinearFit {
    /// kg per sensor unit.
    pub a: f64,
    /// kg.
    pub b: f64,
}

/// Fit the linear baseline on (frame-sum, weight) pairs.
pub fn linear_fit_baseline(train: &[Sample]) -> Result<LinearFit, EvalError> {
    if train.len() < 2 {
        return Err(EvalError::DegenerateFit(format!(
            "need at least 2 training samples, got {}",
            train.len()
        )));
    }
    let sums: Vec<f64> = train.iter().map(|s| s.frame.sum()).collect();
    let weights: Vec<f64> = train.iter().map(|s| s.weight_kg).collect();
    let n = sums.len() as f64;
    let mean_s = sums.iter().sum::<f64>() / n;
    let mean_w = weights.iter().sum::<f64>() / n;
    let var_s: f64 = sums.iter().map(|s| (s - mean_s) * (s - mean_s)).sum();
    if var_s < 1e-12 {
        return Err(EvalError::DegenerateFit(
            "all frame sums are identical".into(),
        ));
    }
    let cov: f64 = sums
        .iter()
        .zip(&weights)
        .map(|(s, w)| (s - mean_s) * (w - mean_w))
        .sum();
    let a = cov / var_s;
    Ok(LinearFit {
        a,
        b: mean_w - a * mean_s,
    })
}

impl WeightRegressor for LinearFit {
    fn name(&self) -> &str {
        "linear_fit"
    }

    fn predict_sample(&self, sample: &Sample) -> Result<f64, EvalError> {
        Ok(self.a * sample.frame.sum() + self.b)
    }
}

/// The 14 frame statistics used by the statistical-features baseline
/// (reconstruction): sum, mean, std, max, contact area, 25/50/75/90th
/// percentiles of nonzero values, centroid row/col, row/col spread, and the
/// count of strict local maxima above half the peak.
pub fn statistical_features(frame: &PressureFrame) -> [f64; 14] {
    let values = frame.values();
    let (rows, cols) = (frame.rows(), frame.cols());
    let n = (rows * cols) as f64;

    let sum = frame.sum();
    let mean = sum / n;
    let std = population_std(values.as_slice().expect("standard layout"), mean);
    let max = frame.max();

    let nonzero: Vec<f64> = values.iter().cloned().filter(|&v| v > 0.0).collect();
    let contact_area = nonzero.len() as f64;
    let pct = |q: f64| {
        if nonzero.is_empty() {
            0.0
        } else {
            crate::synthetic::quantile(&nonzero, q)
        }
    };

    // mass-weighted centroid and spread; an all-zero frame centers them
    let (mut cr, mut cc) = (0.0, 0.0);
    if sum > 0.0 {
        for ((r, c), &v) in values.indexed_iter() {
            cr += r as f64 * v;
            cc += c as f64 * v;
        }
        cr /= sum;
        cc /= sum;
    } else {
        cr = (rows as f64 - 1.0) / 2.0;
        cc = (cols as f64 - 1.0) / 2.0;
    }
    let (mut sr, mut sc) = (0.0, 0.0);
    if sum > 0.0 {
        for ((r, c), &v) in values.indexed_iter() {
            sr += (r as f64 - cr) * (r as f64 - cr) * v;
            sc += (c as f64 - cc) * (c as f64 - cc) * v;
        }
        sr = (sr / sum).sqrt();
        sc = (sc / sum).sqrt();
    }

    // strict local maxima above half the peak
    let mut peaks = 0.0;
    if max > 0.0 {
        for r in 0..rows {
            for c in 0..cols {
                let v = values[(r, c)];
                if v < 0.5 * max {
                    continue;
                }
                let mut is_peak = true;
                'scan: for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr >= 0
                            && nc >= 0
                            && (nr as usize) < rows
                            && (nc as usize) < cols
                            && values[(nr as usize, nc as usize)] >= v
                        {
                            is_peak = false;
                            break 'scan;
                        }
                    }
                }
                if is_peak {
                    peaks += 1.0;
                }
            }
        }
    }

    [
        sum,
        mean,
        std,
        max,
        contact_area,
        pct(0.25),
        pct(0.50),
        pct(0.75),
        pct(0.90),
        cr,
        cc,
        sr,
        sc,
        peaks,
    ]
}

/// Ridge regression over the 14 statistical features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatFeatureRegressor {
    /// Weights over standardized features plus intercept (last entry).
    weights: Vec<f64>,
    feature_mean: Vec<f64>,
    feature_std: Vec<f64>,
}

impl StatFeatureRegressor {
    /// Fit with a small ridge penalty on standardized features.
    pub fn fit(train: &[Sample]) -> Result<Self, EvalError> {
        if train.len() < 2 {
            return Err(EvalError::DegenerateFit(format!(
                "need at least 2 training samples, got {}",
                train.len()
            )));
        }
        let d = 14usize;
        let rows: Vec<[f64; 14]> = train
            .iter()
            .map(|s| statistical_features(&s.frame))
            .collect();
        let targets: Vec<f64> = train.iter().map(|s| s.weight_kg).collect();
        let n = rows.len() as f64;

        let mut mean = vec![0.0; d];
        for row in &rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for row in &rows {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in &mut std {
            *s = s.sqrt().max(1e-9);
        }

        // normal equations with an intercept column
        let k = d + 1;
        let mut xtx = vec![vec![0.0; k]; k];
        let mut xty = vec![0.0; k];
        for (row, &t) in rows.iter().zip(&targets) {
            let mut x = [0.0; 15];
            for j in 0..d {
                x[j] = (row[j] - mean[j]) / std[j];
            }
            x[d] = 1.0;
            for i in 0..k {
                for j in 0..k {
                    xtx[i][j] += x[i] * x[j];
                }
                xty[i] += x[i] * t;
            }
        }
        let ridge = 1e-6 * n;
        for (i, row) in xtx.iter_mut().enumerate().take(d) {
            row[i] += ridge;
        }

        let weights = solve_linear(xtx, xty)
            .ok_or_else(|| EvalError::DegenerateFit("singular normal equations".into()))?;
        Ok(Self {
            weights,
            feature_mean: mean,
            feature_std: std,
        })
    }
}

impl WeightRegressor for StatFeatureRegressor {
    fn name(&self) -> &str {
        "statistical_features"
    }

    fn predict_sample(&self, sample: &Sample) -> Result<f64, EvalError> {
        let feats = statistical_features(&sample.frame);
        let mut acc = self.weights[14];
        for j in 0..14 {
            acc += self.weights[j] * (feats[j] - self.feature_mean[j]) / self.feature_std[j];
        }
        Ok(acc)
    }
}

/// Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// A trained network bundled with its preprocessing context.
pub struct TrainedModel {
    pub model: MassNet,
    pub preprocess: PreprocessConfig,
    pub dataset_max: f64,
}

impl WeightRegressor for TrainedModel {
    fn name(&self) -> &str {
        "massnet"
    }

    fn predict_sample(&self, sample: &Sample) -> Result<f64, EvalError> {
        Ok(self.predict_batch(std::slice::from_ref(sample))?[0])
    }

    fn predict_batch(&self, samples: &[Sample]) -> Result<Vec<f64>, EvalError> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(32) {
            let batch = prepare_batch(
                chunk,
                &self.preprocess,
                self.dataset_max,
                self.model.cfg.joint_count,
            )?;
            let preds = self
                .model
                .predict(Some(&batch.frames), Some(&batch.joints))
                .map_err(crate::error::TrainError::from)?;
            out.extend(preds.iter().cloned());
        }
        Ok(out)
    }
}

/// Run a regressor over a test set and report metrics with breakdowns.
pub fn evaluate_report(
    regressor: &dyn WeightRegressor,
    test: &[Sample],
) -> Result<MetricsReport, EvalError> {
    if test.is_empty() {
        return Err(EvalError::InvalidArgument("empty test set".into()));
    }
    let preds = regressor.predict_batch(test)?;
    let targets: Vec<f64> = test.iter().map(|s| s.weight_kg).collect();
    let postures: Vec<Posture> = test.iter().map(|s| s.posture).collect();
    let subjects: Vec<String> = test.iter().map(|s| s.subject_id.clone()).collect();
    compute_metrics(&preds, &targets, &postures, &subjects)
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

/// Study axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    /// Joint-only, mass-only, dual.
    Branches,
    /// No contrastive loss, plain supervised contrastive, weight-penalized.
    LossVariant,
    /// Sensing-layer count 0 through 12.
    DepthScan,
    /// Joint-noise sigma grid emulating pose-estimator error.
    JointNoise,
}

impl std::str::FromStr for AblationAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "branches" => Ok(AblationAxis::Branches),
            "loss_variant" => Ok(AblationAxis::LossVariant),
            "depth_scan" => Ok(AblationAxis::DepthScan),
            "joint_noise" => Ok(AblationAxis::JointNoise),
            other => Err(format!(
                "unknown axis {other:?}; expected branches, loss_variant, depth_scan, joint_noise"
            )),
        }
    }
}

/// Everything one training run needs besides the data.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub preprocess: PreprocessConfig,
}

/// One ablation row: the varied configuration, its test metrics, and the
/// training history (rows are comparable because all cells share a seed).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationCell {
    pub label: String,
    pub report: MetricsReport,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,mae_mean,mae_std,mape_mean,mape_std,n\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6},{}\n",
                cell.label,
                cell.report.mae_mean,
                cell.report.mae_std,
                cell.report.mape_mean,
                cell.report.mape_std,
                cell.report.n
            ));
        }
        out
    }
}

fn run_cell(
    label: &str,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    prep: &PreprocessConfig,
    train: &[Sample],
    val: &[Sample],
    test: &[Sample],
) -> Result<AblationCell, EvalError> {
    let mut model = MassNet::init(model_cfg, &mut ChaCha8Rng::seed_from_u64(train_cfg.seed))
        .map_err(crate::error::TrainError::from)?;
    let state = train_model(&mut model, train, val, prep, train_cfg, None)?;
    let trained = TrainedModel {
        model,
        preprocess: prep.clone(),
        dataset_max: dataset_max(train),
    };
    let report = evaluate_report(&trained, test)?;
    Ok(AblationCell {
        label: label.to_string(),
        report,
        history: state.history,
    })
}

/// Joint-noise grid in pixels, calibrated from reported per-joint L1 errors.
pub fn joint_noise_sigma_grid() -> Vec<f64> {
    vec![
        0.0,
        sigma_for_l1(5.25),
        sigma_for_l1(7.45),
        sigma_for_l1(7.72),
    ]
}

fn with_noisy_joints(samples: &[Sample], sigma: f64, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    samples
        .iter()
        .map(|s| {
            let mut out = s.clone();
            if let Some(joints) = &s.joints {
                out.joints =
                    Some(inject_joint_noise(joints, sigma, &mut rng).expect("non-negative sigma"));
            }
            out
        })
        .collect()
}

/// Run every cell of one study axis: a full train+eval per cell, all sharing
/// the seed in `spec.train`.
pub fn run_ablation(
    axis: AblationAxis,
    spec: &RunSpec,
    train: &[Sample],
    val: &[Sample],
    test: &[Sample],
) -> Result<AblationTable, EvalError> {
    let mut cells = Vec::new();
    match axis {
        AblationAxis::Branches => {
            let joint_only = ModelConfig {
                use_deep_branch: false,
                use_joint_branch: true,
                ..spec.model.clone()
            };
            let joint_only_train = TrainConfig {
                lambda: 0.0, // no embeddings without the deep branch
                ..spec.train.clone()
            };
            cells.push(run_cell(
                "joint_only",
                &joint_only,
                &joint_only_train,
                &spec.preprocess,
                train,
                val,
                test,
            )?);

            let mass_only = ModelConfig {
                use_deep_branch: true,
                use_joint_branch: false,
                ..spec.model.clone()
            };
            cells.push(run_cell(
                "mass_only",
                &mass_only,
                &spec.train,
                &spec.preprocess,
                train,
                val,
                test,
            )?);

            let dual = ModelConfig {
                use_deep_branch: true,
                use_joint_branch: true,
                ..spec.model.clone()
            };
            cells.push(run_cell(
                "dual",
                &dual,
                &spec.train,
                &spec.preprocess,
                train,
                val,
                test,
            )?);
        }
        AblationAxis::LossVariant => {
            let no_conl = TrainConfig {
                lambda: 0.0,
                ..spec.train.clone()
            };
            cells.push(run_cell(
                "no_conl",
                &spec.model,
                &no_conl,
                &spec.preprocess,
                train,
                val,
                test,
            )?);

            let supcon = TrainConfig {
                penalty_enabled: false,
                ..spec.train.clone()
            };
            cells.push(run_cell(
                "supcon",
                &spec.model,
                &supcon,
                &spec.preprocess,
                train,
                val,
                test,
            )?);

            let masscon = TrainConfig {
                penalty_enabled: true,
                ..spec.train.clone()
            };
            cells.push(run_cell(
                "masscon",
                &spec.model,
                &masscon,
                &spec.preprocess,
                train,
                val,
                test,
            )?);
        }
        AblationAxis::DepthScan => {
            for depth in 0..=12usize {
                let cfg = ModelConfig {
                    n_sensing_layers: depth,
                    ..spec.model.clone()
                };
                cells.push(run_cell(
                    &format!("depth_{depth:02}"),
                    &cfg,
                    &spec.train,
                    &spec.preprocess,
                    train,
                    val,
                    test,
                )?);
            }
        }
        AblationAxis::JointNoise => {
            for (i, sigma) in joint_noise_sigma_grid().into_iter().enumerate() {
                let noise_seed = spec.train.seed ^ (0xab1e_0000 + i as u64);
                let train_n = with_noisy_joints(train, sigma, noise_seed);
                let val_n = with_noisy_joints(val, sigma, noise_seed.wrapping_add(1));
                let test_n = with_noisy_joints(test, sigma, noise_seed.wrapping_add(2));
                cells.push(run_cell(
                    &format!("sigma_{sigma:.2}px"),
                    &spec.model,
                    &spec.train,
                    &spec.preprocess,
                    &train_n,
                    &val_n,
                    &test_n,
                )?);
            }
        }
    }
    Ok(AblationTable { axis, cells })
}

/// Convenience for the CLI: predict one raw frame with a trained model.
pub fn predict_single_frame(
    model: &MassNet,
    prep: &PreprocessConfig,
    data_max: f64,
    frame: &PressureFrame,
) -> Result<f64, EvalError> {
    let sample = Sample::new(frame.clone(), "query", 1.0, Posture::Other)
        .map_err(|e| EvalError::InvalidArgument(e.to_string()))?;
    let processed = preprocess_pipeline(&sample, prep, data_max, model.cfg.joint_count)
        .map_err(crate::error::TrainError::from)?;
    let mut frames = ndarray::Array4::zeros((1, 1, prep.target_rows, prep.target_cols));
    frames
        .index_axis_mut(ndarray::Axis(0), 0)
        .index_axis_mut(ndarray::Axis(0), 0)
        .assign(&processed.frame);
    let preds = model
        .predict(Some(&frames), None)
        .map_err(crate::error::TrainError::from)?;
    Ok(preds[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::Normalization;
    use crate::synthetic::{generate_dataset, GeneratorConfig};
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use proptest::prelude::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    // -- metrics ---------------------------------------------------------------

    #[test]
    fn metrics_unit_case() {
        let r = compute_metrics(&[55.0], &[50.0], &[Posture::Supine], &strings(&["s1"])).unwrap();
        assert_abs_diff_eq!(r.mae_mean, 5.0);
        assert_abs_diff_eq!(r.mape_mean, 10.0);
        assert_eq!(r.n, 1);
    }

    #[test]
    fn perfect_predictions_are_all_zero() {
        let r = compute_metrics(
            &[50.0, 60.0],
            &[50.0, 60.0],
            &[Posture::Supine, Posture::Prone],
            &strings(&["a", "b"]),
        )
        .unwrap();
        assert_eq!(r.mae_mean, 0.0);
        assert_eq!(r.mape_mean, 0.0);
        assert_eq!(r.mae_std, 0.0);
    }

    #[test]
    fn mae_std_is_population_sigma() {
        // per-sample errors {5, 2} -> population sigma 1.5
        let r = compute_metrics(
            &[50.0, 60.0],
            &[55.0, 58.0],
            &[Posture::Supine, Posture::Supine],
            &strings(&["a", "b"]),
        )
        .unwrap();
        assert_abs_diff_eq!(r.mae_mean, 3.5);
        assert_abs_diff_eq!(r.mae_std, 1.5);
    }

    #[test]
    fn nonpositive_target_is_an_error() {
        assert!(compute_metrics(&[1.0], &[0.0], &[Posture::Other], &strings(&["x"])).is_err());
    }

    #[test]
    fn constant_offset_on_perfect_model_gives_exact_mae() {
        let targets = [48.0, 62.0, 75.0];
        let preds: Vec<f64> = targets.iter().map(|t| t + 2.5).collect();
        let r = compute_metrics(
            &preds,
            &targets,
            &[Posture::Supine; 3],
            &strings(&["a", "b", "c"]),
        )
        .unwrap();
        assert_abs_diff_eq!(r.mae_mean, 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(r.mae_std, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn group_counts_partition_n() {
        let postures = [
            Posture::Supine,
            Posture::LeftSide,
            Posture::Supine,
            Posture::Prone,
            Posture::RightSide,
        ];
        let subjects = strings(&["a", "a", "b", "b", "c"]);
        let preds = [50.0, 51.0, 52.0, 53.0, 54.0];
        let targets = [50.0; 5];
        let r = compute_metrics(&preds, &targets, &postures, &subjects).unwrap();
        assert_eq!(r.per_posture.values().map(|g| g.n).sum::<usize>(), r.n);
        assert_eq!(r.per_subject.values().map(|(_, n)| n).sum::<usize>(), r.n);
    }

    proptest! {
        #[test]
        fn metrics_are_permutation_invariant(seed in 0u64..200) {
            use rand::seq::SliceRandom;
            use rand::{Rng, SeedableRng};
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..12);
            let preds: Vec<f64> = (0..n).map(|_| rng.random_range(40.0..105.0)).collect();
            let targets: Vec<f64> = (0..n).map(|_| rng.random_range(40.0..105.0)).collect();
            let postures: Vec<Posture> =
                (0..n).map(|i| Posture::ALL[i % Posture::ALL.len()]).collect();
            let subjects: Vec<String> = (0..n).map(|i| format!("s{}", i % 3)).collect();
            let base = compute_metrics(&preds, &targets, &postures, &subjects).unwrap();

            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let p2: Vec<f64> = order.iter().map(|&i| preds[i]).collect();
            let t2: Vec<f64> = order.iter().map(|&i| targets[i]).collect();
            let po2: Vec<Posture> = order.iter().map(|&i| postures[i]).collect();
            let s2: Vec<String> = order.iter().map(|&i| subjects[i].clone()).collect();
            let shuffled = compute_metrics(&p2, &t2, &po2, &s2).unwrap();

            prop_assert!((base.mae_mean - shuffled.mae_mean).abs() < 1e-12);
            prop_assert!((base.mape_mean - shuffled.mape_mean).abs() < 1e-12);
            prop_assert!((base.mae_std - shuffled.mae_std).abs() < 1e-12);
        }
    }

    // -- linear baseline -----------------------------------------------------------

    #[test]
    fn linear_fit_recovers_exact_linear_world() {
        // ideal generator: sum(frame) == weight, so a = 1, b = 0
        let ds = generate_dataset(&GeneratorConfig {
            n_subjects: 10,
            samples_per_subject: 3,
            seed: 3,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let fit = linear_fit_baseline(ds.samples()).unwrap();
        assert_abs_diff_eq!(fit.a, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.b, 0.0, epsilon = 1e-6);
        let report = evaluate_report(&fit, ds.samples()).unwrap();
        assert!(report.mae_mean < 1e-9, "MAE {}", report.mae_mean);
    }

    #[test]
    fn linear_fit_recovers_arbitrary_affine_map() {
        // w = a0 * s + b0 exactly
        let frame = |v: f64| PressureFrame::new(Array2::from_elem((4, 4), v)).unwrap();
        let (a0, b0) = (0.35, 12.0);
        let samples: Vec<Sample> = (1..=10)
            .map(|i| {
                let s = i as f64 * 10.0;
                Sample::new(frame(s / 16.0), format!("s{i}"), a0 * s + b0, Posture::Supine)
                    .unwrap()
            })
            .collect();
        let fit = linear_fit_baseline(&samples).unwrap();
        assert_abs_diff_eq!(fit.a, a0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.b, b0, epsilon = 1e-9);
    }

    #[test]
    fn saturation_breaks_the_linear_baseline() {
        let ds = generate_dataset(&GeneratorConfig {
            n_subjects: 30,
            samples_per_subject: 4,
            saturation_peak_quantile: Some(0.7),
            seed: 5,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let (train, test) = ds.samples().split_at(80);
        let fit = linear_fit_baseline(train).unwrap();
        let report = evaluate_report(&fit, test).unwrap();
        assert!(report.mae_mean > 1.0, "MAE {}", report.mae_mean);
    }

    #[test]
    fn degenerate_fits_error() {
        let frame = PressureFrame::new(Array2::from_elem((2, 2), 1.0)).unwrap();
        let one = vec![Sample::new(frame.clone(), "a", 50.0, Posture::Supine).unwrap()];
        assert!(linear_fit_baseline(&one).is_err());
        let same_sums: Vec<Sample> = (0..4)
            .map(|i| {
                Sample::new(
                    frame.clone(),
                    format!("s{i}"),
                    50.0 + i as f64,
                    Posture::Supine,
                )
                .unwrap()
            })
            .collect();
        assert!(linear_fit_baseline(&same_sums).is_err());
    }

    // -- statistical features ---------------------------------------------------------

    #[test]
    fn features_have_length_14() {
        let frame = PressureFrame::new(Array2::from_elem((5, 5), 2.0)).unwrap();
        assert_eq!(statistical_features(&frame).len(), 14);
    }

    #[test]
    fn constant_frame_features() {
        let frame = PressureFrame::new(Array2::from_elem((4, 6), 3.0)).unwrap();
        let f = statistical_features(&frame);
        assert_abs_diff_eq!(f[2], 0.0); // std
        assert_abs_diff_eq!(f[4], 24.0); // contact area
        for q in [5, 6, 7, 8] {
            assert_abs_diff_eq!(f[q], 3.0); // all percentiles
        }
        assert_eq!(f[13], 0.0, "no strict local maxima on a constant frame");
    }

    #[test]
    fn impulse_frame_features() {
        let mut grid = Array2::zeros((7, 9));
        grid[(2, 5)] = 4.0;
        let frame = PressureFrame::new(grid).unwrap();
        let f = statistical_features(&frame);
        assert_abs_diff_eq!(f[9], 2.0); // centroid row
        assert_abs_diff_eq!(f[10], 5.0); // centroid col
        assert_abs_diff_eq!(f[11], 0.0); // spreads
        assert_abs_diff_eq!(f[12], 0.0);
        assert_abs_diff_eq!(f[13], 1.0); // peak count
    }

    #[test]
    fn all_zero_frame_features_defined() {
        let frame = PressureFrame::new(Array2::zeros((5, 7))).unwrap();
        let f = statistical_features(&frame);
        assert_abs_diff_eq!(f[0], 0.0);
        assert_abs_diff_eq!(f[9], 2.0); // frame-center centroid
        assert_abs_diff_eq!(f[10], 3.0);
        assert_abs_diff_eq!(f[13], 0.0);
    }

    #[test]
    fn stat_regressor_learns_the_ideal_world() {
        let ds = generate_dataset(&GeneratorConfig {
            n_subjects: 20,
            samples_per_subject: 4,
            seed: 7,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let (train, test) = ds.samples().split_at(60);
        let reg = StatFeatureRegressor::fit(train).unwrap();
        let report = evaluate_report(&reg, test).unwrap();
        // the sum feature alone solves the ideal world
        assert!(report.mae_mean < 0.5, "MAE {}", report.mae_mean);
    }

    // -- evaluate_report --------------------------------------------------------------

    struct OracleRegressor;

    impl WeightRegressor for OracleRegressor {
        fn name(&self) -> &str {
            "oracle"
        }
        fn predict_sample(&self, sample: &Sample) -> Result<f64, EvalError> {
            Ok(sample.weight_kg)
        }
    }

    #[test]
    fn oracle_model_yields_zero_report_with_full_accounting() {
        let ds = generate_dataset(&GeneratorConfig {
            n_subjects: 5,
            samples_per_subject: 4,
            seed: 11,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let report = evaluate_report(&OracleRegressor, ds.samples()).unwrap();
        assert_eq!(report.mae_mean, 0.0);
        assert_eq!(report.mape_mean, 0.0);
        assert_eq!(report.n, ds.len());
        assert_eq!(
            report.per_posture.values().map(|g| g.n).sum::<usize>(),
            report.n
        );
    }

    // -- ablation harness ----------------------------------------------------------------

    fn tiny_run_spec() -> RunSpec {
        RunSpec {
            model: ModelConfig {
                n_sensing_layers: 1,
                stem_channels: 2,
                trunk_channels: 4,
                bottleneck_ratio: 4.0,
                deep_feature_dim: 8,
                joint_feature_dim: 8,
                embedding_dim: 4,
                cbam_reduction: 2,
                cbam_spatial_kernel: 3,
                joint_count: 14,
                use_deep_branch: true,
                use_joint_branch: true,
                leaky_slope: 0.01,
            },
            train: TrainConfig {
                batch_size: 4,
                max_epochs: 1,
                warmup_epochs: 1,
                seed: 31,
                ..TrainConfig::default()
            },
            preprocess: PreprocessConfig {
                upsample_factor: 1,
                gaussian_kernel: 3,
                gaussian_sigma: 1.0,
                target_rows: 16,
                target_cols: 16,
                normalization: Normalization::PerDatasetMax,
            },
        }
    }

    fn tiny_data() -> (Vec<Sample>, Vec<Sample>) {
        let ds = generate_dataset(&GeneratorConfig {
            n_subjects: 4,
            samples_per_subject: 3,
            rows: 14,
            cols: 12,
            seed: 13,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let (train, test) = ds.samples().split_at(8);
        (train.to_vec(), test.to_vec())
    }

    #[test]
    fn branches_axis_emits_exactly_three_rows() {
        let spec = tiny_run_spec();
        let (train, test) = tiny_data();
        let table = run_ablation(AblationAxis::Branches, &spec, &train, &[], &test).unwrap();
        let labels: Vec<&str> = table.cells.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, vec!["joint_only", "mass_only", "dual"]);
        let csv = table.to_csv();
        assert_eq!(csv.lines().count(), 4, "header plus three rows");
    }

    #[test]
    fn depth_scan_emits_thirteen_rows() {
        let spec = tiny_run_spec();
        let (train, test) = tiny_data();
        let table = run_ablation(AblationAxis::DepthScan, &spec, &train, &[], &test).unwrap();
        assert_eq!(table.cells.len(), 13);
        assert_eq!(table.cells[0].label, "depth_00");
        assert_eq!(table.cells[12].label, "depth_12");
    }

    #[test]
    fn no_conl_cell_equals_a_lambda_zero_run_exactly() {
        let spec = tiny_run_spec();
        let (train, test) = tiny_data();
        let table = run_ablation(AblationAxis::LossVariant, &spec, &train, &[], &test).unwrap();
        assert_eq!(table.cells.len(), 3);

        // reference: an explicit lambda = 0 training run with the same seed
        let cfg = TrainConfig {
            lambda: 0.0,
            ..spec.train.clone()
        };
        let mut model =
            MassNet::init(&spec.model, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        let state = train_model(&mut model, &train, &[], &spec.preprocess, &cfg, None).unwrap();

        let no_conl = &table.cells[0];
        assert_eq!(no_conl.label, "no_conl");
        assert_eq!(no_conl.history.len(), state.history.len());
        for (a, b) in no_conl.history.iter().zip(&state.history) {
            assert_eq!(a.l_all, b.l_all, "identical epoch histories");
            assert_eq!(a.l_mae, b.l_mae);
        }
    }

    #[test]
    fn joint_noise_axis_covers_the_sigma_grid() {
        let spec = tiny_run_spec();
        let (train, test) = tiny_data();
        let table = run_ablation(AblationAxis::JointNoise, &spec, &train, &[], &test).unwrap();
        assert_eq!(table.cells.len(), joint_noise_sigma_grid().len());
        assert!(table.cells[0].label.starts_with("sigma_0.00"));
    }
}
