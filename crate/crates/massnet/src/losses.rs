//! Training objectives: MAE regression loss, the supervised contrastive loss
//! over same-subject positives, its weight-penalized refinement, and the
//! overall weighted sum.
//!
//! The contrastive loss runs over a batch of unit-norm embeddings `m_i` with
//! subject ids (defining the positive sets) and body weights `M_i` (defining
//! the penalty factors). For anchor `i` with positives `P(i)` and candidates
//! `A(i) = batch \ {i}`:
//!
//! ```text
//! L = sum_i (-1 / |P(i)|) sum_{p in P(i)}
//!         log[ exp(d_ip m_i . m_p / tau) / sum_{a in A(i)} exp(d_ia m_i . m_a / tau) ]
//! ```
//!
//! with `d_ij = exp(|M_i - M_j| / M_i)` when the penalty is enabled and
//! `d_ij = 1` otherwise (which recovers the plain supervised contrastive
//! loss). The penalty multiplies the similarity inside the exponent in both
//! numerator and denominator, exactly as written, even for negative dot
//! products. Anchors without positives contribute zero. Log-sum-exp terms are
//! computed with max subtraction.

use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::LossError;

/// One contrastive batch: embeddings plus the labels that define positive
/// pairs and penalties.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch<'a> {
    /// `(N, E)` unit-norm embedding rows.
    pub embeddings: ArrayView2<'a, f64>,
    /// Subject id per row; rows with equal ids are positive pairs.
    pub subject_ids: &'a [String],
    /// Body weight in kg per row.
    pub weights_kg: &'a [f64],
    /// Temperature, > 0.
    pub temperature: f64,
    pub penalty_enabled: bool,
}

impl ContrastiveBatch<'_> {
    fn validate(&self) -> Result<(), LossError> {
        let n = self.embeddings.nrows();
        if n < 2 {
            return Err(LossError::InvalidArgument(format!(
                "contrastive batch needs at least 2 samples, got {n}"
            )));
        }
        if self.subject_ids.len() != n || self.weights_kg.len() != n {
            return Err(LossError::InvalidArgument(
                "embeddings, subject_ids, weights_kg must have equal length".into(),
            ));
        }
        if self.temperature <= 0.0 {
            return Err(LossError::InvalidArgument(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if self.embeddings.iter().any(|v| !v.is_finite()) {
            return Err(LossError::NonFinite("embedding".into()));
        }
        for row in self.embeddings.rows() {
            let norm = row.dot(&row).sqrt();
            if (norm - 1.0).abs() > 1e-3 {
                return Err(LossError::InvalidArgument(format!(
                    "embedding norm {norm} not within 1e-3 of 1"
                )));
            }
        }
        if self.penalty_enabled && self.weights_kg.iter().any(|&w| w <= 0.0) {
            return Err(LossError::InvalidArgument(
                "weights must be positive for the penalty factor".into(),
            ));
        }
        Ok(())
    }
}

/// Penalty factor `exp(|M_i - M_j| / M_i)`: 1 for equal weights, strictly
/// increasing in the weight gap, asymmetric in its arguments.
pub fn penalty_factor(m_i: f64, m_j: f64) -> Result<f64, LossError> {
    if m_i <= 0.0 {
        return Err(LossError::InvalidArgument(format!(
            "anchor weight must be > 0, got {m_i}"
        )));
    }
    Ok(((m_i - m_j).abs() / m_i).exp())
}

/// Pairwise similarity terms `s_ij = d_ij (m_i . m_j) / tau`.
fn similarities(batch: &ContrastiveBatch) -> Result<Array2<f64>, LossError> {
    let n = batch.embeddings.nrows();
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dot = batch.embeddings.row(i).dot(&batch.embeddings.row(j));
            let delta = if batch.penalty_enabled {
                penalty_factor(batch.weights_kg[i], batch.weights_kg[j])?
            } else {
                1.0
            };
            s[(i, j)] = delta * dot / batch.temperature;
        }
    }
    Ok(s)
}

fn positives(batch: &ContrastiveBatch) -> Vec<Vec<usize>> {
    let n = batch.subject_ids.len();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && batch.subject_ids[j] == batch.subject_ids[i])
                .collect()
        })
        .collect()
}

/// The contrastive loss value.
pub fn masscon_loss(batch: &ContrastiveBatch) -> Result<f64, LossError> {
    Ok(masscon_loss_with_grad(batch)?.0)
}

/// Loss and its gradient with respect to the embeddings.
pub fn masscon_loss_with_grad(
    batch: &ContrastiveBatch,
) -> Result<(f64, Array2<f64>), LossError> {
    batch.validate()?;
    let n = batch.embeddings.nrows();
    let s = similarities(batch)?;
    let pos = positives(batch);

    let mut loss = 0.0;
    // g[(i, a)] = dL / ds_ia
    let mut g = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        if pos[i].is_empty() {
            continue;
        }
        let p_count = pos[i].len() as f64;

        // stabilized log-sum-exp over A(i)
        let mut max = f64::NEG_INFINITY;
        for a in 0..n {
            if a != i {
                max = max.max(s[(i, a)]);
            }
        }
        let mut z = 0.0;
        for a in 0..n {
            if a != i {
                z += (s[(i, a)] - max).exp();
            }
        }
        let lse = max + z.ln();

        for &p in &pos[i] {
            loss += -(s[(i, p)] - lse) / p_count;
            g[(i, p)] -= 1.0 / p_count;
        }
        for a in 0..n {
            if a != i {
                g[(i, a)] += (s[(i, a)] - max).exp() / z;
            }
        }
    }

    if !loss.is_finite() {
        return Err(LossError::NonFinite("contrastive loss".into()));
    }

    // chain rule: s_ia = c_ia (m_i . m_a)
    let e = batch.embeddings.ncols();
    let mut grad = Array2::<f64>::zeros((n, e));
    for i in 0..n {
        for a in 0..n {
            if a == i || g[(i, a)] == 0.0 {
                continue;
            }
            let delta = if batch.penalty_enabled {
                penalty_factor(batch.weights_kg[i], batch.weights_kg[a])?
            } else {
                1.0
            };
            let coeff = g[(i, a)] * delta / batch.temperature;
            for k in 0..e {
                grad[(i, k)] += coeff * batch.embeddings[(a, k)];
                grad[(a, k)] += coeff * batch.embeddings[(i, k)];
            }
        }
    }
    Ok((loss, grad))
}

/// Mean absolute error in kg.
pub fn mae_loss(pred: &[f64], target: &[f64]) -> Result<f64, LossError> {
    Ok(mae_loss_with_grad(pred, target)?.0)
}

/// MAE and its gradient with respect to the predictions.
pub fn mae_loss_with_grad(pred: &[f64], target: &[f64]) -> Result<(f64, Array1<f64>), LossError> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(LossError::InvalidArgument(format!(
            "prediction/target lengths {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array1::zeros(pred.len());
    for (i, (&p, &t)) in pred.iter().zip(target).enumerate() {
        let d = p - t;
        loss += d.abs() / n;
        grad[i] = if d > 0.0 {
            1.0 / n
        } else if d < 0.0 {
            -1.0 / n
        } else {
            0.0
        };
    }
    if !loss.is_finite() {
        return Err(LossError::NonFinite("mae loss".into()));
    }
    Ok((loss, grad))
}

/// Per-batch loss components with the invariant `l_all = l_mae + lambda l_con`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_mae: f64,
    pub l_con: f64,
    pub l_all: f64,
    pub lambda: f64,
}

/// Combine the components into the overall weighted objective.
pub fn overall_loss(l_mae: f64, l_con: f64, lambda: f64) -> Result<LossBreakdown, LossError> {
    if lambda < 0.0 {
        return Err(LossError::InvalidArgument(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    Ok(LossBreakdown {
        l_mae,
        l_con,
        l_all: l_mae + lambda * l_con,
        lambda,
    })
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Naive direct-sum evaluations used as independent test oracles. No
    //! stabilization tricks, no shared code with the implementation above.

    use super::ContrastiveBatch;

    /// Direct evaluation of the penalized loss.
    pub fn masscon_direct(batch: &ContrastiveBatch) -> f64 {
        let n = batch.embeddings.nrows();
        let mut total = 0.0;
        for i in 0..n {
            let positives: Vec<usize> = (0..n)
                .filter(|&j| j != i && batch.subject_ids[j] == batch.subject_ids[i])
                .collect();
            if positives.is_empty() {
                continue;
            }
            let s = |a: usize, b: usize| {
                let dot: f64 = (0..batch.embeddings.ncols())
                    .map(|k| batch.embeddings[(a, k)] * batch.embeddings[(b, k)])
                    .sum();
                let delta = if batch.penalty_enabled {
                    ((batch.weights_kg[a] - batch.weights_kg[b]).abs() / batch.weights_kg[a])
                        .exp()
                } else {
                    1.0
                };
                delta * dot / batch.temperature
            };
            let denom: f64 = (0..n).filter(|&a| a != i).map(|a| s(i, a).exp()).sum();
            let mut anchor = 0.0;
            for &p in &positives {
                anchor += (s(i, p).exp() / denom).ln();
            }
            total += -anchor / positives.len() as f64;
        }
        total
    }

    /// Independent plain supervised contrastive oracle (no penalty factor).
    pub fn supcon_direct(batch: &ContrastiveBatch) -> f64 {
        let unpenalized = ContrastiveBatch {
            penalty_enabled: false,
            ..batch.clone()
        };
        masscon_direct(&unpenalized)
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::{masscon_direct, supcon_direct};
    use super::*;
    use ndarray::array;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Random batch with unit-norm embeddings and per-subject weights.
    fn random_batch(
        rng: &mut ChaCha8Rng,
        n: usize,
        e: usize,
    ) -> (Array2<f64>, Vec<String>, Vec<f64>, f64) {
        let mut emb: Array2<f64> = Array2::from_shape_fn((n, e), |_| rng.random_range(-1.0..1.0));
        for mut row in emb.rows_mut() {
            let norm = row.dot(&row).sqrt().max(1e-9);
            row.mapv_inplace(|v| v / norm);
        }
        let n_subjects = rng.random_range(1..=n);
        let subject_weight: Vec<f64> = (0..n_subjects)
            .map(|_| rng.random_range(40.0..105.0))
            .collect();
        let mut subjects = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for _ in 0..n {
            let s = rng.random_range(0..n_subjects);
            subjects.push(format!("s{s}"));
            weights.push(subject_weight[s]);
        }
        let tau = rng.random_range(0.05..1.0);
        (emb, subjects, weights, tau)
    }

    // -- penalty factor -----------------------------------------------------

    #[test]
    fn penalty_is_one_for_equal_weights() {
        assert_eq!(penalty_factor(50.0, 50.0).unwrap(), 1.0);
    }

    #[test]
    fn penalty_matches_high_precision_values() {
        let p = penalty_factor(50.0, 60.0).unwrap();
        assert!((p - 1.221402758160170).abs() < 1e-12, "{p}");
        assert!((p - 0.2f64.exp()).abs() < 1e-15);
        let q = penalty_factor(60.0, 50.0).unwrap();
        assert!((q - 1.181360412865646).abs() < 1e-12, "{q}");
    }

    #[test]
    fn penalty_is_asymmetric() {
        let a = penalty_factor(50.0, 60.0).unwrap();
        let b = penalty_factor(60.0, 50.0).unwrap();
        assert!(a != b);
    }

    #[test]
    fn penalty_increases_with_weight_gap() {
        let mut prev = 1.0;
        for gap in [5.0, 10.0, 20.0, 40.0] {
            let p = penalty_factor(50.0, 50.0 + gap).unwrap();
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn penalty_rejects_nonpositive_anchor() {
        assert!(penalty_factor(0.0, 50.0).is_err());
        assert!(penalty_factor(-1.0, 50.0).is_err());
    }

    // -- masscon loss --------------------------------------------------------

    #[test]
    fn two_aligned_same_subject_embeddings_give_zero() {
        let emb = array![[1.0, 0.0], [1.0, 0.0]];
        let subjects = ids(&["a", "a"]);
        let weights = vec![50.0, 50.0];
        let batch = ContrastiveBatch {
            embeddings: emb.view(),
            subject_ids: &subjects,
            weights_kg: &weights,
            temperature: 1.0,
            penalty_enabled: true,
        };
        let loss = masscon_loss(&batch).unwrap();
        assert!(loss.abs() < 1e-12, "{loss}");
    }

    #[test]
    fn three_sample_example_matches_frozen_value() {
        // anchors 1 and 2 each contribute log(1 + e) - 1; anchor 3 has no
        // positives. The zero dot product neutralizes the penalty factor.
        let emb = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let subjects = ids(&["a", "a", "b"]);
        let weights = vec![50.0, 50.0, 60.0];
        let batch = ContrastiveBatch {
            embeddings: emb.view(),
            subject_ids: &subjects,
            weights_kg: &weights,
            temperature: 1.0,
            penalty_enabled: true,
        };
        let loss = masscon_loss(&batch).unwrap();
        let per_anchor = 0.313261687518223;
        assert!((loss - 2.0 * per_anchor).abs() < 1e-12, "{loss}");
        assert!((loss - masscon_direct(&batch)).abs() < 1e-12);
    }

    #[test]
    fn equal_weights_reduce_masscon_to_supcon() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let (emb, subjects, _, tau) = random_batch(&mut rng, 6, 3);
            let weights = vec![72.5; 6];
            let batch = ContrastiveBatch {
                embeddings: emb.view(),
                subject_ids: &subjects,
                weights_kg: &weights,
                temperature: tau,
                penalty_enabled: true,
            };
            let penalized = masscon_loss(&batch).unwrap();
            let supcon = supcon_direct(&batch);
            assert!((penalized - supcon).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_direct_sum_oracle_on_randomized_batches() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for trial in 0..100 {
            let n = rng.random_range(2..=8);
            let e = rng.random_range(2..=4);
            let (emb, subjects, weights, tau) = random_batch(&mut rng, n, e);
            let batch = ContrastiveBatch {
                embeddings: emb.view(),
                subject_ids: &subjects,
                weights_kg: &weights,
                temperature: tau,
                penalty_enabled: true,
            };
            let fast = masscon_loss(&batch).unwrap();
            let direct = masscon_direct(&batch);
            let rel = (fast - direct).abs() / direct.abs().max(1e-12);
            assert!(rel < 1e-6, "trial {trial}: {fast} vs {direct}");
        }
    }

    #[test]
    fn penalty_disabled_equals_independent_supcon_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let n = rng.random_range(2..=8);
            let (emb, subjects, weights, tau) = random_batch(&mut rng, n, 3);
            let batch = ContrastiveBatch {
                embeddings: emb.view(),
                subject_ids: &subjects,
                weights_kg: &weights,
                temperature: tau,
                penalty_enabled: false,
            };
            let loss = masscon_loss(&batch).unwrap();
            let oracle = supcon_direct(&batch);
            assert!((loss - oracle).abs() < 1e-9, "{loss} vs {oracle}");
        }
    }

    #[test]
    fn permutation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (emb, subjects, weights, tau) = random_batch(&mut rng, 7, 3);
        let batch = ContrastiveBatch {
            embeddings: emb.view(),
            subject_ids: &subjects,
            weights_kg: &weights,
            temperature: tau,
            penalty_enabled: true,
        };
        let base = masscon_loss(&batch).unwrap();

        let mut order: Vec<usize> = (0..7).collect();
        for _ in 0..5 {
            order.shuffle(&mut rng);
            let emb_p = Array2::from_shape_fn((7, 3), |(i, k)| emb[(order[i], k)]);
            let subj_p: Vec<String> = order.iter().map(|&i| subjects[i].clone()).collect();
            let w_p: Vec<f64> = order.iter().map(|&i| weights[i]).collect();
            let shuffled = ContrastiveBatch {
                embeddings: emb_p.view(),
                subject_ids: &subj_p,
                weights_kg: &w_p,
                temperature: tau,
                penalty_enabled: true,
            };
            let loss = masscon_loss(&shuffled).unwrap();
            assert!((loss - base).abs() < 1e-9);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (emb, subjects, weights, _) = random_batch(&mut rng, 4, 3);
        fn make<'a>(
            view: ArrayView2<'a, f64>,
            subjects: &'a [String],
            weights: &'a [f64],
            penalty: bool,
        ) -> ContrastiveBatch<'a> {
            ContrastiveBatch {
                embeddings: view,
                subject_ids: subjects,
                weights_kg: weights,
                temperature: 0.3,
                penalty_enabled: penalty,
            }
        }
        for penalty in [true, false] {
            let (_, grad) =
                masscon_loss_with_grad(&make(emb.view(), &subjects, &weights, penalty)).unwrap();

            let mut probe = emb.clone();
            let eps = 1e-6;
            for i in 0..4 {
                for k in 0..3 {
                    let orig = probe[(i, k)];
                    probe[(i, k)] = orig + eps;
                    let fp =
                        masscon_loss(&make(probe.view(), &subjects, &weights, penalty)).unwrap();
                    probe[(i, k)] = orig - eps;
                    let fm =
                        masscon_loss(&make(probe.view(), &subjects, &weights, penalty)).unwrap();
                    probe[(i, k)] = orig;
                    let numeric = (fp - fm) / (2.0 * eps);
                    let analytic = grad[(i, k)];
                    let rel =
                        (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
                    assert!(
                        rel < 1e-4,
                        "grad[{i},{k}]: analytic {analytic} vs numeric {numeric}"
                    );
                }
            }
        }
    }

    #[test]
    fn low_temperature_aligned_batch_stays_finite() {
        // aligned embeddings at tau = 0.05 push exponents to ~100; the
        // max-subtracted evaluation must stay finite and match the oracle
        let emb = array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.993, 0.118]];
        let subjects = ids(&["a", "a", "b", "b"]);
        let weights = vec![40.0, 40.0, 105.0, 105.0];
        let batch = ContrastiveBatch {
            embeddings: emb.view(),
            subject_ids: &subjects,
            weights_kg: &weights,
            temperature: 0.05,
            penalty_enabled: true,
        };
        let loss = masscon_loss(&batch).unwrap();
        assert!(loss.is_finite());
        let direct = masscon_direct(&batch);
        let rel = (loss - direct).abs() / direct.abs().max(1e-12);
        assert!(rel < 1e-6);
    }

    #[test]
    fn batch_validation_errors() {
        let emb = array![[1.0, 0.0]];
        let subjects = ids(&["a"]);
        let weights = vec![50.0];
        let batch = ContrastiveBatch {
            embeddings: emb.view(),
            subject_ids: &subjects,
            weights_kg: &weights,
            temperature: 1.0,
            penalty_enabled: true,
        };
        assert!(masscon_loss(&batch).is_err(), "N < 2");

        let emb = array![[1.0, 0.0], [f64::NAN, 0.0]];
        let subjects = ids(&["a", "a"]);
        let weights = vec![50.0, 50.0];
        let batch = ContrastiveBatch {
            embeddings: emb.view(),
            subject_ids: &subjects,
            weights_kg: &weights,
            temperature: 1.0,
            penalty_enabled: true,
        };
        assert!(masscon_loss(&batch).is_err(), "NaN embedding");
    }

    // -- mae ------------------------------------------------------------------

    #[test]
    fn mae_unit_cases() {
        assert_eq!(mae_loss(&[50.0], &[50.0]).unwrap(), 0.0);
        let v = mae_loss(&[50.0, 60.0], &[55.0, 58.0]).unwrap();
        assert!((v - 3.5).abs() < 1e-15);
    }

    #[test]
    fn mae_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let a: Vec<f64> = (0..5).map(|_| rng.random_range(40.0..105.0)).collect();
            let b: Vec<f64> = (0..5).map(|_| rng.random_range(40.0..105.0)).collect();
            assert_eq!(mae_loss(&a, &b).unwrap(), mae_loss(&b, &a).unwrap());
        }
    }

    #[test]
    fn mae_rejects_length_mismatch() {
        assert!(mae_loss(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mae_loss(&[], &[]).is_err());
    }

    #[test]
    fn mae_gradient_is_sign_over_n() {
        let (_, g) = mae_loss_with_grad(&[50.0, 60.0, 55.0], &[55.0, 58.0, 55.0]).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(g.as_slice().unwrap(), &[-third, third, 0.0]);
    }

    // -- overall ----------------------------------------------------------------

    #[test]
    fn overall_loss_weighted_sum() {
        let b = overall_loss(2.0, 4.0, 0.25).unwrap();
        assert_eq!(b.l_all, 3.0);
        assert!((b.l_all - (b.l_mae + b.lambda * b.l_con)).abs() < 1e-9);
    }

    #[test]
    fn overall_loss_zero_lambda_ablates_contrastive_term() {
        let b = overall_loss(1.75, 123.0, 0.0).unwrap();
        assert_eq!(b.l_all, 1.75);
    }

    #[test]
    fn overall_loss_is_linear_in_contrastive_term() {
        let b = overall_loss(0.0, 7.0, 0.25).unwrap();
        assert_eq!(b.l_all, 0.25 * 7.0);
    }

    #[test]
    fn overall_loss_rejects_negative_lambda() {
        assert!(overall_loss(1.0, 1.0, -0.1).is_err());
    }
}
