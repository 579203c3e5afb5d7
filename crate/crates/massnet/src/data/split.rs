//! Dataset splitting strategies.
//!
//! Three strategies are supported, mirroring how the datasets differ in size
//! and purpose:
//!
//! - [`split_weight_binned`]: subjects are binned by weight into equal-width
//!   bins; each bin donates one subject to validation and one to test, with
//!   deficits refilled from the most populous bins. Everything else trains.
//! - [`split_loso`]: leave-one-subject-out.
//! - [`split_random_kfold`]: sample-level k-fold (seen-subject evaluation).
//!
//! All strategies are deterministic given their seed.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::DataError;

/// Which splitting strategy produced a [`SplitSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SplitStrategy {
    WeightBinned { n_bins: usize },
    Loso { held_subject: String },
    RandomKfold { k: usize, fold: usize },
}

/// Disjoint train/val/test sample-index lists.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub strategy: SplitStrategy,
    pub seed: u64,
}

impl SplitSpec {
    /// Check the core partition invariants: pairwise disjoint, in-range.
    pub fn validate(&self, dataset_len: usize) -> Result<(), DataError> {
        let mut seen = vec![false; dataset_len];
        for &i in self.train.iter().chain(&self.val).chain(&self.test) {
            if i >= dataset_len {
                return Err(DataError::Split(format!("index {i} out of range")));
            }
            if seen[i] {
                return Err(DataError::Split(format!("index {i} in two partitions")));
            }
            seen[i] = true;
        }
        Ok(())
    }
}

/// Map each subject to its (consistent) weight, erroring on disagreement.
fn subject_weights(dataset: &Dataset) -> Result<BTreeMap<String, f64>, DataError> {
    let mut weights: BTreeMap<String, f64> = BTreeMap::new();
    for s in dataset.samples() {
        match weights.get(&s.subject_id) {
            Some(&w) if (w - s.weight_kg).abs() > 1e-9 => {
                return Err(DataError::Split(format!(
                    "subject {} has inconsistent weights ({w} vs {})",
                    s.subject_id, s.weight_kg
                )));
            }
            Some(_) => {}
            None => {
                weights.insert(s.subject_id.clone(), s.weight_kg);
            }
        }
    }
    Ok(weights)
}

/// Subject-level split: equal-width weight bins, one subject per bin to val
/// and one to test (deficits refilled from the most populous bins), remainder
/// to train. Produces an 84:10:8-like ratio on a 102-subject dataset.
pub fn split_weight_binned(
    dataset: &Dataset,
    n_bins: usize,
    seed: u64,
) -> Result<SplitSpec, DataError> {
    if n_bins == 0 {
        return Err(DataError::Split("n_bins must be positive".into()));
    }
    let weights = subject_weights(dataset)?;
    if weights.len() < 2 * n_bins {
        return Err(DataError::Split(format!(
            "need at least {} subjects for {n_bins} bins, found {}",
            2 * n_bins,
            weights.len()
        )));
    }

    let w_min = weights.values().cloned().fold(f64::INFINITY, f64::min);
    let w_max = weights.values().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = (w_max - w_min) / n_bins as f64;

    // Subjects per bin, bins indexed by equal-width weight range.
    let mut bins: Vec<Vec<String>> = vec![Vec::new(); n_bins];
    for (subject, &w) in &weights {
        let idx = if width > 0.0 {
            (((w - w_min) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        bins[idx].push(subject.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for bin in &mut bins {
        bin.shuffle(&mut rng);
    }

    let mut val_subjects: Vec<String> = Vec::new();
    let mut test_subjects: Vec<String> = Vec::new();
    let mut deficit = 0usize;
    for bin in &mut bins {
        match bin.len() {
            0 => deficit += 2,
            1 => {
                val_subjects.push(bin.pop().unwrap());
                deficit += 1;
            }
            _ => {
                val_subjects.push(bin.pop().unwrap());
                test_subjects.push(bin.pop().unwrap());
            }
        }
    }
    // Refill deficits from whichever bin currently has the most subjects left,
    // alternating val/test so both stay at n_bins subjects.
    while deficit > 0 {
        let (richest, _) = bins
            .iter()
            .enumerate()
            .max_by_key(|(i, b)| (b.len(), n_bins - i))
            .unwrap();
        let subject = bins[richest].pop().ok_or_else(|| {
            DataError::Split("not enough subjects to fill val/test bins".into())
        })?;
        if val_subjects.len() <= test_subjects.len() {
            val_subjects.push(subject);
        } else {
            test_subjects.push(subject);
        }
        deficit -= 1;
    }

    let in_val = |s: &str| val_subjects.iter().any(|v| v == s);
    let in_test = |s: &str| test_subjects.iter().any(|v| v == s);

    let mut spec = SplitSpec {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        strategy: SplitStrategy::WeightBinned { n_bins },
        seed,
    };
    for (i, s) in dataset.samples().iter().enumerate() {
        if in_val(&s.subject_id) {
            spec.val.push(i);
        } else if in_test(&s.subject_id) {
            spec.test.push(i);
        } else {
            spec.train.push(i);
        }
    }
    Ok(spec)
}

/// Leave-one-subject-out: `held_subject` is the entire test set, validation
/// stays empty.
pub fn split_loso(dataset: &Dataset, held_subject: &str) -> Result<SplitSpec, DataError> {
    if !dataset.subjects().iter().any(|s| s == held_subject) {
        return Err(DataError::UnknownSubject(held_subject.to_string()));
    }
    let mut spec = SplitSpec {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        strategy: SplitStrategy::Loso {
            held_subject: held_subject.to_string(),
        },
        seed: 0,
    };
    for (i, s) in dataset.samples().iter().enumerate() {
        if s.subject_id == held_subject {
            spec.test.push(i);
        } else {
            spec.train.push(i);
        }
    }
    Ok(spec)
}

/// Sample-level k-fold: every sample lands in exactly one fold's test set,
/// fold test sizes differ by at most one.
pub fn split_random_kfold(
    dataset: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<SplitSpec>, DataError> {
    if k < 2 {
        return Err(DataError::Split(format!("k must be >= 2, got {k}")));
    }
    let n = dataset.len();
    if n < k {
        return Err(DataError::Split(format!(
            "need at least {k} samples for {k} folds, found {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        let test: Vec<usize> = order[start..start + size].to_vec();
        start += size;
        let train: Vec<usize> = order[..test_start(fold, base, extra)]
            .iter()
            .chain(&order[test_start(fold, base, extra) + size..])
            .cloned()
            .collect();
        folds.push(SplitSpec {
            train,
            val: Vec::new(),
            test,
            strategy: SplitStrategy::RandomKfold { k, fold },
            seed,
        });
    }
    Ok(folds)
}

fn test_start(fold: usize, base: usize, extra: usize) -> usize {
    fold * base + fold.min(extra)
}
