//! Core domain types, on-disk dataset formats, loaders, and splitting.
//!
//! A [`PressureFrame`] is a rectangular grid of non-negative sensor readings
//! ("pixels"). A [`Sample`] pairs a frame with its subject, ground-truth body
//! weight in kg, posture label, and (optionally) 2D joint positions. A
//! [`Dataset`] is an ordered collection of samples in one of the supported
//! on-disk formats.
//!
//! # Native directory layout
//!
//! ```text
//! <root>/
//!   meta.json          # format id, grid dims, pitch, subject + sample tables
//!   frames/<id>.csv    # rows of comma-separated non-negative decimals
//!   joints/<id>.json   # optional: ordered [row, col] pairs
//! ```
//!
//! The SLP adapter ([`slp`]) reads the public SLP pressure-array layout
//! read-only; see its module docs for the expected tree.

mod native;
mod npy;
mod slp;
mod split;

pub use native::{load_frame_csv, save_native};
pub use npy::{read_npy_2d, write_npy_2d};
pub use split::{split_loso, split_random_kfold, split_weight_binned, SplitSpec, SplitStrategy};

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// A single pressure image: a rectangular grid of non-negative readings.
///
/// Grid geometry metadata (meters per cell) is optional and carried through
/// loads and saves untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureFrame {
    values: Array2<f64>,
    /// Row pitch in meters per cell, when known.
    pub pitch_row_m: Option<f64>,
    /// Column pitch in meters per cell, when known.
    pub pitch_col_m: Option<f64>,
}

impl PressureFrame {
    /// Wrap a grid of readings, validating non-negativity and non-emptiness.
    pub fn new(values: Array2<f64>) -> Result<Self, DataError> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(DataError::InvalidFrame("empty grid".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DataError::InvalidFrame(
                "values must be finite and >= 0".into(),
            ));
        }
        Ok(Self {
            values,
            pitch_row_m: None,
            pitch_col_m: None,
        })
    }

    /// Build from row-major nested vectors (e.g. parsed CSV lines).
    ///
    /// Fails when rows are ragged.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, DataError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(DataError::InvalidFrame("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((nrows, ncols), flat)
            .map_err(|e| DataError::InvalidFrame(e.to_string()))?;
        Self::new(values)
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Sum of all cell values.
    pub fn sum(&self) -> f64 {
        self.values.sum()
    }

    /// Largest cell value.
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Index of the largest cell (first occurrence in row-major order).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::NEG_INFINITY;
        for ((r, c), &v) in self.values.indexed_iter() {
            if v > best_v {
                best_v = v;
                best = (r, c);
            }
        }
        best
    }

    pub fn with_pitch(mut self, pitch_row_m: Option<f64>, pitch_col_m: Option<f64>) -> Self {
        self.pitch_row_m = pitch_row_m;
        self.pitch_col_m = pitch_col_m;
        self
    }
}

/// Ordered 2D joint positions in frame pixel coordinates (row, col).
///
/// Coordinates may drift outside the frame after augmentation; they are
/// flagged by [`JointSet::out_of_frame`], never clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSet {
    coords: Vec<(f64, f64)>,
}

/// Default number of joints (classic 14-keypoint skeleton).
pub const DEFAULT_JOINT_COUNT: usize = 14;

impl JointSet {
    pub fn new(coords: Vec<(f64, f64)>) -> Result<Self, DataError> {
        if coords.is_empty() {
            return Err(DataError::InvalidFrame("empty joint set".into()));
        }
        if coords.iter().any(|(r, c)| !r.is_finite() || !c.is_finite()) {
            return Err(DataError::InvalidFrame(
                "joint coordinates must be finite".into(),
            ));
        }
        Ok(Self { coords })
    }

    pub fn coords(&self) -> &[(f64, f64)] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Per-joint flags: `true` when the joint lies outside `[0, rows) x [0, cols)`.
    pub fn out_of_frame(&self, rows: usize, cols: usize) -> Vec<bool> {
        self.coords
            .iter()
            .map(|&(r, c)| r < 0.0 || c < 0.0 || r >= rows as f64 || c >= cols as f64)
            .collect()
    }

    /// Apply a coordinate map to every joint.
    pub fn map(&self, f: impl Fn((f64, f64)) -> (f64, f64)) -> Self {
        Self {
            coords: self.coords.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// Lying posture category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Posture {
    Supine,
    LeftSide,
    RightSide,
    Prone,
    Other,
}

impl Posture {
    /// Mirror image of the posture (horizontal flip swaps the sides).
    pub fn hflipped(self) -> Self {
        match self {
            Posture::LeftSide => Posture::RightSide,
            Posture::RightSide => Posture::LeftSide,
            p => p,
        }
    }

    pub const ALL: [Posture; 5] = [
        Posture::Supine,
        Posture::LeftSide,
        Posture::RightSide,
        Posture::Prone,
        Posture::Other,
    ];
}

impl fmt::Display for Posture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Posture::Supine => "supine",
            Posture::LeftSide => "left_side",
            Posture::RightSide => "right_side",
            Posture::Prone => "prone",
            Posture::Other => "other",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Posture {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "supine" => Ok(Posture::Supine),
            "left_side" => Ok(Posture::LeftSide),
            "right_side" => Ok(Posture::RightSide),
            "prone" => Ok(Posture::Prone),
            "other" => Ok(Posture::Other),
            other => Err(DataError::Parse {
                path: Default::default(),
                message: format!("unknown posture {other:?}"),
            }),
        }
    }
}

/// One labeled training unit: a frame plus subject, weight, posture, joints.
#[derive(Debug, Clone)]
pub struct Sample {
    pub frame: PressureFrame,
    pub subject_id: String,
    /// Ground-truth body weight in kilograms; must lie in (0, 500).
    pub weight_kg: f64,
    pub posture: Posture,
    pub joints: Option<JointSet>,
    /// Monotone frame index for time-series data.
    pub timestamp: Option<u64>,
}

impl Sample {
    pub fn new(
        frame: PressureFrame,
        subject_id: impl Into<String>,
        weight_kg: f64,
        posture: Posture,
    ) -> Result<Self, DataError> {
        let subject_id = subject_id.into();
        if !(weight_kg > 0.0 && weight_kg < 500.0) {
            return Err(DataError::InvalidSample {
                id: subject_id,
                message: format!("weight_kg {weight_kg} outside (0, 500)"),
            });
        }
        Ok(Self {
            frame,
            subject_id,
            weight_kg,
            posture,
            joints: None,
            timestamp: None,
        })
    }

    pub fn with_joints(mut self, joints: JointSet) -> Self {
        self.joints = Some(joints);
        self
    }

    pub fn with_timestamp(mut self, t: u64) -> Self {
        self.timestamp = Some(t);
        self
    }
}

/// On-disk dataset flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    SlpPm,
    MassnetStatic,
    MassnetDynamic,
    Synthetic,
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DatasetFormat::SlpPm => "slp_pm",
            DatasetFormat::MassnetStatic => "massnet_static",
            DatasetFormat::MassnetDynamic => "massnet_dynamic",
            DatasetFormat::Synthetic => "synthetic",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for DatasetFormat {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "slp_pm" => Ok(DatasetFormat::SlpPm),
            "massnet_static" => Ok(DatasetFormat::MassnetStatic),
            "massnet_dynamic" => Ok(DatasetFormat::MassnetDynamic),
            "synthetic" => Ok(DatasetFormat::Synthetic),
            other => Err(DataError::Parse {
                path: Default::default(),
                message: format!("unknown dataset format {other:?}"),
            }),
        }
    }
}

/// An ordered, immutable-after-load collection of samples.
#[derive(Debug, Clone)]
pub struct Dataset {
    samples: Vec<Sample>,
    format: DatasetFormat,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, format: DatasetFormat) -> Self {
        Self { samples, format }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn format(&self) -> DatasetFormat {
        self.format
    }

    /// Distinct subject ids, in sorted order.
    pub fn subjects(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.samples.iter().map(|s| s.subject_id.as_str()).collect();
        set.into_iter().map(String::from).collect()
    }

    /// Sample indices belonging to `subject`.
    pub fn indices_of_subject(&self, subject: &str) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.subject_id == subject)
            .map(|(i, _)| i)
            .collect()
    }

    /// Largest cell value across all frames (used by per-dataset normalization).
    pub fn max_value(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.frame.max())
            .fold(0.0, f64::max)
    }

    /// Clone out the samples at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Vec<Sample> {
        indices.iter().map(|&i| self.samples[i].clone()).collect()
    }
}

/// Load a dataset from `root_path` in the declared format.
///
/// Native formats (`massnet_static`, `massnet_dynamic`, `synthetic`) share the
/// `meta.json` + `frames/` layout; `slp_pm` dispatches to the read-only SLP
/// adapter.
pub fn load_dataset(root_path: &Path, format: DatasetFormat) -> Result<Dataset, DataError> {
    match format {
        DatasetFormat::SlpPm => slp::load_slp(root_path),
        _ => native::load_native(root_path, format),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn frame_rejects_negative_values() {
        let err = PressureFrame::new(array![[0.0, -1.0]]);
        assert!(err.is_err());
    }

    #[test]
    fn frame_rejects_empty_grid() {
        assert!(PressureFrame::new(Array2::zeros((0, 4))).is_err());
    }

    #[test]
    fn frame_from_ragged_rows_fails() {
        let err = PressureFrame::from_rows(vec![vec![1.0, 2.0], vec![3.0]]);
        assert!(err.is_err());
    }

    #[test]
    fn sample_rejects_out_of_range_weight() {
        let frame = PressureFrame::new(array![[1.0]]).unwrap();
        assert!(Sample::new(frame.clone(), "s1", 0.0, Posture::Supine).is_err());
        assert!(Sample::new(frame, "s1", 500.0, Posture::Supine).is_err());
    }

    #[test]
    fn joints_flag_out_of_frame_without_clamping() {
        let joints = JointSet::new(vec![(1.0, 1.0), (-0.5, 2.0), (3.0, 10.0)]).unwrap();
        assert_eq!(
            joints.out_of_frame(4, 4),
            vec![false, true, true],
            "coordinates outside [0, rows) x [0, cols) are flagged"
        );
        // untouched
        assert_eq!(joints.coords()[1], (-0.5, 2.0));
    }

    #[test]
    fn posture_hflip_swaps_sides() {
        assert_eq!(Posture::LeftSide.hflipped(), Posture::RightSide);
        assert_eq!(Posture::RightSide.hflipped(), Posture::LeftSide);
        assert_eq!(Posture::Supine.hflipped(), Posture::Supine);
    }

    #[test]
    fn dataset_subjects_are_sorted_and_unique() {
        let frame = PressureFrame::new(array![[1.0]]).unwrap();
        let mk = |id: &str| Sample::new(frame.clone(), id, 60.0, Posture::Supine).unwrap();
        let ds = Dataset::new(
            vec![mk("b"), mk("a"), mk("b")],
            DatasetFormat::MassnetStatic,
        );
        assert_eq!(ds.subjects(), vec!["a".to_string(), "b".to_string()]);
        assert_eq!(ds.indices_of_subject("b"), vec![0, 2]);
    }
}
