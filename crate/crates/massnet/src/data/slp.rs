//! Read-only adapter for the SLP pressure-array layout.
//!
//! Expected tree (pressure modality of the lab setting):
//!
//! ```text
//! <root>/
//!   physiqueData.csv            # per-subject physique table; a header row
//!                               # names a weight column ("weight" or
//!                               # "weight (kg)", case-insensitive)
//!   00001/PMarray/uncover/000001.npy .. 000045.npy   # 192x84 frames
//!   00002/PMarray/uncover/...
//! ```
//!
//! Row `i` of `physiqueData.csv` describes subject directory `i` in sorted
//! order. Pose indices follow the collection protocol: 1-15 supine, 16-30
//! left side, 31-45 right side. Joint annotations are not read; samples come
//! back without joints.

use std::fs;
use std::path::Path;

use super::npy::read_npy_2d;
use super::{Dataset, DatasetFormat, Posture, PressureFrame, Sample};
use crate::error::DataError;

pub const SLP_ROWS: usize = 192;
pub const SLP_COLS: usize = 84;

fn posture_for_pose_index(idx: usize) -> Posture {
    match idx {
        1..=15 => Posture::Supine,
        16..=30 => Posture::LeftSide,
        31..=45 => Posture::RightSide,
        _ => Posture::Other,
    }
}

fn read_weights(root: &Path) -> Result<Vec<f64>, DataError> {
    let path = root.join("physiqueData.csv");
    let text = fs::read_to_string(&path).map_err(|source| DataError::Io {
        path: path.clone(),
        source,
    })?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| DataError::Parse {
        path: path.clone(),
        message: "empty physique table".into(),
    })?;
    let weight_col = header
        .split(',')
        .position(|h| h.trim().to_ascii_lowercase().starts_with("weight"))
        .ok_or_else(|| DataError::Parse {
            path: path.clone(),
            message: "no weight column in header".into(),
        })?;

    let mut weights = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let field = line.split(',').nth(weight_col).ok_or_else(|| DataError::Parse {
            path: path.clone(),
            message: format!("line {}: missing weight field", lineno + 2),
        })?;
        let w: f64 = field.trim().parse().map_err(|e| DataError::Parse {
            path: path.clone(),
            message: format!("line {}: {e}", lineno + 2),
        })?;
        weights.push(w);
    }
    Ok(weights)
}

pub fn load_slp(root: &Path) -> Result<Dataset, DataError> {
    if !root.exists() {
        return Err(DataError::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
        });
    }
    let weights = read_weights(root)?;

    let mut subject_dirs: Vec<_> = fs::read_dir(root)
        .map_err(|source| DataError::Io {
            path: root.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.chars().all(|c| c.is_ascii_digit()))
        })
        .collect();
    subject_dirs.sort();

    let mut samples = Vec::new();
    for (subject_idx, dir) in subject_dirs.iter().enumerate() {
        let subject_id = dir
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_string();
        let weight = *weights.get(subject_idx).ok_or_else(|| DataError::Parse {
            path: root.join("physiqueData.csv"),
            message: format!("no physique row for subject directory {subject_id}"),
        })?;

        let pm_dir = dir.join("PMarray").join("uncover");
        let mut frame_files: Vec<_> = fs::read_dir(&pm_dir)
            .map_err(|source| DataError::Io {
                path: pm_dir.clone(),
                source,
            })?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "npy"))
            .collect();
        frame_files.sort();

        for path in frame_files {
            let grid = read_npy_2d(&path)?;
            if grid.nrows() != SLP_ROWS || grid.ncols() != SLP_COLS {
                return Err(DataError::DimensionMismatch {
                    id: path.display().to_string(),
                    expected_rows: SLP_ROWS,
                    expected_cols: SLP_COLS,
                    rows: grid.nrows(),
                    cols: grid.ncols(),
                });
            }
            // Guard against slightly negative calibration artifacts.
            let grid = grid.mapv(|v| v.max(0.0));
            let pose_idx: usize = path
                .file_stem()
                .and_then(|s| s.to_str())
                .and_then(|s| s.trim_start_matches(|c: char| !c.is_ascii_digit()).parse().ok())
                .unwrap_or(0);
            let frame = PressureFrame::new(grid)?.with_pitch(Some(0.01), Some(0.01));
            samples.push(Sample::new(
                frame,
                subject_id.clone(),
                weight,
                posture_for_pose_index(pose_idx),
            )?);
        }
    }

    if samples.is_empty() {
        return Err(DataError::NoSamples(root.to_path_buf()));
    }
    Ok(Dataset::new(samples, DatasetFormat::SlpPm))
}
