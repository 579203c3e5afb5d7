//! The native on-disk dataset format.
//!
//! `meta.json` carries the format id, grid geometry, the subject table, and
//! the ordered sample table; frame values live in one CSV per sample and
//! joints in one optional JSON per sample. Values round-trip bit-exactly:
//! they are written with Rust's shortest-round-trip float formatting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetFormat, JointSet, Posture, PressureFrame, Sample};
use crate::error::DataError;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_id: DatasetFormat,
    rows: usize,
    cols: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pitch_row_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pitch_col_m: Option<f64>,
    subjects: Vec<SubjectEntry>,
    samples: Vec<SampleEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SubjectEntry {
    id: String,
    weight_kg: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleEntry {
    id: String,
    subject_id: String,
    posture: Posture,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<u64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write `dataset` under `root` in the native layout, creating directories.
pub fn save_native(dataset: &Dataset, root: &Path) -> Result<(), DataError> {
    if dataset.is_empty() {
        return Err(DataError::NoSamples(root.to_path_buf()));
    }
    let first = &dataset.samples()[0].frame;
    let (rows, cols) = (first.rows(), first.cols());

    fs::create_dir_all(root.join("frames")).map_err(io_err(root))?;
    let have_joints = dataset.samples().iter().any(|s| s.joints.is_some());
    if have_joints {
        fs::create_dir_all(root.join("joints")).map_err(io_err(root))?;
    }

    let mut subjects: BTreeMap<String, f64> = BTreeMap::new();
    let mut sample_entries = Vec::with_capacity(dataset.len());
    for (i, s) in dataset.samples().iter().enumerate() {
        if s.frame.rows() != rows || s.frame.cols() != cols {
            return Err(DataError::DimensionMismatch {
                id: format!("{i:06}"),
                expected_rows: rows,
                expected_cols: cols,
                rows: s.frame.rows(),
                cols: s.frame.cols(),
            });
        }
        subjects.entry(s.subject_id.clone()).or_insert(s.weight_kg);
        let id = format!("{i:06}");

        let mut csv = String::new();
        for r in 0..rows {
            let line: Vec<String> = (0..cols)
                .map(|c| format!("{}", s.frame.values()[(r, c)]))
                .collect();
            csv.push_str(&line.join(","));
            csv.push('\n');
        }
        let frame_path = root.join("frames").join(format!("{id}.csv"));
        fs::write(&frame_path, csv).map_err(io_err(&frame_path))?;

        if let Some(joints) = &s.joints {
            let pairs: Vec<[f64; 2]> = joints.coords().iter().map(|&(r, c)| [r, c]).collect();
            let joint_path = root.join("joints").join(format!("{id}.json"));
            let body = serde_json::to_string(&pairs)
                .map_err(|e| DataError::Parse {
                    path: joint_path.clone(),
                    message: e.to_string(),
                })?;
            fs::write(&joint_path, body).map_err(io_err(&joint_path))?;
        }

        sample_entries.push(SampleEntry {
            id,
            subject_id: s.subject_id.clone(),
            posture: s.posture,
            timestamp: s.timestamp,
        });
    }

    let meta = Meta {
        format_id: dataset.format(),
        rows,
        cols,
        pitch_row_m: first.pitch_row_m,
        pitch_col_m: first.pitch_col_m,
        subjects: subjects
            .into_iter()
            .map(|(id, weight_kg)| SubjectEntry { id, weight_kg })
            .collect(),
        samples: sample_entries,
    };
    let meta_path = root.join("meta.json");
    let body = serde_json::to_string_pretty(&meta).map_err(|e| DataError::Parse {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;
    fs::write(&meta_path, body).map_err(io_err(&meta_path))?;
    Ok(())
}

/// Load a single frame from a CSV of comma-separated non-negative decimals.
pub fn load_frame_csv(path: &Path) -> Result<PressureFrame, DataError> {
    PressureFrame::from_rows(parse_frame_csv(path)?)
}

fn parse_frame_csv(path: &Path) -> Result<Vec<Vec<f64>>, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", lineno + 1),
        })?);
    }
    Ok(rows)
}

/// Load a native-format dataset rooted at `root`, checking that every frame
/// matches the grid declared in `meta.json` and that the format id matches
/// the caller's expectation.
pub fn load_native(root: &Path, expected: DatasetFormat) -> Result<Dataset, DataError> {
    let meta_path = root.join("meta.json");
    if !meta_path.exists() {
        if !root.exists() {
            return Err(DataError::Io {
                path: root.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such directory"),
            });
        }
        return Err(DataError::NoSamples(root.to_path_buf()));
    }
    let meta: Meta = serde_json::from_str(
        &fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?,
    )
    .map_err(|e| DataError::Parse {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;

    if meta.format_id != expected {
        return Err(DataError::Parse {
            path: meta_path.clone(),
            message: format!(
                "format_id is {}, expected {expected}",
                meta.format_id
            ),
        });
    }
    if meta.samples.is_empty() {
        return Err(DataError::NoSamples(root.to_path_buf()));
    }

    let subject_weights: BTreeMap<&str, f64> = meta
        .subjects
        .iter()
        .map(|s| (s.id.as_str(), s.weight_kg))
        .collect();

    let mut samples = Vec::with_capacity(meta.samples.len());
    for entry in &meta.samples {
        let frame_path: PathBuf = root.join("frames").join(format!("{}.csv", entry.id));
        let rows = parse_frame_csv(&frame_path)?;
        let frame = PressureFrame::from_rows(rows)?
            .with_pitch(meta.pitch_row_m, meta.pitch_col_m);
        if frame.rows() != meta.rows || frame.cols() != meta.cols {
            return Err(DataError::DimensionMismatch {
                id: entry.id.clone(),
                expected_rows: meta.rows,
                expected_cols: meta.cols,
                rows: frame.rows(),
                cols: frame.cols(),
            });
        }
        let weight = *subject_weights.get(entry.subject_id.as_str()).ok_or_else(|| {
            DataError::Parse {
                path: meta_path.clone(),
                message: format!(
                    "sample {} references unknown subject {}",
                    entry.id, entry.subject_id
                ),
            }
        })?;
        let mut sample = Sample::new(frame, entry.subject_id.clone(), weight, entry.posture)?;
        sample.timestamp = entry.timestamp;

        let joint_path = root.join("joints").join(format!("{}.json", entry.id));
        if joint_path.exists() {
            let pairs: Vec<[f64; 2]> = serde_json::from_str(
                &fs::read_to_string(&joint_path).map_err(io_err(&joint_path))?,
            )
            .map_err(|e| DataError::Parse {
                path: joint_path.clone(),
                message: e.to_string(),
            })?;
            sample.joints = Some(JointSet::new(
                pairs.into_iter().map(|[r, c]| (r, c)).collect(),
            )?);
        }
        samples.push(sample);
    }

    Ok(Dataset::new(samples, meta.format_id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::load_dataset;
    use ndarray::Array2;
    use tempfile::TempDir;

    fn build_dataset() -> Dataset {
        let mut samples = Vec::new();
        for i in 0..4 {
            // values that exercise round-tripping (non-terminating binary fractions)
            let mut grid = Array2::zeros((3, 5));
            for ((r, c), v) in grid.indexed_iter_mut() {
                *v = (r as f64 * 5.0 + c as f64) * 0.1 + i as f64 / 3.0;
            }
            let frame = PressureFrame::new(grid)
                .unwrap()
                .with_pitch(Some(0.031), Some(0.024));
            // two subjects, each with one consistent weight
            let weight = 60.5 + (i % 2) as f64;
            let mut s =
                Sample::new(frame, format!("s{}", i % 2), weight, Posture::Supine).unwrap();
            if i == 0 {
                s.joints = Some(JointSet::new(vec![(1.25, 2.75), (0.0, 4.0)]).unwrap());
            }
            samples.push(s);
        }
        Dataset::new(samples, DatasetFormat::MassnetStatic)
    }

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let dir = TempDir::new().unwrap();
        let ds = build_dataset();
        save_native(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path(), DatasetFormat::MassnetStatic).unwrap();

        assert_eq!(back.len(), ds.len());
        for (a, b) in ds.samples().iter().zip(back.samples()) {
            assert_eq!(a.frame.values(), b.frame.values(), "frame values bit-exact");
            assert_eq!(a.subject_id, b.subject_id);
            assert_eq!(a.weight_kg, b.weight_kg);
            assert_eq!(a.posture, b.posture);
            assert_eq!(a.joints, b.joints);
        }
        // a second round trip through the reloaded dataset is also stable
        let dir2 = TempDir::new().unwrap();
        save_native(&back, dir2.path()).unwrap();
        let back2 = load_dataset(dir2.path(), DatasetFormat::MassnetStatic).unwrap();
        for (a, b) in back.samples().iter().zip(back2.samples()) {
            assert_eq!(a.frame.values(), b.frame.values());
        }
    }

    #[test]
    fn empty_directory_reports_no_samples() {
        let dir = TempDir::new().unwrap();
        let err = load_dataset(dir.path(), DatasetFormat::MassnetStatic).unwrap_err();
        assert!(matches!(err, DataError::NoSamples(_)), "{err}");
    }

    #[test]
    fn missing_frame_file_names_the_path() {
        let dir = TempDir::new().unwrap();
        let ds = build_dataset();
        save_native(&ds, dir.path()).unwrap();
        fs::remove_file(dir.path().join("frames/000002.csv")).unwrap();
        let err = load_dataset(dir.path(), DatasetFormat::MassnetStatic).unwrap_err();
        assert!(err.to_string().contains("000002.csv"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_a_format_error() {
        let dir = TempDir::new().unwrap();
        let ds = build_dataset();
        save_native(&ds, dir.path()).unwrap();
        fs::write(dir.path().join("frames/000001.csv"), "1,2\n3,4\n").unwrap();
        let err = load_dataset(dir.path(), DatasetFormat::MassnetStatic).unwrap_err();
        assert!(matches!(err, DataError::DimensionMismatch { .. }), "{err}");
    }

    #[test]
    fn corrupt_csv_names_path_and_line() {
        let dir = TempDir::new().unwrap();
        let ds = build_dataset();
        save_native(&ds, dir.path()).unwrap();
        fs::write(
            dir.path().join("frames/000000.csv"),
            "1,2,3,4,5\n1,oops,3,4,5\n1,2,3,4,5\n",
        )
        .unwrap();
        let err = load_dataset(dir.path(), DatasetFormat::MassnetStatic).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("000000.csv") && msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn format_id_mismatch_rejected() {
        let dir = TempDir::new().unwrap();
        save_native(&build_dataset(), dir.path()).unwrap();
        let err = load_dataset(dir.path(), DatasetFormat::Synthetic).unwrap_err();
        assert!(err.to_string().contains("format_id"), "{err}");
    }
}
