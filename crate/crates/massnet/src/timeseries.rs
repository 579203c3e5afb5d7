//! Gradient-based active/static frame segmentation and session-level weight
//! aggregation for long-term monitoring.
//!
//! The temporal gradient of a frame sequence is the mean absolute per-cell
//! difference between consecutive frames. Hysteresis thresholding splits the
//! series into static and active segments (enter active above `tau_hi`, leave
//! below `tau_lo`); segments shorter than `min_len` merge into a neighbor.
//! The session weight estimate is the duration-weighted mean of per-frame
//! predictions over static segments only, since predictions drift while the
//! subject moves.

use serde::{Deserialize, Serialize};

use crate::data::PressureFrame;
use crate::error::SegmentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentLabel {
    Static,
    Active,
}

/// One contiguous half-open frame range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub label: SegmentLabel,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Alternating static/active segments covering `[0, T)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentList {
    pub segments: Vec<Segment>,
    pub tau_hi: f64,
    pub tau_lo: f64,
}

impl SegmentList {
    /// Coverage and alternation invariants.
    pub fn validate(&self, total: usize) -> Result<(), SegmentError> {
        let mut cursor = 0;
        let mut prev_label = None;
        for seg in &self.segments {
            if seg.start != cursor || seg.is_empty() {
                return Err(SegmentError::InvalidArgument(format!(
                    "segment [{}, {}) breaks coverage at {cursor}",
                    seg.start, seg.end
                )));
            }
            if prev_label == Some(seg.label) {
                return Err(SegmentError::InvalidArgument(
                    "adjacent segments share a label".into(),
                ));
            }
            prev_label = Some(seg.label);
            cursor = seg.end;
        }
        if cursor != total {
            return Err(SegmentError::InvalidArgument(format!(
                "segments cover [0, {cursor}), expected [0, {total})"
            )));
        }
        Ok(())
    }

    pub fn total_len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.end)
    }

    pub fn label_at(&self, t: usize) -> Option<SegmentLabel> {
        self.segments
            .iter()
            .find(|s| t >= s.start && t < s.end)
            .map(|s| s.label)
    }
}

/// Mean absolute per-cell difference between consecutive frames, aligned to
/// length `T` by prepending the first difference.
pub fn temporal_gradient(frames: &[PressureFrame]) -> Result<Vec<f64>, SegmentError> {
    if frames.len() < 2 {
        return Err(SegmentError::InvalidArgument(
            "need at least 2 frames".into(),
        ));
    }
    let dims = (frames[0].rows(), frames[0].cols());
    let cells = (dims.0 * dims.1) as f64;
    let mut g = Vec::with_capacity(frames.len());
    g.push(0.0); // placeholder, replaced by g[1]
    for t in 1..frames.len() {
        let f = &frames[t];
        if (f.rows(), f.cols()) != dims {
            return Err(SegmentError::InvalidArgument(format!(
                "frame {t} is {}x{}, expected {}x{}",
                f.rows(),
                f.cols(),
                dims.0,
                dims.1
            )));
        }
        let mut acc = 0.0;
        for (a, b) in f.values().iter().zip(frames[t - 1].values()) {
            acc += (a - b).abs();
        }
        g.push(acc / cells);
    }
    g[0] = g[1];
    Ok(g)
}

/// Default hysteresis thresholds: 5x and 2x the median gradient.
pub fn default_thresholds(gradient: &[f64]) -> (f64, f64) {
    let median = crate::synthetic::quantile(gradient, 0.5).max(1e-12);
    (5.0 * median, 2.0 * median)
}

/// Hysteresis segmentation: enter active when the gradient exceeds `tau_hi`,
/// return to static when it drops below `tau_lo`. Segments shorter than
/// `min_len` are merged into their longer neighbor.
pub fn segment_frames(
    gradient: &[f64],
    tau_hi: f64,
    tau_lo: f64,
    min_len: usize,
) -> Result<SegmentList, SegmentError> {
    if !(tau_lo > 0.0 && tau_hi >= tau_lo) {
        return Err(SegmentError::InvalidArgument(format!(
            "need tau_hi >= tau_lo > 0, got ({tau_hi}, {tau_lo})"
        )));
    }
    if min_len < 1 {
        return Err(SegmentError::InvalidArgument("min_len must be >= 1".into()));
    }
    if gradient.is_empty() {
        return Err(SegmentError::InvalidArgument("empty gradient".into()));
    }

    // state machine pass
    let mut segments: Vec<Segment> = Vec::new();
    let mut label = if gradient[0] > tau_hi {
        SegmentLabel::Active
    } else {
        SegmentLabel::Static
    };
    let mut start = 0;
    for (t, &g) in gradient.iter().enumerate().skip(1) {
        let next = match label {
            SegmentLabel::Static if g > tau_hi => SegmentLabel::Active,
            SegmentLabel::Active if g < tau_lo => SegmentLabel::Static,
            l => l,
        };
        if next != label {
            segments.push(Segment {
                start,
                end: t,
                label,
            });
            start = t;
            label = next;
        }
    }
    segments.push(Segment {
        start,
        end: gradient.len(),
        label,
    });

    // merge short segments into their longer neighbor, coalescing as we go
    loop {
        let Some(idx) = segments
            .iter()
            .position(|s| s.len() < min_len && segments.len() > 1)
        else {
            break;
        };
        let merged_label = if idx == 0 {
            segments[1].label
        } else if idx == segments.len() - 1 {
            segments[idx - 1].label
        } else if segments[idx - 1].len() >= segments[idx + 1].len() {
            segments[idx - 1].label
        } else {
            segments[idx + 1].label
        };
        segments[idx].label = merged_label;
        // coalesce adjacent equal labels
        let mut out: Vec<Segment> = Vec::with_capacity(segments.len());
        for seg in segments {
            match out.last_mut() {
                Some(last) if last.label == seg.label => last.end = seg.end,
                _ => out.push(seg),
            }
        }
        segments = out;
    }

    let list = SegmentList {
        segments,
        tau_hi,
        tau_lo,
    };
    list.validate(gradient.len())?;
    Ok(list)
}

/// Per-label prediction statistics for a session report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelStats {
    pub n_frames: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

fn stats_for(values: &[f64]) -> LabelStats {
    if values.is_empty() {
        return LabelStats {
            n_frames: 0,
            mean: 0.0,
            std: 0.0,
            min: 0.0,
            max: 0.0,
        };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    LabelStats {
        n_frames: values.len(),
        mean,
        std: var.sqrt(),
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Session aggregation output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightAggregate {
    /// Duration-weighted mean of predictions over static segments.
    pub estimate_kg: f64,
    pub static_stats: LabelStats,
    pub active_stats: LabelStats,
}

/// Aggregate per-frame predictions into a session weight estimate using only
/// the static segments.
pub fn aggregate_weight(
    predictions: &[f64],
    segments: &SegmentList,
) -> Result<WeightAggregate, SegmentError> {
    segments.validate(predictions.len()).map_err(|_| {
        SegmentError::InvalidArgument(format!(
            "segments cover [0, {}), predictions have length {}",
            segments.total_len(),
            predictions.len()
        ))
    })?;

    let mut static_vals = Vec::new();
    let mut active_vals = Vec::new();
    for seg in &segments.segments {
        let slice = &predictions[seg.start..seg.end];
        match seg.label {
            SegmentLabel::Static => static_vals.extend_from_slice(slice),
            SegmentLabel::Active => active_vals.extend_from_slice(slice),
        }
    }
    if static_vals.is_empty() {
        return Err(SegmentError::NoStaticFrames);
    }
    let estimate_kg = static_vals.iter().sum::<f64>() / static_vals.len() as f64;
    Ok(WeightAggregate {
        estimate_kg,
        static_stats: stats_for(&static_vals),
        active_stats: stats_for(&active_vals),
    })
}

/// Intersection over union of detected active frames vs ground-truth windows.
pub fn active_iou(segments: &SegmentList, truth: &[(usize, usize)]) -> f64 {
    let total = segments.total_len();
    let mut detected = vec![false; total];
    for seg in &segments.segments {
        if seg.label == SegmentLabel::Active {
            for t in seg.start..seg.end {
                detected[t] = true;
            }
        }
    }
    let mut actual = vec![false; total];
    for &(start, end) in truth {
        for t in start..end.min(total) {
            actual[t] = true;
        }
    }
    let intersection = detected
        .iter()
        .zip(&actual)
        .filter(|(d, a)| **d && **a)
        .count();
    let union = detected.iter().zip(&actual).filter(|(d, a)| **d || **a).count();
    if union == 0 {
        1.0
    } else {
        intersection as f64 / union as f64
    }
}
