//! Deterministic frame preprocessing and label-consistent augmentation.
//!
//! The pipeline order is fixed: bilinear upsample, Gaussian smooth, center
//! zero-pad to the target size, normalize. Joint coordinates ride through the
//! same geometric chain (scale by the upsample factor, shift by the pad
//! margins) and come out scaled to `[0, 1]` by the target dims.
//!
//! Augmentations (horizontal flip, rotation, shift) transform frame and
//! joints with the identical map and never touch the weight label; a flip
//! swaps the side postures. [`inject_joint_noise`] emulates the error of a
//! pressure-only pose estimator with per-coordinate Gaussian noise.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{JointSet, PressureFrame, Sample};
use crate::error::PreprocessError;

/// Normalization applied as the last pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    PerDatasetMax,
    PerFrameMax,
    None,
}

/// All preprocessing knobs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub upsample_factor: usize,
    pub gaussian_kernel: usize,
    pub gaussian_sigma: f64,
    pub target_rows: usize,
    pub target_cols: usize,
    pub normalization: Normalization,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            upsample_factor: 3,
            gaussian_kernel: 5,
            gaussian_sigma: 1.0,
            target_rows: 192,
            target_cols: 192,
            normalization: Normalization::PerDatasetMax,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.upsample_factor < 1 {
            return Err(PreprocessError::InvalidArgument(
                "upsample_factor must be >= 1".into(),
            ));
        }
        if self.gaussian_kernel % 2 == 0 {
            return Err(PreprocessError::InvalidArgument(
                "gaussian_kernel must be odd".into(),
            ));
        }
        if self.gaussian_sigma <= 0.0 {
            return Err(PreprocessError::InvalidArgument(
                "gaussian_sigma must be > 0".into(),
            ));
        }
        if self.target_rows == 0 || self.target_cols == 0 {
            return Err(PreprocessError::InvalidArgument(
                "target dims must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn arg_err(msg: impl Into<String>) -> PreprocessError {
    PreprocessError::InvalidArgument(msg.into())
}

/// Corner-aligned bilinear upsampling by an integer factor.
pub fn upsample_bilinear(
    frame: &PressureFrame,
    factor: usize,
) -> Result<PressureFrame, PreprocessError> {
    if factor < 1 {
        return Err(arg_err("factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(frame.clone());
    }
    let (rows, cols) = (frame.rows(), frame.cols());
    let (out_rows, out_cols) = (rows * factor, cols * factor);
    let x = frame.values();

    let src = |d: usize, n_in: usize, n_out: usize| -> f64 {
        if n_out <= 1 || n_in <= 1 {
            0.0
        } else {
            d as f64 * (n_in - 1) as f64 / (n_out - 1) as f64
        }
    };

    let mut out = Array2::zeros((out_rows, out_cols));
    for r in 0..out_rows {
        let sr = src(r, rows, out_rows);
        let r0 = sr.floor() as usize;
        let r1 = (r0 + 1).min(rows - 1);
        let fr = sr - r0 as f64;
        for c in 0..out_cols {
            let sc = src(c, cols, out_cols);
            let c0 = sc.floor() as usize;
            let c1 = (c0 + 1).min(cols - 1);
            let fc = sc - c0 as f64;
            out[(r, c)] = x[(r0, c0)] * (1.0 - fr) * (1.0 - fc)
                + x[(r1, c0)] * fr * (1.0 - fc)
                + x[(r0, c1)] * (1.0 - fr) * fc
                + x[(r1, c1)] * fr * fc;
        }
    }
    Ok(PressureFrame::new(out)
        .expect("bilinear interpolation preserves non-negativity")
        .with_pitch(frame.pitch_row_m, frame.pitch_col_m))
}

/// The normalized 2D Gaussian kernel used by [`gaussian_smooth`].
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Array2<f64>, PreprocessError> {
    if size % 2 == 0 {
        return Err(arg_err("kernel size must be odd"));
    }
    if sigma <= 0.0 {
        return Err(arg_err("sigma must be > 0"));
    }
    let half = (size / 2) as isize;
    let mut k = Array2::zeros((size, size));
    for i in -half..=half {
        for j in -half..=half {
            let v = (-((i * i + j * j) as f64) / (2.0 * sigma * sigma)).exp();
            k[((i + half) as usize, (j + half) as usize)] = v;
        }
    }
    let sum = k.sum();
    k.mapv_inplace(|v| v / sum);
    Ok(k)
}

/// 2D convolution with a normalized Gaussian kernel and reflect padding.
pub fn gaussian_smooth(
    frame: &PressureFrame,
    kernel: usize,
    sigma: f64,
) -> Result<PressureFrame, PreprocessError> {
    let k = gaussian_kernel(kernel, sigma)?;
    let (rows, cols) = (frame.rows(), frame.cols());
    let half = (kernel / 2) as isize;
    let x = frame.values();

    // symmetric reflection: -1 -> 0, n -> n-1
    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            if i < 0 {
                i = -i - 1;
            }
            if i >= n {
                i = 2 * n - i - 1;
            }
        }
        i as usize
    };

    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for dr in -half..=half {
                for dc in -half..=half {
                    let sr = reflect(r as isize + dr, rows);
                    let sc = reflect(c as isize + dc, cols);
                    acc += x[(sr, sc)] * k[((dr + half) as usize, (dc + half) as usize)];
                }
            }
            out[(r, c)] = acc.max(0.0);
        }
    }
    Ok(PressureFrame::new(out)
        .expect("smoothing preserves non-negativity")
        .with_pitch(frame.pitch_row_m, frame.pitch_col_m))
}

/// Pad margins for centering `size` inside `target` (extra cell goes to the
/// bottom/right side).
pub fn pad_margins(size: usize, target: usize) -> (usize, usize) {
    let lead = (target - size) / 2;
    (lead, target - size - lead)
}

/// Place the frame centered inside a zero grid of the target size.
pub fn pad_center(
    frame: &PressureFrame,
    target_rows: usize,
    target_cols: usize,
) -> Result<PressureFrame, PreprocessError> {
    let (rows, cols) = (frame.rows(), frame.cols());
    if rows > target_rows || cols > target_cols {
        return Err(arg_err(format!(
            "frame {rows}x{cols} larger than target {target_rows}x{target_cols}"
        )));
    }
    let (top, _) = pad_margins(rows, target_rows);
    let (left, _) = pad_margins(cols, target_cols);
    let mut out = Array2::zeros((target_rows, target_cols));
    out.slice_mut(ndarray::s![top..top + rows, left..left + cols])
        .assign(frame.values());
    Ok(PressureFrame::new(out)
        .expect("zero padding preserves non-negativity")
        .with_pitch(frame.pitch_row_m, frame.pitch_col_m))
}

/// Scale frame values per the configured normalization mode.
pub fn normalize_frame(
    frame: &PressureFrame,
    mode: Normalization,
    dataset_max: f64,
) -> Result<PressureFrame, PreprocessError> {
    let out = match mode {
        Normalization::None => frame.values().clone(),
        Normalization::PerDatasetMax => {
            if dataset_max <= 0.0 {
                return Err(arg_err("dataset_max must be > 0 for per_dataset_max"));
            }
            frame.values().mapv(|v| v / dataset_max)
        }
        Normalization::PerFrameMax => {
            let max = frame.max();
            if max == 0.0 {
                frame.values().clone()
            } else {
                frame.values().mapv(|v| v / max)
            }
        }
    };
    Ok(PressureFrame::new(out)
        .expect("scaling preserves non-negativity")
        .with_pitch(frame.pitch_row_m, frame.pitch_col_m))
}

/// A label-consistent geometric augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugmentOp {
    HFlip,
    /// Rotation about the frame center, degrees, positive counterclockwise
    /// in (row, col) coordinates. Bounded to +/-15.
    Rotate(f64),
    /// Integer cell shift (rows, cols); bounded to 10% of the frame dims.
    Shift(i64, i64),
}

fn rotate_point(p: (f64, f64), center: (f64, f64), theta_rad: f64) -> (f64, f64) {
    let (sin, cos) = theta_rad.sin_cos();
    let dr = p.0 - center.0;
    let dc = p.1 - center.1;
    (
        center.0 + cos * dr - sin * dc,
        center.1 + sin * dr + cos * dc,
    )
}

fn rotate_frame(frame: &PressureFrame, theta_deg: f64) -> PressureFrame {
    let (rows, cols) = (frame.rows(), frame.cols());
    let center = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
    let theta = theta_deg.to_radians();
    let x = frame.values();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            // inverse map: where did this output cell come from?
            let (sr, sc) = rotate_point((r as f64, c as f64), center, -theta);
            if sr < 0.0 || sc < 0.0 || sr > (rows - 1) as f64 || sc > (cols - 1) as f64 {
                continue;
            }
            let r0 = sr.floor() as usize;
            let c0 = sc.floor() as usize;
            let r1 = (r0 + 1).min(rows - 1);
            let c1 = (c0 + 1).min(cols - 1);
            let fr = sr - r0 as f64;
            let fc = sc - c0 as f64;
            out[(r, c)] = x[(r0, c0)] * (1.0 - fr) * (1.0 - fc)
                + x[(r1, c0)] * fr * (1.0 - fc)
                + x[(r0, c1)] * (1.0 - fr) * fc
                + x[(r1, c1)] * fr * fc;
        }
    }
    PressureFrame::new(out)
        .expect("rotation resampling preserves non-negativity")
        .with_pitch(frame.pitch_row_m, frame.pitch_col_m)
}

fn shift_frame(frame: &PressureFrame, dr: i64, dc: i64) -> PressureFrame {
    let (rows, cols) = (frame.rows(), frame.cols());
    let x = frame.values();
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let sr = r as i64 - dr;
            let sc = c as i64 - dc;
            if sr >= 0 && sc >= 0 && (sr as usize) < rows && (sc as usize) < cols {
                out[(r, c)] = x[(sr as usize, sc as usize)];
            }
        }
    }
    PressureFrame::new(out)
        .expect("shifting preserves non-negativity")
        .with_pitch(frame.pitch_row_m, frame.pitch_col_m)
}

/// Apply `op` to frame and joints with the identical geometric map; the
/// weight label is untouched, side postures swap under a flip.
pub fn augment_sample(sample: &Sample, op: AugmentOp) -> Result<Sample, PreprocessError> {
    let rows = sample.frame.rows();
    let cols = sample.frame.cols();
    let mut out = sample.clone();
    match op {
        AugmentOp::HFlip => {
            let x = sample.frame.values();
            let mut flipped = Array2::zeros((rows, cols));
            for r in 0..rows {
                for c in 0..cols {
                    flipped[(r, c)] = x[(r, cols - 1 - c)];
                }
            }
            out.frame = PressureFrame::new(flipped)
                .expect("flip preserves non-negativity")
                .with_pitch(sample.frame.pitch_row_m, sample.frame.pitch_col_m);
            out.joints = sample
                .joints
                .as_ref()
                .map(|j| j.map(|(r, c)| (r, (cols - 1) as f64 - c)));
            out.posture = sample.posture.hflipped();
        }
        AugmentOp::Rotate(theta) => {
            if !(-15.0..=15.0).contains(&theta) {
                return Err(arg_err(format!("rotation {theta} outside [-15, 15] degrees")));
            }
            out.frame = rotate_frame(&sample.frame, theta);
            let center = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
            out.joints = sample
                .joints
                .as_ref()
                .map(|j| j.map(|p| rotate_point(p, center, theta.to_radians())));
        }
        AugmentOp::Shift(dr, dc) => {
            let max_dr = (0.1 * rows as f64).floor() as i64;
            let max_dc = (0.1 * cols as f64).floor() as i64;
            if dr.abs() > max_dr || dc.abs() > max_dc {
                return Err(arg_err(format!(
                    "shift ({dr}, {dc}) beyond 10% bound ({max_dr}, {max_dc})"
                )));
            }
            out.frame = shift_frame(&sample.frame, dr, dc);
            out.joints = sample
                .joints
                .as_ref()
                .map(|j| j.map(|(r, c)| (r + dr as f64, c + dc as f64)));
        }
    }
    Ok(out)
}

/// Augmentation magnitude bounds used when drawing random ops.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub hflip: bool,
    pub max_rotate_deg: f64,
    pub max_shift_frac: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            hflip: true,
            max_rotate_deg: 15.0,
            max_shift_frac: 0.1,
        }
    }
}

/// Draw and apply one random flip + rotation + shift combination.
///
/// The RNG is consumed in a fixed order (flip, angle, dr, dc) so training
/// stays reproducible for a given seed.
pub fn random_augment<R: Rng>(
    sample: &Sample,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Sample, PreprocessError> {
    if !cfg.enabled {
        return Ok(sample.clone());
    }
    let flip = cfg.hflip && rng.random_bool(0.5);
    let theta = rng.random_range(-cfg.max_rotate_deg..=cfg.max_rotate_deg);
    let max_dr = (cfg.max_shift_frac * sample.frame.rows() as f64).floor() as i64;
    let max_dc = (cfg.max_shift_frac * sample.frame.cols() as f64).floor() as i64;
    let dr = rng.random_range(-max_dr..=max_dr);
    let dc = rng.random_range(-max_dc..=max_dc);

    let mut out = sample.clone();
    if flip {
        out = augment_sample(&out, AugmentOp::HFlip)?;
    }
    if theta != 0.0 {
        out = augment_sample(&out, AugmentOp::Rotate(theta))?;
    }
    if dr != 0 || dc != 0 {
        out = augment_sample(&out, AugmentOp::Shift(dr, dc))?;
    }
    Ok(out)
}

/// Sigma that makes the expected per-joint L1 error equal `l1_px`, using the
/// folded-normal mean: E|x| + E|y| = 2 sigma sqrt(2/pi).
pub fn sigma_for_l1(l1_px: f64) -> f64 {
    l1_px / (2.0 * (2.0 / std::f64::consts::PI).sqrt())
}

/// Perturb each joint coordinate with independent zero-mean Gaussian noise of
/// standard deviation `sigma_px`.
pub fn inject_joint_noise<R: Rng>(
    joints: &JointSet,
    sigma_px: f64,
    rng: &mut R,
) -> Result<JointSet, PreprocessError> {
    if sigma_px < 0.0 {
        return Err(arg_err("sigma_px must be >= 0"));
    }
    if sigma_px == 0.0 {
        return Ok(joints.clone());
    }
    let normal = Normal::new(0.0, sigma_px).map_err(|e| arg_err(e.to_string()))?;
    let coords = joints
        .coords()
        .iter()
        .map(|&(r, c)| (r + normal.sample(rng), c + normal.sample(rng)))
        .collect();
    JointSet::new(coords).map_err(|e| arg_err(e.to_string()))
}

/// Output of [`preprocess_pipeline`]: the resized frame tensor plus the
/// flattened, `[0, 1]`-scaled joint vector.
#[derive(Debug, Clone)]
pub struct ProcessedSample {
    /// `target_rows x target_cols` grid.
    pub frame: Array2<f64>,
    /// Row-major `[r0, c0, r1, c1, ...]`, length `2 J`; zeros when absent.
    pub joints: Array1<f64>,
    pub joints_present: bool,
}

/// Map a joint coordinate through the upsample + pad chain.
fn map_joint_through_pipeline(
    (r, c): (f64, f64),
    factor: usize,
    pad_top: usize,
    pad_left: usize,
    target_rows: usize,
    target_cols: usize,
) -> (f64, f64) {
    let r = r * factor as f64 + pad_top as f64;
    let c = c * factor as f64 + pad_left as f64;
    (r / target_rows as f64, c / target_cols as f64)
}

/// Run the full pipeline: upsample, smooth, pad, normalize; joints follow the
/// same geometric chain and are scaled to `[0, 1]` by the target dims.
pub fn preprocess_pipeline(
    sample: &Sample,
    cfg: &PreprocessConfig,
    dataset_max: f64,
    joint_count: usize,
) -> Result<ProcessedSample, PreprocessError> {
    cfg.validate()?;
    let up = upsample_bilinear(&sample.frame, cfg.upsample_factor)?;
    let smooth = gaussian_smooth(&up, cfg.gaussian_kernel, cfg.gaussian_sigma)?;
    let padded = pad_center(&smooth, cfg.target_rows, cfg.target_cols)?;
    let frame = normalize_frame(&padded, cfg.normalization, dataset_max)?;

    let (pad_top, _) = pad_margins(smooth.rows(), cfg.target_rows);
    let (pad_left, _) = pad_margins(smooth.cols(), cfg.target_cols);

    let mut joints = Array1::zeros(2 * joint_count);
    let joints_present = match &sample.joints {
        Some(j) => {
            if j.len() != joint_count {
                return Err(arg_err(format!(
                    "expected {joint_count} joints, found {}",
                    j.len()
                )));
            }
            for (i, &p) in j.coords().iter().enumerate() {
                let (rn, cn) = map_joint_through_pipeline(
                    p,
                    cfg.upsample_factor,
                    pad_top,
                    pad_left,
                    cfg.target_rows,
                    cfg.target_cols,
                );
                joints[2 * i] = rn;
                joints[2 * i + 1] = cn;
            }
            true
        }
        None => false,
    };

    Ok(ProcessedSample {
        frame: frame.values().clone(),
        joints,
        joints_present,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Posture;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn frame(values: Array2<f64>) -> PressureFrame {
        PressureFrame::new(values).unwrap()
    }

    fn sample_with_joints(values: Array2<f64>, joints: Vec<(f64, f64)>) -> Sample {
        Sample::new(frame(values), "s0", 60.0, Posture::LeftSide)
            .unwrap()
            .with_joints(JointSet::new(joints).unwrap())
    }

    // -- upsample ------------------------------------------------------------

    /// Direct per-pixel corner-aligned interpolation, written independently
    /// of the implementation above.
    fn bilinear_oracle(x: &Array2<f64>, factor: usize) -> Array2<f64> {
        let (rows, cols) = x.dim();
        let (or, oc) = (rows * factor, cols * factor);
        let mut out = Array2::zeros((or, oc));
        for r in 0..or {
            for c in 0..oc {
                let sr = if or > 1 && rows > 1 {
                    r as f64 * (rows as f64 - 1.0) / (or as f64 - 1.0)
                } else {
                    0.0
                };
                let sc = if oc > 1 && cols > 1 {
                    c as f64 * (cols as f64 - 1.0) / (oc as f64 - 1.0)
                } else {
                    0.0
                };
                let (r0, c0) = (sr.floor() as usize, sc.floor() as usize);
                let (r1, c1) = ((r0 + 1).min(rows - 1), (c0 + 1).min(cols - 1));
                let (fr, fc) = (sr - r0 as f64, sc - c0 as f64);
                out[(r, c)] = (1.0 - fr) * (1.0 - fc) * x[(r0, c0)]
                    + fr * (1.0 - fc) * x[(r1, c0)]
                    + (1.0 - fr) * fc * x[(r0, c1)]
                    + fr * fc * x[(r1, c1)];
            }
        }
        out
    }

    #[test]
    fn upsample_56x40_by_3_gives_168x120() {
        let f = frame(Array2::from_elem((56, 40), 1.0));
        let up = upsample_bilinear(&f, 3).unwrap();
        assert_eq!((up.rows(), up.cols()), (168, 120));
    }

    #[test]
    fn upsample_factor_1_is_identity() {
        let f = frame(array![[1.0, 2.0], [3.0, 4.0]]);
        let up = upsample_bilinear(&f, 1).unwrap();
        assert_eq!(up.values(), f.values());
    }

    #[test]
    fn upsample_factor_0_errors() {
        let f = frame(array![[1.0]]);
        assert!(upsample_bilinear(&f, 0).is_err());
    }

    #[test]
    fn upsample_2x2_ramp_matches_oracle() {
        let f = frame(array![[0.0, 3.0], [0.0, 3.0]]);
        let up = upsample_bilinear(&f, 3).unwrap();
        assert_eq!((up.rows(), up.cols()), (6, 6));
        // every row is the same bilinear ramp from 0 to 3
        for r in 0..6 {
            for c in 0..6 {
                assert_abs_diff_eq!(up.values()[(r, c)], 3.0 * c as f64 / 5.0, epsilon = 1e-12);
            }
        }
        let oracle = bilinear_oracle(f.values(), 3);
        assert_abs_diff_eq!(up.values(), &oracle, epsilon = 1e-12);
    }

    #[test]
    fn upsample_matches_oracle_on_random_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let rows = rng.random_range(2..8);
            let cols = rng.random_range(2..8);
            let factor = rng.random_range(2..5);
            let x = Array2::from_shape_fn((rows, cols), |_| rng.random_range(0.0..10.0));
            let up = upsample_bilinear(&frame(x.clone()), factor).unwrap();
            let oracle = bilinear_oracle(&x, factor);
            assert_abs_diff_eq!(up.values(), &oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn upsample_composition_is_exact_on_affine_frames() {
        // bilinear resampling reproduces affine functions exactly, so
        // up(a) . up(b) == up(a*b) there
        let x = Array2::from_shape_fn((5, 7), |(r, c)| 1.0 + 0.5 * r as f64 + 0.25 * c as f64);
        let f = frame(x);
        let ab = upsample_bilinear(&f, 6).unwrap();
        let a_then_b = upsample_bilinear(&upsample_bilinear(&f, 2).unwrap(), 3).unwrap();
        assert_abs_diff_eq!(ab.values(), a_then_b.values(), epsilon = 1e-6);
    }

    // -- gaussian smooth -----------------------------------------------------

    #[test]
    fn smooth_preserves_constant_frames() {
        let f = frame(Array2::from_elem((9, 9), 4.25));
        let s = gaussian_smooth(&f, 5, 1.0).unwrap();
        for &v in s.values() {
            assert_abs_diff_eq!(v, 4.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn smooth_impulse_reproduces_kernel() {
        let mut x = Array2::zeros((11, 11));
        x[(5, 5)] = 1.0;
        let s = gaussian_smooth(&frame(x), 5, 1.0).unwrap();
        let k = gaussian_kernel(5, 1.0).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_abs_diff_eq!(s.values()[(3 + i, 3 + j)], k[(i, j)], epsilon = 1e-12);
            }
        }
        // sum preserved for interior-supported impulses
        assert_abs_diff_eq!(s.sum(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn smooth_rejects_even_kernel() {
        let f = frame(Array2::from_elem((4, 4), 1.0));
        assert!(gaussian_smooth(&f, 4, 1.0).is_err());
    }

    // -- pad -----------------------------------------------------------------

    #[test]
    fn pad_168x120_to_192x192_margins() {
        let f = frame(Array2::from_elem((168, 120), 2.0));
        let p = pad_center(&f, 192, 192).unwrap();
        assert_eq!((p.rows(), p.cols()), (192, 192));
        // 12-row and 36-column zero margins
        assert_eq!(p.values()[(11, 96)], 0.0);
        assert_eq!(p.values()[(12, 36)], 2.0);
        assert_eq!(p.values()[(179, 155)], 2.0);
        assert_eq!(p.values()[(180, 96)], 0.0);
        assert_eq!(p.values()[(96, 35)], 0.0);
        assert_eq!(p.values()[(96, 156)], 0.0);
        assert_abs_diff_eq!(p.sum(), f.sum(), epsilon = 0.0);
    }

    #[test]
    fn pad_identity_when_already_target() {
        let f = frame(Array2::from_elem((8, 8), 1.5));
        let p = pad_center(&f, 8, 8).unwrap();
        assert_eq!(p.values(), f.values());
    }

    #[test]
    fn pad_rejects_oversized_frame() {
        let f = frame(Array2::from_elem((9, 4), 1.0));
        assert!(pad_center(&f, 8, 8).is_err());
    }

    // -- normalize -----------------------------------------------------------

    #[test]
    fn normalize_per_dataset_max() {
        let f = frame(array![[50.0, 200.0], [0.0, 100.0]]);
        let n = normalize_frame(&f, Normalization::PerDatasetMax, 200.0).unwrap();
        assert_abs_diff_eq!(n.max(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n.values()[(0, 0)], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn normalize_all_zero_frame_per_frame_max_passes_through() {
        let f = frame(Array2::zeros((3, 3)));
        let n = normalize_frame(&f, Normalization::PerFrameMax, 1.0).unwrap();
        assert_eq!(n.values(), f.values());
    }

    #[test]
    fn normalize_none_is_bit_identical() {
        let f = frame(array![[0.1, 0.7], [3.0, 2.5]]);
        let n = normalize_frame(&f, Normalization::None, 0.0).unwrap();
        assert_eq!(n.values(), f.values());
    }

    #[test]
    fn normalize_rejects_nonpositive_dataset_max() {
        let f = frame(array![[1.0]]);
        assert!(normalize_frame(&f, Normalization::PerDatasetMax, 0.0).is_err());
    }

    // -- augmentation --------------------------------------------------------

    #[test]
    fn hflip_mirrors_frame_joints_and_posture() {
        let mut x = Array2::zeros((4, 6));
        x[(1, 0)] = 7.0;
        let s = sample_with_joints(x, vec![(1.0, 0.0), (2.0, 5.0)]);
        let out = augment_sample(&s, AugmentOp::HFlip).unwrap();
        assert_eq!(out.frame.values()[(1, 5)], 7.0);
        assert_eq!(out.joints.as_ref().unwrap().coords()[0], (1.0, 5.0));
        assert_eq!(out.joints.as_ref().unwrap().coords()[1], (2.0, 0.0));
        assert_eq!(out.posture, Posture::RightSide);
        assert_eq!(out.weight_kg, s.weight_kg);
    }

    #[test]
    fn identity_rotate_and_shift_leave_sample_unchanged() {
        let mut x = Array2::zeros((8, 8));
        x[(3, 4)] = 2.0;
        x[(5, 2)] = 1.0;
        let s = sample_with_joints(x, vec![(3.0, 4.0)]);
        let rot = augment_sample(&s, AugmentOp::Rotate(0.0)).unwrap();
        assert_abs_diff_eq!(rot.frame.values(), s.frame.values(), epsilon = 1e-12);
        let sh = augment_sample(&s, AugmentOp::Shift(0, 0)).unwrap();
        assert_eq!(sh.frame.values(), s.frame.values());
        assert_eq!(sh.joints, s.joints);
    }

    #[test]
    fn shift_moves_impulse_and_joints_equally() {
        let mut x = Array2::zeros((30, 40));
        x[(10, 10)] = 5.0;
        let s = sample_with_joints(x, vec![(10.0, 10.0)]);
        let out = augment_sample(&s, AugmentOp::Shift(2, 3)).unwrap();
        assert_eq!(out.frame.values()[(12, 13)], 5.0);
        assert_eq!(out.frame.values()[(10, 10)], 0.0);
        assert_eq!(out.joints.as_ref().unwrap().coords()[0], (12.0, 13.0));
    }

    #[test]
    fn out_of_bound_params_error() {
        let s = sample_with_joints(Array2::from_elem((20, 20), 1.0), vec![(1.0, 1.0)]);
        assert!(augment_sample(&s, AugmentOp::Rotate(16.0)).is_err());
        assert!(augment_sample(&s, AugmentOp::Shift(3, 0)).is_err());
    }

    #[test]
    fn rotation_frame_joint_consistency_within_one_pixel() {
        let mut x = Array2::zeros((21, 21));
        x[(5, 14)] = 10.0;
        let s = sample_with_joints(x, vec![(5.0, 14.0)]);
        let out = augment_sample(&s, AugmentOp::Rotate(12.0)).unwrap();
        let (ar, ac) = out.frame.argmax();
        let (jr, jc) = out.joints.as_ref().unwrap().coords()[0];
        assert!((ar as f64 - jr).abs() <= 1.0, "{ar} vs {jr}");
        assert!((ac as f64 - jc).abs() <= 1.0, "{ac} vs {jc}");
    }

    proptest! {
        /// hflip and shift move the argmax cell and a joint at that cell to
        /// identical coordinates, exactly.
        #[test]
        fn flip_shift_equivariance_exact(
            r in 2usize..18, c in 2usize..18, dr in -2i64..=2, dc in -2i64..=2
        ) {
            let mut x = Array2::zeros((21, 24));
            x[(r, c)] = 9.0;
            let s = sample_with_joints(x, vec![(r as f64, c as f64)]);

            let f = augment_sample(&s, AugmentOp::HFlip).unwrap();
            let (fr, fc) = f.frame.argmax();
            prop_assert_eq!(f.joints.as_ref().unwrap().coords()[0], (fr as f64, fc as f64));

            let sh = augment_sample(&s, AugmentOp::Shift(dr, dc)).unwrap();
            let (sr, sc) = sh.frame.argmax();
            prop_assert_eq!(sh.joints.as_ref().unwrap().coords()[0], (sr as f64, sc as f64));
            prop_assert_eq!(sh.weight_kg, s.weight_kg);
        }
    }

    // -- joint noise ---------------------------------------------------------

    #[test]
    fn zero_sigma_is_identity() {
        let j = JointSet::new(vec![(3.0, 4.0), (5.0, 6.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = inject_joint_noise(&j, 0.0, &mut rng).unwrap();
        assert_eq!(out, j);
    }

    #[test]
    fn negative_sigma_errors() {
        let j = JointSet::new(vec![(0.0, 0.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(inject_joint_noise(&j, -1.0, &mut rng).is_err());
    }

    #[test]
    fn joint_noise_l1_matches_folded_normal_mean() {
        let j = JointSet::new(vec![(100.0, 100.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let sigma = 3.0;
        let n = 100_000;
        let mut total = 0.0;
        for _ in 0..n {
            let noisy = inject_joint_noise(&j, sigma, &mut rng).unwrap();
            let (r, c) = noisy.coords()[0];
            total += (r - 100.0).abs() + (c - 100.0).abs();
        }
        let mean_l1 = total / n as f64;
        let expected = 2.0 * sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (mean_l1 - expected).abs() / expected < 0.02,
            "measured {mean_l1}, expected {expected}"
        );
    }

    #[test]
    fn sigma_calibrated_for_7_45_px_l1() {
        let sigma = sigma_for_l1(7.45);
        assert!((sigma - 4.67).abs() < 0.01, "{sigma}");

        let j = JointSet::new(vec![(50.0, 50.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let mut total = 0.0;
        for _ in 0..n {
            let noisy = inject_joint_noise(&j, sigma, &mut rng).unwrap();
            let (r, c) = noisy.coords()[0];
            total += (r - 50.0).abs() + (c - 50.0).abs();
        }
        let mean_l1 = total / n as f64;
        assert!(
            (mean_l1 - 7.45).abs() / 7.45 < 0.02,
            "measured {mean_l1}, expected 7.45"
        );
    }

    // -- pipeline ------------------------------------------------------------

    #[test]
    fn pipeline_native_56x40_defaults_to_192x192() {
        let s = Sample::new(
            frame(Array2::from_elem((56, 40), 1.0)),
            "s0",
            60.0,
            Posture::Supine,
        )
        .unwrap();
        let cfg = PreprocessConfig::default();
        let out = preprocess_pipeline(&s, &cfg, 1.0, 14).unwrap();
        assert_eq!(out.frame.dim(), (192, 192));
        assert!(!out.joints_present);
        assert_eq!(out.joints.len(), 28);
        assert!(out.joints.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pipeline_slp_frame_pads_columns_only() {
        let s = Sample::new(
            frame(Array2::from_elem((192, 84), 1.0)),
            "s0",
            60.0,
            Posture::Supine,
        )
        .unwrap();
        let cfg = PreprocessConfig {
            upsample_factor: 1,
            ..PreprocessConfig::default()
        };
        let out = preprocess_pipeline(&s, &cfg, 1.0, 14).unwrap();
        assert_eq!(out.frame.dim(), (192, 192));
        // columns 84 -> 192: 54-column margins
        assert_eq!(out.frame[(96, 53)], 0.0);
        assert!(out.frame[(96, 96)] > 0.0);
    }

    #[test]
    fn pipeline_joint_chain_example() {
        // joint at native (28, 20) on 56x40, factor 3, pad to 192x192
        // -> (84+12, 60+36) = (96, 96) -> normalized (0.5, 0.5)
        let s = sample_with_joints(
            Array2::from_elem((56, 40), 1.0),
            vec![(28.0, 20.0); 14].into_iter().collect(),
        );
        let cfg = PreprocessConfig::default();
        let out = preprocess_pipeline(&s, &cfg, 1.0, 14).unwrap();
        assert!(out.joints_present);
        assert_abs_diff_eq!(out.joints[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(out.joints[1], 0.5, epsilon = 1e-12);
    }

    proptest! {
        /// Output dims always match the target; normalized joints stay within
        /// [-0.5, 1.5] under bounded augmentation drift.
        #[test]
        fn pipeline_dims_and_joint_ranges(
            jr in 0.0f64..20.0, jc in 0.0f64..16.0, dr in -2i64..=2, dc in -1i64..=1,
        ) {
            let x = Array2::from_elem((20, 16), 1.0);
            let s = sample_with_joints(x, vec![(jr, jc); 14].into_iter().collect());
            let s = augment_sample(&s, AugmentOp::Shift(dr, dc)).unwrap();
            let cfg = PreprocessConfig {
                upsample_factor: 2,
                target_rows: 48,
                target_cols: 48,
                ..PreprocessConfig::default()
            };
            let out = preprocess_pipeline(&s, &cfg, 1.0, 14).unwrap();
            prop_assert_eq!(out.frame.dim(), (48, 48));
            for &v in out.joints.iter() {
                prop_assert!((-0.5..=1.5).contains(&v), "{}", v);
            }
        }
    }
}
