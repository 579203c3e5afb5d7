//! Parametric pressure-image generator with controllable sensor
//! non-idealities.
//!
//! A body is seven Gaussian blobs (head, torso, pelvis, four limbs) placed on
//! a posture-dependent 14-joint skeleton. The ideal frame is the blob mixture
//! rendered onto the grid and rescaled so that `sum(frame) == weight_kg`
//! exactly (unit convention: one sensor unit is one kg-equivalent). Heavier
//! and taller bodies occupy more cells, so contact area carries weight signal
//! even when the sensor saturates.
//!
//! [`SensorModel`] then distorts frames the way real mats do: per-cell gain
//! variation, saturation clamping, additive noise clipped at zero, and (for
//! sequences) first-order hysteresis. The saturated regime is exactly the
//! setting where summing pixel values stops working as a weight estimate
//! while the spatial distribution still tells the story.
//!
//! Generated datasets come out as ordinary [`Dataset`] values and can be
//! written in the native on-disk format, so every downstream loader, split,
//! and training path is exercised unchanged.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetFormat, JointSet, Posture, PressureFrame, Sample};
use crate::error::SynthError;

/// One Gaussian body segment.
#[derive(Debug, Clone)]
pub struct SegmentBlob {
    /// Center in grid coordinates (row, col).
    pub center: (f64, f64),
    /// Axis-aligned standard deviations in cells (row, col).
    pub sigma: (f64, f64),
    /// Fraction of total body weight carried by this segment.
    pub mass_fraction: f64,
}

/// A posed body: blobs plus the joint skeleton they were derived from.
#[derive(Debug, Clone)]
pub struct BodyModel {
    pub weight_kg: f64,
    pub height_m: f64,
    pub posture: Posture,
    pub segments: Vec<SegmentBlob>,
    /// 14 joints in grid coordinates.
    pub joints: Vec<(f64, f64)>,
}

/// Sensor non-idealities applied on top of the ideal frame.
#[derive(Debug, Clone, Default)]
pub struct SensorModel {
    /// Per-cell gain factors near 1; `None` means uniform unit gain.
    pub gain_per_cell: Option<Array2<f64>>,
    /// Hard clamp on cell values.
    pub saturation_cap: Option<f64>,
    /// Stddev of additive Gaussian noise (clipped at zero afterwards).
    pub noise_sigma: f64,
    /// First-order hysteresis retention for sequences, in [0, 1).
    pub hysteresis_retention: f64,
}

impl SensorModel {
    /// The identity sensor: no gain variation, no cap, no noise, no memory.
    pub fn ideal() -> Self {
        Self::default()
    }

    /// Random per-cell gain field `N(1, sigma)`, clipped to stay positive.
    pub fn with_random_gain(mut self, rows: usize, cols: usize, sigma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(1.0, sigma).expect("valid gain sigma");
        self.gain_per_cell = Some(Array2::from_shape_fn((rows, cols), |_| {
            normal.sample(&mut rng).max(0.05)
        }));
        self
    }

    fn validate(&self) -> Result<(), SynthError> {
        if let Some(cap) = self.saturation_cap {
            if cap <= 0.0 {
                return Err(SynthError::Config("saturation_cap must be > 0".into()));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(SynthError::Config("noise_sigma must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.hysteresis_retention) {
            return Err(SynthError::Config(
                "hysteresis_retention must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// The 14-joint canonical skeleton in normalized body coordinates
/// (row fraction along the body axis, col fraction across it).
fn skeleton(posture: Posture) -> [(f64, f64); 14] {
    let base: [(f64, f64); 14] = [
        (0.07, 0.50), // head
        (0.16, 0.50), // neck
        (0.22, 0.34), // shoulders
        (0.22, 0.66),
        (0.36, 0.27), // elbows
        (0.36, 0.73),
        (0.50, 0.24), // wrists
        (0.50, 0.76),
        (0.52, 0.42), // hips
        (0.52, 0.58),
        (0.72, 0.38), // knees
        (0.72, 0.62),
        (0.92, 0.36), // ankles
        (0.92, 0.64),
    ];
    let mut out = base;
    match posture {
        Posture::Supine => {}
        Posture::Prone => {
            // arms tucked, head turned to one side, ankles extended (toes
            // push the contact point down); chest carries the torso load
            for i in [2, 3, 4, 5, 6, 7] {
                out[i].1 = 0.5 + (out[i].1 - 0.5) * 0.7;
            }
            out[0].1 += 0.08; // head
            out[0].0 -= 0.02;
            out[1].0 -= 0.03; // neck (chest loading)
            out[2].0 -= 0.03;
            out[3].0 -= 0.03;
            out[12].0 += 0.05; // ankles
            out[13].0 += 0.05;
        }
        Posture::LeftSide | Posture::RightSide => {
            // body rolled: narrower profile, limbs stacked, knees drawn up
            let side = if posture == Posture::LeftSide { -1.0 } else { 1.0 };
            for p in &mut out {
                p.1 = 0.5 + (p.1 - 0.5) * 0.45 + side * 0.08;
            }
            for i in [10, 11, 12, 13] {
                out[i].0 -= 0.06;
                out[i].1 += side * 0.05;
            }
        }
        Posture::Other => {
            for p in &mut out {
                p.0 = 0.5 + (p.0 - 0.5) * 0.9;
            }
        }
    }
    out
}

/// Segment mass fractions: head, torso, pelvis, two arms, two legs (sums to 1).
const MASS_FRACTIONS: [f64; 7] = [0.08, 0.35, 0.12, 0.06, 0.06, 0.165, 0.165];

/// Build a posed body on a `rows x cols` grid.
///
/// The RNG perturbs body placement slightly (subject/sample variation);
/// heavier and taller bodies spread over more cells.
pub fn body_for(
    posture: Posture,
    weight_kg: f64,
    height_m: f64,
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
) -> BodyModel {
    let joints_norm = skeleton(posture);

    let height_frac = (height_m / 1.75).clamp(0.75, 1.1);
    // contact area grows sublinearly with weight, so peak pressure rises
    // roughly as weight^0.64 and heavy bodies clip hard on capped sensors
    let size = (weight_kg / 65.0).powf(0.18).clamp(0.6, 1.4);
    let row_span = (rows as f64 - 1.0) * 0.9 * height_frac;
    let row0 = (rows as f64 - 1.0 - row_span).max(0.0) * 0.5;
    let col_center = (cols as f64 - 1.0) * (0.5 + rng.random_range(-0.03..0.03));
    let col_span = (cols as f64 - 1.0) * 0.8 * size.min(1.15);

    let place = |(rf, cf): (f64, f64)| -> (f64, f64) {
        (row0 + rf * row_span, col_center + (cf - 0.5) * col_span)
    };
    let joints: Vec<(f64, f64)> = joints_norm.iter().map(|&p| place(p)).collect();

    let mid = |a: (f64, f64), b: (f64, f64)| ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
    let head = joints[0];
    let torso = mid(mid(joints[2], joints[3]), mid(joints[8], joints[9]));
    let pelvis = mid(joints[8], joints[9]);
    let arm_l = mid(joints[4], joints[6]);
    let arm_r = mid(joints[5], joints[7]);
    let leg_l = mid(joints[10], joints[12]);
    let leg_r = mid(joints[11], joints[13]);

    // side postures rest on a much narrower contact strip, so the same
    // weight produces far higher peak pressures there (trochanter loading);
    // supine spreads the widest
    let (contact_r, contact_c) = match posture {
        Posture::LeftSide | Posture::RightSide => (0.80, 0.38),
        Posture::Prone => (1.0, 1.0),
        Posture::Supine => (1.1, 1.15),
        Posture::Other => (1.0, 1.0),
    };
    let unit_r = rows as f64 / 22.0 * size * contact_r;
    let unit_c = cols as f64 / 22.0 * size * contact_c;
    let sigmas: [(f64, f64); 7] = [
        (1.4 * unit_r, 1.4 * unit_c), // head
        (3.6 * unit_r, 2.8 * unit_c), // torso
        (2.2 * unit_r, 2.4 * unit_c), // pelvis
        (2.0 * unit_r, 0.9 * unit_c), // arms
        (2.0 * unit_r, 0.9 * unit_c),
        (3.2 * unit_r, 1.1 * unit_c), // legs
        (3.2 * unit_r, 1.1 * unit_c),
    ];
    let centers = [head, torso, pelvis, arm_l, arm_r, leg_l, leg_r];

    let segments = centers
        .iter()
        .zip(sigmas)
        .zip(MASS_FRACTIONS)
        .map(|((&center, sigma), mass_fraction)| SegmentBlob {
            center,
            sigma,
            mass_fraction,
        })
        .collect();

    BodyModel {
        weight_kg,
        height_m,
        posture,
        segments,
        joints,
    }
}

/// Render a body onto the grid: blob mixture scaled so the frame sums to the
/// body weight exactly. The RNG applies sub-cell center jitter.
pub fn synthesize_sample(
    body: &BodyModel,
    rows: usize,
    cols: usize,
    rng: &mut impl Rng,
) -> Result<Sample, SynthError> {
    let jitter: Vec<(f64, f64)> = body
        .segments
        .iter()
        .map(|_| (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
        .collect();

    let mut grid = Array2::<f64>::zeros((rows, cols));
    for (seg, &(jr, jc)) in body.segments.iter().zip(&jitter) {
        let (cr, cc) = (seg.center.0 + jr, seg.center.1 + jc);
        if cr < 0.0 || cc < 0.0 || cr > (rows - 1) as f64 || cc > (cols - 1) as f64 {
            return Err(SynthError::SegmentOutOfFrame(format!(
                "center ({cr:.1}, {cc:.1}) outside {rows}x{cols} grid"
            )));
        }
        let (sr, sc) = seg.sigma;
        for r in 0..rows {
            for c in 0..cols {
                let dr = (r as f64 - cr) / sr;
                let dc = (c as f64 - cc) / sc;
                // flat-topped profile: tissue compresses, so contact patches
                // plateau instead of peaking like a Gaussian
                let d2 = dr * dr + dc * dc;
                grid[(r, c)] += seg.mass_fraction * (-0.5 * d2 * d2).exp();
            }
        }
    }
    let total = grid.sum();
    if total <= 0.0 {
        return Err(SynthError::SegmentOutOfFrame("empty rendering".into()));
    }
    grid.mapv_inplace(|v| v * body.weight_kg / total);

    let frame = PressureFrame::new(grid).expect("rendered frame is non-negative");
    Ok(
        Sample::new(frame, "synthetic", body.weight_kg, body.posture)
            .expect("valid weight")
            .with_joints(JointSet::new(body.joints.clone()).expect("finite joints")),
    )
}

/// Apply the sensor model to a single frame.
pub fn apply_sensor_model(
    frame: &PressureFrame,
    sensor: &SensorModel,
    rng: &mut impl Rng,
) -> Result<PressureFrame, SynthError> {
    sensor.validate()?;
    let mut grid = frame.values().clone();
    distort_in_place(&mut grid, sensor, rng)?;
    Ok(PressureFrame::new(grid)
        .expect("sensor output clipped at zero")
        .with_pitch(frame.pitch_row_m, frame.pitch_col_m))
}

fn distort_in_place(
    grid: &mut Array2<f64>,
    sensor: &SensorModel,
    rng: &mut impl Rng,
) -> Result<(), SynthError> {
    if let Some(gain) = &sensor.gain_per_cell {
        if gain.dim() != grid.dim() {
            return Err(SynthError::Config(format!(
                "gain field {:?} does not match frame {:?}",
                gain.dim(),
                grid.dim()
            )));
        }
        *grid *= gain;
    }
    if let Some(cap) = sensor.saturation_cap {
        grid.mapv_inplace(|v| v.min(cap));
    }
    if sensor.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, sensor.noise_sigma).expect("valid noise sigma");
        grid.mapv_inplace(|v| (v + normal.sample(rng)).max(0.0));
    }
    Ok(())
}

/// Apply the sensor model to an ordered frame sequence with hysteresis:
/// `out_t = retention * out_{t-1} + (1 - retention) * v_t`.
pub fn apply_sensor_model_sequence(
    frames: &[PressureFrame],
    sensor: &SensorModel,
    rng: &mut impl Rng,
) -> Result<Vec<PressureFrame>, SynthError> {
    sensor.validate()?;
    let retention = sensor.hysteresis_retention;
    let mut prev: Option<Array2<f64>> = None;
    let mut out = Vec::with_capacity(frames.len());
    for frame in frames {
        let mut grid = frame.values().clone();
        distort_in_place(&mut grid, sensor, rng)?;
        let mixed = match &prev {
            Some(p) => p * retention + &grid * (1.0 - retention),
            None => &grid * (1.0 - retention),
        };
        prev = Some(mixed.clone());
        out.push(
            PressureFrame::new(mixed)
                .expect("hysteresis preserves non-negativity")
                .with_pitch(frame.pitch_row_m, frame.pitch_col_m),
        );
    }
    Ok(out)
}

/// Dataset-level generator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n_subjects: usize,
    pub samples_per_subject: usize,
    pub rows: usize,
    pub cols: usize,
    /// Subject weights drawn uniformly from this range (kg).
    pub weight_range: (f64, f64),
    /// Subject heights drawn uniformly from this range (m).
    pub height_range: (f64, f64),
    /// Stddev of the per-cell gain field; 0 disables gain variation.
    pub gain_sigma: f64,
    /// Cap cell values at this quantile of the ideal per-frame peaks.
    pub saturation_peak_quantile: Option<f64>,
    /// Additive noise stddev, in frame units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_subjects: 20,
            samples_per_subject: 5,
            rows: 32,
            cols: 26,
            weight_range: (40.0, 105.0),
            height_range: (1.50, 1.90),
            gain_sigma: 0.0,
            saturation_peak_quantile: None,
            noise_sigma: 0.0,
            seed: 0,
        }
    }
}

const POSTURE_CYCLE: [Posture; 4] = [
    Posture::Supine,
    Posture::LeftSide,
    Posture::RightSide,
    Posture::Prone,
];

/// Quantile by linear interpolation over the sorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Generate a labeled dataset: ideal frames first, then the configured sensor
/// distortions. Deterministic for a fixed seed.
pub fn generate_dataset(cfg: &GeneratorConfig) -> Result<Dataset, SynthError> {
    if cfg.n_subjects == 0 || cfg.samples_per_subject == 0 {
        return Err(SynthError::Config("empty generator config".into()));
    }
    if cfg.weight_range.0 <= 0.0 || cfg.weight_range.1 < cfg.weight_range.0 {
        return Err(SynthError::Config("bad weight range".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut samples = Vec::with_capacity(cfg.n_subjects * cfg.samples_per_subject);
    for s in 0..cfg.n_subjects {
        let weight = rng.random_range(cfg.weight_range.0..=cfg.weight_range.1);
        let height = rng.random_range(cfg.height_range.0..=cfg.height_range.1);
        for k in 0..cfg.samples_per_subject {
            let posture = POSTURE_CYCLE[k % POSTURE_CYCLE.len()];
            let body = body_for(posture, weight, height, cfg.rows, cfg.cols, &mut rng);
            let mut sample = synthesize_sample(&body, cfg.rows, cfg.cols, &mut rng)?;
            sample.subject_id = format!("synth_{s:03}");
            sample.timestamp = Some((s * cfg.samples_per_subject + k) as u64);
            samples.push(sample);
        }
    }

    let needs_sensor =
        cfg.gain_sigma > 0.0 || cfg.saturation_peak_quantile.is_some() || cfg.noise_sigma > 0.0;
    if needs_sensor {
        // cap calibrated against the ideal frames
        let cap = cfg.saturation_peak_quantile.map(|q| {
            let peaks: Vec<f64> = samples.iter().map(|s| s.frame.max()).collect();
            quantile(&peaks, q)
        });
        let mut sensor = SensorModel {
            gain_per_cell: None,
            saturation_cap: cap,
            noise_sigma: cfg.noise_sigma,
            hysteresis_retention: 0.0,
        };
        if cfg.gain_sigma > 0.0 {
            sensor =
                sensor.with_random_gain(cfg.rows, cfg.cols, cfg.gain_sigma, cfg.seed ^ 0x9e37);
        }
        for sample in &mut samples {
            sample.frame = apply_sensor_model(&sample.frame, &sensor, &mut rng)?;
        }
    }

    Ok(Dataset::new(samples, DatasetFormat::Synthetic))
}

/// A monitored session: static posture holds separated by planted movements.
#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub rows: usize,
    pub cols: usize,
    pub weight_kg: f64,
    pub height_m: f64,
    pub n_frames: usize,
    /// Number of movement events, evenly spaced through the session.
    pub n_movements: usize,
    /// Frames each movement takes.
    pub movement_len: usize,
    pub sensor: SensorModel,
    pub seed: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 26,
            weight_kg: 62.0,
            height_m: 1.70,
            n_frames: 600,
            n_movements: 14,
            movement_len: 12,
            sensor: SensorModel::ideal(),
            seed: 0,
        }
    }
}

/// A generated session: frames plus the ground-truth active windows
/// (half-open frame ranges).
#[derive(Debug)]
pub struct Session {
    pub frames: Vec<PressureFrame>,
    pub active_windows: Vec<(usize, usize)>,
    pub weight_kg: f64,
}

/// Synthesize a session: the subject holds a posture, transitions to the next
/// posture during each movement window (blob layout interpolates), and holds
/// again. Sensor distortions and hysteresis apply to the whole sequence.
pub fn synthesize_session(cfg: &SessionConfig) -> Result<Session, SynthError> {
    if cfg.n_frames < 2 {
        return Err(SynthError::Config("session needs at least 2 frames".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut windows = Vec::with_capacity(cfg.n_movements);
    if cfg.n_movements > 0 {
        let spacing = cfg.n_frames / (cfg.n_movements + 1);
        if spacing <= cfg.movement_len {
            return Err(SynthError::Config(
                "session too short for the requested movements".into(),
            ));
        }
        for m in 1..=cfg.n_movements {
            let start = m * spacing;
            windows.push((start, (start + cfg.movement_len).min(cfg.n_frames)));
        }
    }

    // per-hold bodies (posture cycles); transitions interpolate blob layouts
    let mut bodies = Vec::with_capacity(cfg.n_movements + 1);
    for i in 0..=cfg.n_movements {
        let posture = POSTURE_CYCLE[i % POSTURE_CYCLE.len()];
        bodies.push(body_for(
            posture,
            cfg.weight_kg,
            cfg.height_m,
            cfg.rows,
            cfg.cols,
            &mut rng,
        ));
    }

    let lerp_body = |a: &BodyModel, b: &BodyModel, t: f64| -> BodyModel {
        // mid-transition the body props itself up, so the same weight rests
        // on a smaller contact area (pressure concentrates transiently)
        let concentrate = 1.0 - 0.35 * (std::f64::consts::PI * t).sin();
        let mut out = a.clone();
        for (seg, (sa, sb)) in out
            .segments
            .iter_mut()
            .zip(a.segments.iter().zip(&b.segments))
        {
            seg.center = (
                sa.center.0 * (1.0 - t) + sb.center.0 * t,
                sa.center.1 * (1.0 - t) + sb.center.1 * t,
            );
            seg.sigma = (
                (sa.sigma.0 * (1.0 - t) + sb.sigma.0 * t) * concentrate,
                (sa.sigma.1 * (1.0 - t) + sb.sigma.1 * t) * concentrate,
            );
        }
        for (j, (ja, jb)) in out.joints.iter_mut().zip(a.joints.iter().zip(&b.joints)) {
            *j = (ja.0 * (1.0 - t) + jb.0 * t, ja.1 * (1.0 - t) + jb.1 * t);
        }
        out
    };

    let mut ideal = Vec::with_capacity(cfg.n_frames);
    for t in 0..cfg.n_frames {
        let hold = windows.iter().take_while(|&&(_, end)| end <= t).count();
        let body = match windows.get(hold) {
            Some(&(start, end)) if t >= start && t < end => {
                // frame `start` already differs from the hold and frame
                // `end - 1` completes the transition, so the frames whose
                // predecessor differs are exactly the declared window
                let frac = (t - start + 1) as f64 / (end - start) as f64;
                lerp_body(&bodies[hold], &bodies[hold + 1], frac)
            }
            _ => bodies[hold].clone(),
        };
        // no per-frame jitter: static holds must be truly static
        let mut no_jitter = ChaCha8Rng::seed_from_u64(0);
        let sample = synthesize_sample(&body, cfg.rows, cfg.cols, &mut no_jitter)?;
        ideal.push(sample.frame);
    }

    let frames = apply_sensor_model_sequence(&ideal, &cfg.sensor, &mut rng)?;
    Ok(Session {
        frames,
        active_windows: windows,
        weight_kg: cfg.weight_kg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn frame_sum_equals_weight_exactly() {
        let mut r = rng(0);
        for &posture in &POSTURE_CYCLE {
            let body = body_for(posture, 60.0, 1.7, 32, 26, &mut r);
            let sample = synthesize_sample(&body, 32, 26, &mut r).unwrap();
            assert_abs_diff_eq!(sample.frame.sum(), 60.0, epsilon = 1e-9);
            assert_eq!(sample.posture, posture);
            assert_eq!(sample.joints.as_ref().unwrap().len(), 14);
        }
    }

    #[test]
    fn postures_change_layout_but_conserve_mass() {
        let supine = body_for(Posture::Supine, 70.0, 1.7, 32, 26, &mut rng(1));
        let side = body_for(Posture::LeftSide, 70.0, 1.7, 32, 26, &mut rng(1));
        let sup_frame = synthesize_sample(&supine, 32, 26, &mut rng(2)).unwrap();
        let side_frame = synthesize_sample(&side, 32, 26, &mut rng(2)).unwrap();
        assert_ne!(sup_frame.frame.values(), side_frame.frame.values());
        assert_abs_diff_eq!(
            sup_frame.frame.sum(),
            side_frame.frame.sum(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let cfg = GeneratorConfig {
            n_subjects: 4,
            samples_per_subject: 2,
            noise_sigma: 0.02,
            gain_sigma: 0.05,
            saturation_peak_quantile: Some(0.7),
            seed: 9,
            ..GeneratorConfig::default()
        };
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a.len(), 8);
        for (sa, sb) in a.samples().iter().zip(b.samples()) {
            assert_eq!(sa.frame.values(), sb.frame.values());
            assert_eq!(sa.weight_kg, sb.weight_kg);
        }
        // a different seed produces different noise fields
        let c = generate_dataset(&GeneratorConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.samples()[0].frame.values(), c.samples()[0].frame.values());
    }

    #[test]
    fn identity_sensor_is_identity() {
        let mut r = rng(3);
        let body = body_for(Posture::Supine, 55.0, 1.6, 24, 20, &mut r);
        let sample = synthesize_sample(&body, 24, 20, &mut r).unwrap();
        let out = apply_sensor_model(&sample.frame, &SensorModel::ideal(), &mut r).unwrap();
        assert_eq!(out.values(), sample.frame.values());
    }

    #[test]
    fn saturation_strictly_reduces_sum() {
        let mut r = rng(4);
        let body = body_for(Posture::Supine, 80.0, 1.7, 24, 20, &mut r);
        let sample = synthesize_sample(&body, 24, 20, &mut r).unwrap();
        let cap = 0.5 * sample.frame.max();
        let sensor = SensorModel {
            saturation_cap: Some(cap),
            ..SensorModel::ideal()
        };
        let out = apply_sensor_model(&sample.frame, &sensor, &mut r).unwrap();
        assert!(out.sum() < sample.frame.sum());
        assert!(out.max() <= cap + 1e-12);
    }

    #[test]
    fn hysteresis_follows_geometric_recursion() {
        // step sequence {0, 1, 1, ...} at retention 0.5 -> {0, 0.5, 0.75, 0.875}
        let zero = PressureFrame::new(Array2::zeros((2, 2))).unwrap();
        let one = PressureFrame::new(Array2::from_elem((2, 2), 1.0)).unwrap();
        let seq = vec![zero, one.clone(), one.clone(), one];
        let sensor = SensorModel {
            hysteresis_retention: 0.5,
            ..SensorModel::ideal()
        };
        let mut r = rng(5);
        let out = apply_sensor_model_sequence(&seq, &sensor, &mut r).unwrap();
        let expected = [0.0, 0.5, 0.75, 0.875];
        for (frame, &e) in out.iter().zip(&expected) {
            assert_abs_diff_eq!(frame.values()[(0, 0)], e, epsilon = 1e-12);
            assert_abs_diff_eq!(frame.values()[(1, 1)], e, epsilon = 1e-12);
        }
    }

    #[test]
    fn blob_outside_frame_is_a_generation_error() {
        let mut body = body_for(Posture::Supine, 60.0, 1.7, 16, 12, &mut rng(6));
        body.segments[0].center = (-40.0, 5.0);
        let err = synthesize_sample(&body, 16, 12, &mut rng(7)).unwrap_err();
        assert!(matches!(err, SynthError::SegmentOutOfFrame(_)));
    }

    #[test]
    fn session_holds_are_static_and_movements_move() {
        let cfg = SessionConfig {
            n_frames: 120,
            n_movements: 2,
            movement_len: 10,
            seed: 11,
            ..SessionConfig::default()
        };
        let session = synthesize_session(&cfg).unwrap();
        assert_eq!(session.frames.len(), 120);
        assert_eq!(session.active_windows.len(), 2);
        // frames inside a hold are identical; movement frames differ
        let (w0_start, w0_end) = session.active_windows[0];
        assert_eq!(
            session.frames[2].values(),
            session.frames[w0_start - 2].values()
        );
        let mid = (w0_start + w0_end) / 2;
        assert_ne!(session.frames[mid].values(), session.frames[2].values());
        assert_ne!(
            session.frames[w0_end + 1].values(),
            session.frames[2].values()
        );
    }

    #[test]
    fn quantile_interpolates() {
        let vals = [1.0, 2.0, 3.0, 4.0];
        assert_abs_diff_eq!(quantile(&vals, 0.0), 1.0);
        assert_abs_diff_eq!(quantile(&vals, 1.0), 4.0);
        assert_abs_diff_eq!(quantile(&vals, 0.5), 2.5);
    }
}
