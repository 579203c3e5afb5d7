//! Long-term monitoring: synthesize a session with planted movements,
//! segment it into static and active parts by temporal gradient, and
//! aggregate a session weight estimate from the static frames only.
//!
//! ```bash
//! cargo run -p massnet --example segment_session
//! ```

use massnet::synthetic::{synthesize_session, SensorModel, SessionConfig};
use massnet::timeseries::{
    active_iou, aggregate_weight, segment_frames, temporal_gradient,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SessionConfig {
        n_frames: 450,
        n_movements: 14,
        movement_len: 8,
        weight_kg: 62.0,
        sensor: SensorModel {
            noise_sigma: 2e-4,
            hysteresis_retention: 0.02,
            ..SensorModel::ideal()
        },
        seed: 4,
        ..SessionConfig::default()
    };
    let session = synthesize_session(&cfg)?;
    println!(
        "session: {} frames, {} planted movements",
        session.frames.len(),
        session.active_windows.len()
    );

    let gradient = temporal_gradient(&session.frames)?;
    let movement = massnet::synthetic::quantile(&gradient, 0.97);
    let segments = segment_frames(&gradient, 0.25 * movement, 0.10 * movement, 3)?;
    let iou = active_iou(&segments, &session.active_windows);
    println!(
        "detected {} segments; active-frame IoU vs ground truth = {:.3}",
        segments.segments.len(),
        iou
    );

    // stand-in per-frame predictor: the frame sum (a trained model slots in
    // identically; see the `segment` CLI subcommand)
    let preds: Vec<f64> = session.frames.iter().map(|f| f.sum()).collect();
    let agg = aggregate_weight(&preds, &segments)?;
    println!(
        "\nsession estimate from static frames: {:.2} kg (truth {:.2} kg)",
        agg.estimate_kg, session.weight_kg
    );
    println!(
        "static frames: n = {}, spread = {:.4}",
        agg.static_stats.n_frames, agg.static_stats.std
    );
    println!(
        "active frames: n = {}, spread = {:.4}  (excluded from the estimate)",
        agg.active_stats.n_frames, agg.active_stats.std
    );
    Ok(())
}
