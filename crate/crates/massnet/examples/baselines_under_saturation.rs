//! Why summing pixels is not a weight estimate on real mats: the linear
//! baseline is exact in an ideal world and falls apart once the sensor
//! saturates. The statistical-features baseline degrades more gracefully.
//!
//! ```bash
//! cargo run -p massnet --example baselines_under_saturation
//! ```

use massnet::evaluation::{
    evaluate_report, linear_fit_baseline, statistical_features, StatFeatureRegressor,
};
use massnet::synthetic::{generate_dataset, GeneratorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let base = GeneratorConfig {
        n_subjects: 40,
        samples_per_subject: 4,
        seed: 77,
        ..GeneratorConfig::default()
    };

    // ideal sensor: sum(frame) == weight, the linear fit is perfect
    let ideal = generate_dataset(&base)?;
    let (train, test) = ideal.samples().split_at(120);
    let fit = linear_fit_baseline(train)?;
    let report = evaluate_report(&fit, test)?;
    println!(
        "ideal sensor:     linear fit a = {:.6}, b = {:+.2e}, test MAE {:.2e} kg",
        fit.a, fit.b, report.mae_mean
    );

    // saturating + noisy sensor: the sum no longer tracks the weight
    let distorted = generate_dataset(&GeneratorConfig {
        gain_sigma: 0.05,
        saturation_peak_quantile: Some(0.7),
        noise_sigma: 0.01,
        ..base
    })?;
    let (train, test) = distorted.samples().split_at(120);
    let fit = linear_fit_baseline(train)?;
    let linear_report = evaluate_report(&fit, test)?;
    println!(
        "saturated sensor: linear fit test MAE {:.3} kg ({:.2} %)",
        linear_report.mae_mean, linear_report.mape_mean
    );

    let stat = StatFeatureRegressor::fit(train)?;
    let stat_report = evaluate_report(&stat, test)?;
    println!(
        "saturated sensor: 14-feature ridge test MAE {:.3} kg ({:.2} %)",
        stat_report.mae_mean, stat_report.mape_mean
    );

    let sample = &test[0];
    println!(
        "\nthe 14 statistics of one frame:\n{:?}",
        statistical_features(&sample.frame)
    );
    Ok(())
}
