//! Run the branch-contribution ablation on a small synthetic set: joint
//! branch only, deep branch only, and the dual-branch model, all trained with
//! the same seed.
//!
//! ```bash
//! cargo run --release -p massnet --example ablation_scan
//! ```

use massnet::evaluation::{run_ablation, AblationAxis, RunSpec};
use massnet::network::ModelConfig;
use massnet::preprocess::PreprocessConfig;
use massnet::synthetic::{generate_dataset, GeneratorConfig};
use massnet::training::TrainConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate_dataset(&GeneratorConfig {
        n_subjects: 8,
        samples_per_subject: 4,
        rows: 20,
        cols: 16,
        saturation_peak_quantile: Some(0.7),
        seed: 3,
        ..GeneratorConfig::default()
    })?;
    let (train, test) = ds.samples().split_at(24);

    let spec = RunSpec {
        model: ModelConfig {
            n_sensing_layers: 1,
            stem_channels: 4,
            trunk_channels: 8,
            deep_feature_dim: 8,
            joint_feature_dim: 8,
            embedding_dim: 4,
            cbam_reduction: 2,
            cbam_spatial_kernel: 3,
            ..ModelConfig::default()
        },
        train: TrainConfig {
            base_lr: 2e-3,
            batch_size: 8,
            max_epochs: 3,
            warmup_epochs: 1,
            seed: 21,
            ..TrainConfig::default()
        },
        preprocess: PreprocessConfig {
            upsample_factor: 1,
            gaussian_kernel: 3,
            target_rows: 24,
            target_cols: 20,
            ..PreprocessConfig::default()
        },
    };

    let table = run_ablation(AblationAxis::Branches, &spec, train.to_vec().as_slice(), &[], test)?;
    print!("{}", table.to_csv());
    println!("\n(loss_variant, depth_scan, and joint_noise axes run the same way)");
    Ok(())
}
