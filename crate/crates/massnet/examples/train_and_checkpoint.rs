//! Train a small dual-branch model on synthetic data, watch the loss
//! components, checkpoint it, and reload it for inference.
//!
//! ```bash
//! cargo run --release -p massnet --example train_and_checkpoint
//! ```

use massnet::evaluation::{evaluate_report, TrainedModel};
use massnet::network::{load_checkpoint, save_checkpoint, CheckpointMeta, MassNet, ModelConfig};
use massnet::preprocess::{Normalization, PreprocessConfig};
use massnet::synthetic::{generate_dataset, GeneratorConfig};
use massnet::training::{dataset_max, train_model, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ds = generate_dataset(&GeneratorConfig {
        n_subjects: 10,
        samples_per_subject: 4,
        rows: 28,
        cols: 24,
        saturation_peak_quantile: Some(0.7),
        noise_sigma: 0.005,
        seed: 1,
        ..GeneratorConfig::default()
    })?;
    let (train, test) = ds.samples().split_at(32);

    let model_cfg = ModelConfig {
        n_sensing_layers: 1,
        stem_channels: 8,
        trunk_channels: 16,
        deep_feature_dim: 16,
        joint_feature_dim: 16,
        embedding_dim: 8,
        cbam_reduction: 4,
        cbam_spatial_kernel: 3,
        ..ModelConfig::default()
    };
    let prep = PreprocessConfig {
        upsample_factor: 1,
        gaussian_kernel: 3,
        target_rows: 32,
        target_cols: 32,
        normalization: Normalization::PerDatasetMax,
        ..PreprocessConfig::default()
    };
    let train_cfg = TrainConfig {
        base_lr: 2e-3,
        batch_size: 8,
        max_epochs: 5,
        warmup_epochs: 1,
        seed: 5,
        ..TrainConfig::default()
    };

    let mut model = MassNet::init(&model_cfg, &mut ChaCha8Rng::seed_from_u64(5))?;
    println!("model has {} trainable parameters", model.num_params());

    let state = train_model(&mut model, train, &[], &prep, &train_cfg, None)?;
    println!("\nepoch  lr        l_mae    l_con    l_all");
    for rec in &state.history {
        println!(
            "{:>5}  {:.2e}  {:7.3}  {:7.4}  {:7.3}",
            rec.epoch, rec.lr, rec.l_mae, rec.l_con, rec.l_all
        );
    }

    // checkpoint round trip preserves predictions bit-exactly
    let path = std::env::temp_dir().join("massnet_example.ckpt");
    let meta = CheckpointMeta {
        model: model_cfg,
        preprocess: Some(prep.clone()),
        dataset_max: Some(dataset_max(train)),
    };
    save_checkpoint(&model, &meta, &path)?;
    let loaded = load_checkpoint(&path)?;
    println!("\ncheckpoint written to {}", path.display());

    let trained = TrainedModel {
        model: loaded.model,
        preprocess: prep,
        dataset_max: dataset_max(train),
    };
    let report = evaluate_report(&trained, test)?;
    println!("\ntest report after {} epochs:\n{}", state.epoch, report.render_text());
    Ok(())
}
