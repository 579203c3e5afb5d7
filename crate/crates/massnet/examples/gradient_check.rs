//! Verify the hand-written backward passes against central finite
//! differences: the contrastive loss with respect to its embeddings, and a
//! tiny full model with respect to a sample of its parameters.
//!
//! ```bash
//! cargo run --release -p massnet --example gradient_check
//! ```

use massnet::losses::{masscon_loss, masscon_loss_with_grad, ContrastiveBatch};
use massnet::network::{MassNet, ModelConfig};
use ndarray::{Array, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    // --- contrastive loss vs its embeddings --------------------------------
    let mut emb: Array2<f64> = Array::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
    for mut row in emb.rows_mut() {
        let norm = row.dot(&row).sqrt();
        row.mapv_inplace(|v| v / norm);
    }
    let subjects: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
    let weights = [48.0, 48.0, 95.0, 95.0];
    let batch = |view: ArrayView2<f64>| ContrastiveBatch {
        embeddings: view,
        subject_ids: &subjects,
        weights_kg: &weights,
        temperature: 0.2,
        penalty_enabled: true,
    };

    let (_, grad) = masscon_loss_with_grad(&batch(emb.view()))?;
    let mut worst: f64 = 0.0;
    let eps = 1e-6;
    let mut probe = emb.clone();
    for i in 0..4 {
        for k in 0..3 {
            let orig = probe[(i, k)];
            probe[(i, k)] = orig + eps;
            let fp = masscon_loss(&batch(probe.view()))?;
            probe[(i, k)] = orig - eps;
            let fm = masscon_loss(&batch(probe.view()))?;
            probe[(i, k)] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let rel = (numeric - grad[(i, k)]).abs()
                / (numeric.abs() + grad[(i, k)].abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    println!("contrastive-loss gradient: worst relative error {worst:.2e}");

    // --- full model parameters ----------------------------------------------
    let cfg = ModelConfig {
        n_sensing_layers: 1,
        stem_channels: 2,
        trunk_channels: 4,
        deep_feature_dim: 8,
        joint_feature_dim: 8,
        embedding_dim: 4,
        cbam_reduction: 2,
        cbam_spatial_kernel: 3,
        joint_count: 2,
        ..ModelConfig::default()
    };
    let model = MassNet::init(&cfg, &mut rng)?;
    let frames = Array::from_shape_fn((2, 1, 8, 8), |_| rng.random_range(0.0..1.0));
    let joints = Array::from_shape_fn((2, 4), |_| rng.random_range(0.0..1.0));
    let wpred = ndarray::Array1::from_shape_fn(2, |_| rng.random_range(-1.0..1.0));

    let (_, cache) = model.forward_train(Some(&frames), Some(&joints))?;
    let mut grads = model.zeros_like();
    model.backward(Some(&frames), Some(&joints), &cache, &wpred, None, &mut grads);

    let objective = |m: &MassNet| -> f64 {
        let (out, _) = m.forward_train(Some(&frames), Some(&joints)).unwrap();
        out.predictions.dot(&wpred)
    };

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut gsed = grads.clone();
    let names: Vec<String> = {
        let mut m = model.clone();
        m.collect_params().into_iter().map(|(n, _)| n).collect()
    };
    for name in names.iter().step_by(3) {
        let analytic = {
            let mut list = gsed.collect_params();
            list.iter_mut().find(|(n, _)| n == name).map(|(_, v)| v[0]).unwrap()
        };
        let eval = |delta: f64| {
            let mut m = model.clone();
            for (n, slot) in m.collect_params() {
                if &n == name {
                    slot[0] += delta;
                }
            }
            objective(&m)
        };
        let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
        if analytic.abs().max(numeric.abs()) > 1e-6 {
            let rel = (numeric - analytic).abs() / (numeric.abs() + analytic.abs());
            worst = worst.max(rel);
            checked += 1;
        }
    }
    println!("full-model parameter gradients: {checked} tensors spot-checked, worst relative error {worst:.2e}");
    Ok(())
}
