//! The loss zoo on a toy batch: the weight-gap penalty factor, the plain
//! supervised contrastive loss, its weight-penalized variant, and the overall
//! weighted objective.
//!
//! ```bash
//! cargo run -p massnet --example contrastive_losses
//! ```

use massnet::losses::{
    mae_loss, masscon_loss, overall_loss, penalty_factor, ContrastiveBatch,
};
use ndarray::array;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("penalty factor exp(|Mi - Mj| / Mi):");
    for (a, b) in [(50.0, 50.0), (50.0, 60.0), (60.0, 50.0), (50.0, 90.0)] {
        println!("  delta({a}, {b}) = {:.9}", penalty_factor(a, b)?);
    }

    // two views each of two subjects; one subject light, one heavy
    let embeddings = array![
        [0.98, 0.199],
        [0.92, 0.392],
        [-0.35, 0.937],
        [-0.20, 0.980],
    ];
    let subjects: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
    let weights = [48.0, 48.0, 95.0, 95.0];

    let supcon = masscon_loss(&ContrastiveBatch {
        embeddings: embeddings.view(),
        subject_ids: &subjects,
        weights_kg: &weights,
        temperature: 0.1,
        penalty_enabled: false,
    })?;
    let masscon = masscon_loss(&ContrastiveBatch {
        embeddings: embeddings.view(),
        subject_ids: &subjects,
        weights_kg: &weights,
        temperature: 0.1,
        penalty_enabled: true,
    })?;
    println!("\nplain supervised contrastive loss: {supcon:.6}");
    println!("weight-penalized variant:          {masscon:.6}");
    println!("(the penalty pushes far-apart weights further apart in embedding space)");

    let l_mae = mae_loss(&[50.2, 61.0, 93.5, 96.0], &[48.0, 48.0, 95.0, 95.0])?;
    let breakdown = overall_loss(l_mae, masscon, 0.25)?;
    println!(
        "\noverall objective: {:.4} = {:.4} (mae) + {} x {:.4} (contrastive)",
        breakdown.l_all, breakdown.l_mae, breakdown.lambda, breakdown.l_con
    );
    Ok(())
}
