//! The three dataset splitting strategies on a synthetic population.
//!
//! ```bash
//! cargo run -p massnet --example dataset_splits
//! ```

use std::collections::BTreeSet;

use massnet::data::{split_loso, split_random_kfold, split_weight_binned, Dataset};
use massnet::synthetic::{generate_dataset, GeneratorConfig};

fn subjects_of(ds: &Dataset, idx: &[usize]) -> BTreeSet<String> {
    idx.iter()
        .map(|&i| ds.samples()[i].subject_id.clone())
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // an SLP-sized population: 102 subjects, 45 frames each
    let ds = generate_dataset(&GeneratorConfig {
        n_subjects: 102,
        samples_per_subject: 45,
        rows: 16,
        cols: 12,
        seed: 9,
        ..GeneratorConfig::default()
    })?;
    println!("dataset: {} samples, {} subjects", ds.len(), ds.subjects().len());

    let binned = split_weight_binned(&ds, 10, 7)?;
    println!(
        "\nweight-binned: {} train / {} val / {} test subjects ({} / {} / {} samples)",
        subjects_of(&ds, &binned.train).len(),
        subjects_of(&ds, &binned.val).len(),
        subjects_of(&ds, &binned.test).len(),
        binned.train.len(),
        binned.val.len(),
        binned.test.len(),
    );

    let held = ds.subjects()[3].clone();
    let loso = split_loso(&ds, &held)?;
    println!(
        "loso (hold {held}): {} train samples, {} test samples, val empty = {}",
        loso.train.len(),
        loso.test.len(),
        loso.val.is_empty(),
    );

    let folds = split_random_kfold(&ds, 5, 11)?;
    let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
    println!("random 5-fold test sizes: {sizes:?} (sample-level, seen subjects)");
    Ok(())
}
