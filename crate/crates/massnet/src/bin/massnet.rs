//! Command-line entry point: reproducible experiment runs driven by a
//! config file.
//!
//! Subcommands: `train`, `eval`, `predict`, `ablate`, `synth`, `segment`.
//! Usage and config problems exit with code 2, runtime failures with 1; both
//! print a single-line diagnostic on stderr. The `MASSCON_RUNS_DIR`
//! environment variable overrides the root under which run artifacts land.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use massnet::config::ExperimentConfig;
use massnet::data::{
    load_dataset, load_frame_csv, save_native, split_loso, split_random_kfold,
    split_weight_binned, Dataset, DatasetFormat, PressureFrame, Sample, SplitSpec,
};
use massnet::error::Error;
use massnet::evaluation::{
    evaluate_report, predict_single_frame, run_ablation, AblationAxis, RunSpec, TrainedModel,
};
use massnet::network::{load_checkpoint, MassNet};
use massnet::synthetic::{generate_dataset, GeneratorConfig};
use massnet::timeseries::{
    aggregate_weight, default_thresholds, segment_frames, temporal_gradient, LabelStats,
    SegmentList,
};
use massnet::training::{dataset_max, train_model};

#[derive(Parser)]
#[command(
    name = "massnet",
    about = "Body-weight regression from bed-pressure images",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from an experiment config and write run artifacts.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run name; defaults to the final component of output_dir.
        #[arg(long)]
        name: Option<String>,
    },
    /// Evaluate a checkpoint on the config's test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
    },
    /// Predict the weight for a single frame CSV.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        frame: PathBuf,
    },
    /// Run one ablation axis: branches, loss_variant, depth_scan, joint_noise.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long)]
        name: Option<String>,
    },
    /// Generate a synthetic dataset in the native format.
    Synth {
        /// Number of samples to emit.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 32)]
        rows: usize,
        #[arg(long, default_value_t = 26)]
        cols: usize,
        #[arg(long, default_value_t = 5)]
        samples_per_subject: usize,
        #[arg(long, default_value_t = 40.0)]
        weight_min: f64,
        #[arg(long, default_value_t = 105.0)]
        weight_max: f64,
        /// Per-cell gain stddev (sensor non-consistency).
        #[arg(long, default_value_t = 0.0)]
        gain_sigma: f64,
        /// Cap values at this quantile of the ideal per-frame peaks.
        #[arg(long)]
        saturation_quantile: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        noise_sigma: f64,
    },
    /// Segment a frame-sequence directory and aggregate a session weight.
    Segment {
        /// Directory of frame CSVs (or a native-format dataset root).
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        tau_hi: Option<f64>,
        #[arg(long)]
        tau_lo: Option<f64>,
        #[arg(long, default_value_t = 5)]
        min_len: usize,
        /// Write the session report JSON here (printed to stdout otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("massnet: {err}");
            if err.is_usage() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// Resolve the run directory: MASSCON_RUNS_DIR overrides the configured root.
fn run_dir(cfg: &ExperimentConfig, name: Option<&str>) -> PathBuf {
    let leaf = name
        .map(PathBuf::from)
        .or_else(|| cfg.output_dir.file_name().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("experiment"));
    match std::env::var_os("MASSCON_RUNS_DIR") {
        Some(root) => PathBuf::from(root).join(leaf),
        None => match name {
            Some(n) => cfg
                .output_dir
                .parent()
                .unwrap_or(Path::new("runs"))
                .join(n),
            None => cfg.output_dir.clone(),
        },
    }
}

fn resolve_split(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<SplitSpec, Error> {
    let split = &cfg.split;
    let spec = match split.strategy.as_str() {
        "weight_binned" => split_weight_binned(dataset, split.n_bins, split.seed)?,
        "loso" => {
            let held = split.held_subject.as_deref().unwrap_or_default();
            split_loso(dataset, held)?
        }
        "random_kfold" => {
            let folds = split_random_kfold(dataset, split.k, split.seed)?;
            folds
                .into_iter()
                .nth(split.fold)
                .ok_or_else(|| Error::Other(format!("fold {} out of range", split.fold)))?
        }
        other => return Err(Error::Other(format!("unknown split strategy {other:?}"))),
    };
    Ok(spec)
}

fn load_experiment(config_path: &Path) -> Result<(ExperimentConfig, Dataset, SplitSpec), Error> {
    let cfg = ExperimentConfig::load(config_path)?;
    let dataset = load_dataset(&cfg.dataset.path, cfg.dataset.format)?;
    let split = resolve_split(&cfg, &dataset)?;
    Ok((cfg, dataset, split))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Other(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, body)
        .map_err(|e| Error::Other(format!("write {}: {e}", path.display())))?;
    Ok(())
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Train { config, name } => {
            let (cfg, dataset, split) = load_experiment(&config)?;
            let dir = run_dir(&cfg, name.as_deref());
            let train = dataset.subset(&split.train);
            let val = dataset.subset(&split.val);
            let test = dataset.subset(&split.test);

            let mut model =
                MassNet::init(&cfg.model, &mut ChaCha8Rng::seed_from_u64(cfg.train.seed))?;
            let state =
                train_model(&mut model, &train, &val, &cfg.preprocess, &cfg.train, Some(&dir))?;
            println!(
                "trained {} epochs; best val MAE {}",
                state.epoch,
                state
                    .best_val_mae
                    .map_or("n/a".to_string(), |v| format!("{v:.3} kg"))
            );

            if !test.is_empty() {
                let trained = TrainedModel {
                    model,
                    preprocess: cfg.preprocess.clone(),
                    dataset_max: dataset_max(&train),
                };
                let report = evaluate_report(&trained, &test)?;
                write_json(&dir.join("report.json"), &report)?;
                print!("{}", report.render_text());
            }
            Ok(())
        }

        Command::Eval { config, ckpt } => {
            let (cfg, dataset, split) = load_experiment(&config)?;
            let dir = run_dir(&cfg, None);
            let loaded = load_checkpoint(&ckpt)?;
            let test = dataset.subset(&split.test);
            if test.is_empty() {
                return Err(Error::Other("empty test split".into()));
            }
            let trained = TrainedModel {
                dataset_max: loaded.meta.dataset_max.unwrap_or(1.0),
                preprocess: loaded
                    .meta
                    .preprocess
                    .clone()
                    .unwrap_or_else(|| cfg.preprocess.clone()),
                model: loaded.model,
            };
            let report = evaluate_report(&trained, &test)?;
            std::fs::create_dir_all(&dir).map_err(|e| Error::Other(e.to_string()))?;
            write_json(&dir.join("report.json"), &report)?;
            print!("{}", report.render_text());
            Ok(())
        }

        Command::Predict { ckpt, frame } => {
            let loaded = load_checkpoint(&ckpt)?;
            let grid = load_frame_csv(&frame)?;
            let prep = loaded.meta.preprocess.clone().unwrap_or_default();
            let weight = predict_single_frame(
                &loaded.model,
                &prep,
                loaded.meta.dataset_max.unwrap_or(1.0),
                &grid,
            )?;
            println!("weight_kg={weight:.3}");
            Ok(())
        }

        Command::Ablate { config, axis, name } => {
            let axis: AblationAxis = axis.parse().map_err(Error::Other)?;
            let (cfg, dataset, split) = load_experiment(&config)?;
            let dir = run_dir(&cfg, name.as_deref());
            let spec = RunSpec {
                model: cfg.model.clone(),
                train: cfg.train.clone(),
                preprocess: cfg.preprocess.clone(),
            };
            let table = run_ablation(
                axis,
                &spec,
                &dataset.subset(&split.train),
                &dataset.subset(&split.val),
                &dataset.subset(&split.test),
            )?;
            std::fs::create_dir_all(&dir).map_err(|e| Error::Other(e.to_string()))?;
            let csv = table.to_csv();
            std::fs::write(dir.join("ablation.csv"), &csv)
                .map_err(|e| Error::Other(e.to_string()))?;
            write_json(&dir.join("ablation.json"), &table)?;
            print!("{csv}");
            Ok(())
        }

        Command::Synth {
            n,
            seed,
            out,
            rows,
            cols,
            samples_per_subject,
            weight_min,
            weight_max,
            gain_sigma,
            saturation_quantile,
            noise_sigma,
        } => {
            if n == 0 {
                return Err(Error::Other("--n must be positive".into()));
            }
            let sps = samples_per_subject.max(1);
            let gen_cfg = GeneratorConfig {
                n_subjects: n.div_ceil(sps),
                samples_per_subject: sps,
                rows,
                cols,
                weight_range: (weight_min, weight_max),
                gain_sigma,
                saturation_peak_quantile: saturation_quantile,
                noise_sigma,
                seed,
                ..GeneratorConfig::default()
            };
            let dataset = generate_dataset(&gen_cfg)?;
            let samples: Vec<Sample> = dataset.samples()[..n].to_vec();
            let dataset = Dataset::new(samples, dataset.format());
            save_native(&dataset, &out)?;
            println!("wrote {} samples to {}", dataset.len(), out.display());
            Ok(())
        }

        Command::Segment {
            dir,
            ckpt,
            tau_hi,
            tau_lo,
            min_len,
            out,
        } => {
            let loaded = load_checkpoint(&ckpt)?;
            let frames = load_frame_sequence(&dir)?;
            let prep = loaded.meta.preprocess.clone().unwrap_or_default();
            let data_max = loaded.meta.dataset_max.unwrap_or(1.0);

            let mut predictions = Vec::with_capacity(frames.len());
            for frame in &frames {
                predictions.push(predict_single_frame(&loaded.model, &prep, data_max, frame)?);
            }

            let gradient = temporal_gradient(&frames)?;
            let (default_hi, default_lo) = default_thresholds(&gradient);
            let hi = tau_hi.unwrap_or(default_hi);
            let lo = tau_lo.unwrap_or(default_lo);
            let segments = segment_frames(&gradient, hi, lo, min_len)?;
            let aggregate = aggregate_weight(&predictions, &segments)?;

            #[derive(serde::Serialize)]
            struct SessionReport {
                estimate_kg: f64,
                segments: SegmentList,
                static_stats: LabelStats,
                active_stats: LabelStats,
            }
            let report = SessionReport {
                estimate_kg: aggregate.estimate_kg,
                segments,
                static_stats: aggregate.static_stats,
                active_stats: aggregate.active_stats,
            };
            let body =
                serde_json::to_string_pretty(&report).map_err(|e| Error::Other(e.to_string()))?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &body)
                        .map_err(|e| Error::Other(format!("write {}: {e}", path.display())))?;
                    println!("estimate_kg={:.3}", report.estimate_kg);
                }
                None => println!("{body}"),
            }
            Ok(())
        }
    }
}

/// Frames from either a native dataset root or a directory of frame CSVs
/// sorted by file name.
fn load_frame_sequence(dir: &Path) -> Result<Vec<PressureFrame>, Error> {
    if dir.join("meta.json").exists() {
        for format in [
            DatasetFormat::MassnetDynamic,
            DatasetFormat::MassnetStatic,
            DatasetFormat::Synthetic,
        ] {
            if let Ok(ds) = load_dataset(dir, format) {
                return Ok(ds.samples().iter().map(|s| s.frame.clone()).collect());
            }
        }
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Other(format!("read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Other(format!(
            "no frame CSVs found under {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| load_frame_csv(p).map_err(Error::from))
        .collect()
}
