use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use inertial_odometry::io::{load_dataset, IMU_FILE, TRUTH_FILE};
use inertial_odometry::neural::{
    load_params, resume_training, save_params, train, DatasetConfig, LabeledDataset, TrainingConfig,
};
use serde::{Deserialize, Serialize};

use crate::config;
use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

pub const WEIGHTS_FILE: &str = "weights.json";
pub const LOSS_HISTORY_FILE: &str = "loss_history.csv";

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset directory holding imu.csv and truth.csv, or a directory of such directories. Repeatable.
    #[arg(long = "dataset")]
    pub datasets: Vec<PathBuf>,
    /// Continue from a saved weight file.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub window_len: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainConfig {
    datasets: Vec<PathBuf>,
    resume: Option<PathBuf>,
    training: TrainingConfig,
    dataset: DatasetConfig,
    output_dir: Option<PathBuf>,
}

fn has_dataset(dir: &Path) -> bool {
    dir.join(IMU_FILE).is_file() && dir.join(TRUTH_FILE).is_file()
}

/// A dataset directory itself, or its immediate dataset subdirectories in name order.
fn expand(dir: &Path) -> CliResult<Vec<PathBuf>> {
    if has_dataset(dir) {
        return Ok(vec![dir.to_path_buf()]);
    }
    let entries = fs::read_dir(dir).map_err(|e| CliError::data(format!("dataset {}: {e}", dir.display())))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| has_dataset(p))
        .collect();
    found.sort();
    if found.is_empty() {
        return Err(CliError::data(format!(
            "{} contains neither {IMU_FILE}+{TRUTH_FILE} nor dataset subdirectories",
            dir.display()
        )));
    }
    Ok(found)
}

pub fn run(args: TrainArgs) -> CliResult<()> {
    let (mut cfg, base) = config::load::<TrainConfig>(args.config.as_deref())?;
    cfg.datasets = cfg.datasets.iter().map(|p| config::rebase(&base, p)).collect();
    cfg.resume = cfg.resume.map(|p| config::rebase(&base, &p));
    if !args.datasets.is_empty() {
        cfg.datasets = args.datasets;
    }
    cfg.resume = args.resume.or(cfg.resume);
    let t = &mut cfg.training;
    t.epochs = args.epochs.unwrap_or(t.epochs);
    t.rng_seed = args.seed.unwrap_or(t.rng_seed);
    t.hidden_size = args.hidden_size.unwrap_or(t.hidden_size);
    t.learning_rate = args.learning_rate.unwrap_or(t.learning_rate);
    cfg.dataset.window_len = args.window_len.unwrap_or(cfg.dataset.window_len);
    cfg.dataset.stride = args.stride.unwrap_or(cfg.dataset.stride);
    if cfg.datasets.is_empty() {
        return Err(CliError::config(
            "no training data: set `datasets` in the config or pass --dataset",
        ));
    }
    let out = config::output_dir(
        args.output_dir,
        cfg.output_dir.take().map(|p| config::rebase(&base, &p)),
    )?;

    let mut manifest = Manifest::new("train", &cfg, vec![cfg.training.rng_seed]);
    let mut tracks = Vec::new();
    for dir in &cfg.datasets {
        for d in expand(dir)? {
            tracks.push(load_dataset::<f64>(&d).map_err(|e| CliError::from(e).context("loading dataset"))?);
            manifest.input(&d.join(IMU_FILE))?;
            manifest.input(&d.join(TRUTH_FILE))?;
        }
    }
    let dataset = LabeledDataset::from_tracks(&tracks, &cfg.dataset)?;
    eprintln!(
        "training on {} windows, validating on {}",
        dataset.train.len(),
        dataset.validation.len()
    );

    let outcome = match &cfg.resume {
        Some(path) => {
            let model = load_params::<f64>(path).map_err(|e| CliError::from(e).context("loading resume weights"))?;
            if model.params.hidden() != cfg.training.hidden_size {
                eprintln!(
                    "note: resuming a {}-unit model; hidden_size {} is ignored",
                    model.params.hidden(),
                    cfg.training.hidden_size
                );
            }
            manifest.input(path)?;
            resume_training(model, &dataset, &cfg.training)?
        }
        None => train(&dataset, &cfg.training)?,
    };

    save_params(&outcome.model, &out.join(WEIGHTS_FILE))?;
    let mut history = String::from("epoch,train_loss,val_loss\n");
    for e in &outcome.history {
        writeln!(history, "{},{},{}", e.epoch, e.train_loss, e.val_loss).unwrap();
    }
    let history_path = out.join(LOSS_HISTORY_FILE);
    fs::write(&history_path, history).map_err(|e| CliError::io(&history_path, e))?;
    manifest.output(&out, WEIGHTS_FILE)?;
    manifest.output(&out, LOSS_HISTORY_FILE)?;
    manifest.write(&out)?;
    let best = &outcome.history.iter().find(|e| e.epoch == outcome.best_epoch);
    if let Some(best) = best {
        eprintln!(
            "best epoch {} (val loss {:.5}) -> {}",
            best.epoch,
            best.val_loss,
            out.display()
        );
    }
    Ok(())
}
