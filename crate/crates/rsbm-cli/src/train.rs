//! `rsbm train` — prior + velocity training with checkpoint and loss-trace
//! output.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsbm_core::checkpoint;

use crate::config::{FileConfig, TrainConfig};
use crate::pipeline;

#[derive(Args)]
pub struct TrainArgs {
    /// Training dataset CSV (from `rsbm generate`).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Directory for checkpoints and loss traces.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Optional TOML config file (flags override its entries).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Rectification strength ε in (0, 1].
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Prediction target: v | x0 | eps.
    #[arg(long)]
    pub target: Option<String>,
    /// Terminal prior: gaussian | perturbed | learned.
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub sigma_max: Option<f64>,
    #[arg(long)]
    pub sigma_min: Option<f64>,
    /// Epochs for the learned-prior phase.
    #[arg(long)]
    pub prior_epochs: Option<usize>,
    #[arg(long)]
    pub prior_lr: Option<f64>,
    /// Zero the phase slot of the context (multimodal conditioning).
    #[arg(long, default_value_t = false)]
    pub hide_phase: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn write_trace(path: &PathBuf, trace: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,loss\n");
    for (epoch, loss) in trace.iter().enumerate() {
        out.push_str(&format!("{epoch},{loss}\n"));
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn run(args: TrainArgs) -> Result<i32> {
    let file = FileConfig::load(args.config.as_deref())?;
    let cfg = TrainConfig::resolve(
        &file,
        args.epsilon,
        args.target,
        args.prior,
        args.epochs,
        args.lr,
        args.batch,
        args.sigma_max,
        args.sigma_min,
        args.prior_epochs,
        args.prior_lr,
        args.hide_phase,
    );
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let data = pipeline::load_dataset(&args.dataset, cfg.hide_phase)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let artifacts = pipeline::train_pipeline(&data, &cfg, &mut rng)?;

    let velocity_path = args.out_dir.join("velocity.rsbm");
    checkpoint::save_velocity(&velocity_path, &artifacts.model)?;
    let prior_path = args.out_dir.join("prior.rsbm");
    checkpoint::save_prior(&prior_path, artifacts.model.bridge(), &artifacts.prior)?;
    write_trace(&args.out_dir.join("loss.csv"), &artifacts.loss_trace)?;
    if !artifacts.prior_trace.is_empty() {
        write_trace(&args.out_dir.join("prior_loss.csv"), &artifacts.prior_trace)?;
    }

    match (artifacts.loss_trace.first(), artifacts.loss_trace.last()) {
        (Some(first), Some(last)) => println!(
            "trained {} epochs (eps={}, target={}, prior={}): loss {first:.6} -> {last:.6}",
            cfg.epochs, cfg.epsilon, cfg.target, cfg.prior
        ),
        _ => println!(
            "wrote initial checkpoint without training (eps={}, target={}, prior={})",
            cfg.epsilon, cfg.target, cfg.prior
        ),
    }
    println!("checkpoints: {}", args.out_dir.display());
    Ok(0)
}
