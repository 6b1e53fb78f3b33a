//! `rsbm sample` — few-step generation and open-loop evaluation.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsbm_core::checkpoint;
use rsbm_core::model::PredictionTarget;
use rsbm_core::sampler::Solver;

use crate::pipeline;

#[derive(Args)]
pub struct SampleArgs {
    /// Velocity-model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Prior checkpoint (from the same training run).
    #[arg(long)]
    pub prior_checkpoint: PathBuf,
    /// Evaluation dataset CSV.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Integration steps.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// ODE solver: heun | euler.
    #[arg(long, default_value = "heun")]
    pub solver: String,
    /// Number of evaluation episodes.
    #[arg(long, default_value_t = 256)]
    pub n_eval: usize,
    /// Must match the checkpoint when given (mismatches are hard errors).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Must match the checkpoint when given (mismatches are hard errors).
    #[arg(long)]
    pub target: Option<String>,
    /// Zero the phase slot of the context, as during training.
    #[arg(long, default_value_t = false)]
    pub hide_phase: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for trajectories CSV and metrics JSON.
    #[arg(long)]
    pub out_dir: PathBuf,
}

pub fn run(args: SampleArgs) -> Result<i32> {
    let model = checkpoint::load_velocity(&args.checkpoint)?;
    let (prior_bridge, prior) = checkpoint::load_prior(&args.prior_checkpoint)?;

    // the checkpoint is the source of truth; explicit flags must agree
    if let Some(eps) = args.epsilon {
        if eps != model.bridge().epsilon {
            bail!(
                "epsilon mismatch: checkpoint has {}, flag says {eps}",
                model.bridge().epsilon
            );
        }
    }
    if let Some(target) = &args.target {
        let requested = PredictionTarget::parse(target)?;
        if requested != model.target() {
            bail!(
                "prediction-target mismatch: checkpoint has {}, flag says {requested}",
                model.target()
            );
        }
    }
    if prior_bridge != *model.bridge() {
        bail!(
            "bridge mismatch between checkpoints: prior trained at eps={}, velocity at eps={}",
            prior_bridge.epsilon,
            model.bridge().epsilon
        );
    }

    let solver = Solver::parse(&args.solver)?;
    let data = pipeline::load_dataset(&args.dataset, args.hide_phase)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let eval = pipeline::evaluate(
        &model,
        &prior,
        &data,
        args.hide_phase,
        solver,
        args.k,
        args.n_eval,
        &mut rng,
    )?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    pipeline::write_predictions_csv(&args.out_dir.join("trajectories.csv"), &eval.pairs)?;
    let metrics_path = args.out_dir.join("metrics.json");
    fs::write(
        &metrics_path,
        serde_json::to_string_pretty(&eval.report)? + "\n",
    )?;
    println!(
        "k={} solver={} nfe={} mse={:.6} cos_sim={:.6} fde={:.6}",
        args.k, solver, eval.report.nfe, eval.report.mse, eval.report.cos_sim, eval.report.fde
    );
    println!("metrics: {}", metrics_path.display());
    Ok(0)
}
