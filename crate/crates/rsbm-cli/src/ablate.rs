//! `rsbm ablate` — sweep runner emitting long-format CSV rows
//! `(sweep, config, seed, k, mse, cos_sim, fde, nfe)`.
//!
//! Cells run in a parallel worker pool; every cell derives its own random
//! stream from the base seed and its position in the sweep, and results are
//! merged in deterministic config order, so the output file is a pure
//! function of the arguments.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rsbm_core::sampler::Solver;

use crate::config::{FileConfig, TrainConfig};
use crate::pipeline::{self, LoadedData};

#[derive(Args)]
pub struct AblateArgs {
    /// Which sweep to run: epsilon | target | solver | prior.
    #[arg(long)]
    pub sweep: String,
    /// Dataset CSV; the last `--n-eval` rows are held out for evaluation.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of seeds (seed values are `seed_base..seed_base + seeds`).
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Held-out evaluation episodes per cell.
    #[arg(long, default_value_t = 200)]
    pub n_eval: usize,
    /// Training epochs per cell.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub prior_epochs: Option<usize>,
    #[arg(long, default_value_t = false)]
    pub hide_phase: bool,
}

#[derive(Clone, Copy)]
struct EvalSpec {
    k: usize,
    solver: Solver,
    prior_only: bool,
}

struct Cell {
    config: String,
    epsilon: f64,
    target: String,
    prior: String,
    evals: Vec<EvalSpec>,
}

fn heun_at(ks: &[usize]) -> Vec<EvalSpec> {
    ks.iter()
        .map(|&k| EvalSpec {
            k,
            solver: Solver::Heun,
            prior_only: false,
        })
        .collect()
}

fn build_cells(sweep: &str) -> Result<Vec<Cell>> {
    let cell = |config: &str, epsilon: f64, target: &str, prior: &str, evals: Vec<EvalSpec>| Cell {
        config: config.to_string(),
        epsilon,
        target: target.to_string(),
        prior: prior.to_string(),
        evals,
    };
    Ok(match sweep {
        "epsilon" => [0.1, 0.3, 0.5, 0.7, 1.0]
            .iter()
            .map(|&eps| {
                cell(
                    &format!("eps{eps}"),
                    eps,
                    "v",
                    "learned",
                    heun_at(&[1, 3, 5, 10]),
                )
            })
            .collect(),
        "target" => ["v", "x0", "eps"]
            .iter()
            .map(|&t| cell(&format!("target_{t}"), 0.5, t, "learned", heun_at(&[3, 10])))
            .collect(),
        "solver" => {
            // one trained model per seed, evaluated under both solvers; the
            // euler k=5 / heun k=3 rows form the matched NFE=5 pair
            let evals: Vec<EvalSpec> = [3usize, 5, 10]
                .iter()
                .flat_map(|&k| {
                    [Solver::Heun, Solver::Euler].map(|solver| EvalSpec {
                        k,
                        solver,
                        prior_only: false,
                    })
                })
                .collect();
            vec![cell("solver_shared_model", 0.5, "v", "learned", evals)]
        }
        "prior" => vec![
            cell(
                "prior_only",
                0.5,
                "v",
                "learned",
                vec![EvalSpec {
                    k: 0,
                    solver: Solver::Heun,
                    prior_only: true,
                }],
            ),
            cell("gaussian_eps0.5", 0.5, "v", "gaussian", heun_at(&[3])),
            cell("gaussian_eps1.0", 1.0, "v", "gaussian", heun_at(&[3])),
            cell("learned_eps1.0", 1.0, "v", "learned", heun_at(&[3])),
            cell("learned_eps0.5", 0.5, "v", "learned", heun_at(&[3])),
        ],
        other => bail!("unknown sweep '{other}' (expected epsilon | target | solver | prior)"),
    })
}

struct Row {
    sweep: String,
    config: String,
    seed: u64,
    k: usize,
    mse: f64,
    cos_sim: f64,
    fde: f64,
    nfe: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    sweep: &str,
    cell: &Cell,
    seed: u64,
    cell_seed: u64,
    train_data: &LoadedData,
    eval_data: &LoadedData,
    base: &TrainConfig,
    n_eval: usize,
) -> Result<Vec<Row>> {
    let cfg = TrainConfig {
        epsilon: cell.epsilon,
        target: cell.target.clone(),
        prior: cell.prior.clone(),
        ..base.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cell_seed);
    let artifacts = pipeline::train_pipeline(train_data, &cfg, &mut rng)?;
    let mut rows = Vec::with_capacity(cell.evals.len());
    for spec in &cell.evals {
        // fresh evaluation stream per cell evaluation, decoupled from the
        // training stream's length
        let mut eval_rng = ChaCha8Rng::seed_from_u64(cell_seed.wrapping_add(0x5EED));
        let eval = if spec.prior_only {
            pipeline::evaluate_prior_only(
                &artifacts.prior,
                eval_data,
                cfg.hide_phase,
                n_eval,
                &mut eval_rng,
            )?
        } else {
            pipeline::evaluate(
                &artifacts.model,
                &artifacts.prior,
                eval_data,
                cfg.hide_phase,
                spec.solver,
                spec.k,
                n_eval,
                &mut eval_rng,
            )?
        };
        let config = if sweep == "solver" {
            format!("{}_k{}", spec.solver, spec.k)
        } else {
            cell.config.clone()
        };
        rows.push(Row {
            sweep: sweep.to_string(),
            config,
            seed,
            k: spec.k,
            mse: eval.report.mse,
            cos_sim: eval.report.cos_sim,
            fde: eval.report.fde,
            nfe: eval.report.nfe,
        });
    }
    Ok(rows)
}

pub fn run(args: AblateArgs) -> Result<i32> {
    let cells = build_cells(&args.sweep)?;
    let base = TrainConfig::resolve(
        &FileConfig::default(),
        None,
        None,
        None,
        args.epochs,
        args.lr,
        args.batch,
        None,
        None,
        args.prior_epochs,
        None,
        args.hide_phase,
    );

    let full = pipeline::load_dataset(&args.dataset, args.hide_phase)?;
    if full.samples.len() <= args.n_eval {
        bail!(
            "dataset has {} rows; need more than --n-eval = {}",
            full.samples.len(),
            args.n_eval
        );
    }
    let split = full.samples.len() - args.n_eval;
    let train_data = LoadedData {
        samples: full.samples[..split].to_vec(),
        pairs: full.pairs[..split].to_vec(),
        horizon: full.horizon,
    };
    let eval_data = LoadedData {
        samples: full.samples[split..].to_vec(),
        pairs: full.pairs[split..].to_vec(),
        horizon: full.horizon,
    };

    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|ci| (0..args.seeds).map(move |si| (ci, args.seed + si)))
        .collect();
    let mut keyed: Vec<((usize, u64), Vec<Row>)> = jobs
        .par_iter()
        .map(|&(ci, seed)| {
            let cell_seed = args
                .seed
                .wrapping_mul(1_000_003)
                .wrapping_add((ci as u64) * 1009)
                .wrapping_add(seed);
            let rows = run_cell(
                &args.sweep,
                &cells[ci],
                seed,
                cell_seed,
                &train_data,
                &eval_data,
                &base,
                args.n_eval,
            )?;
            Ok(((ci, seed), rows))
        })
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by_key(|(key, _)| *key);

    let mut out = String::from("sweep,config,seed,k,mse,cos_sim,fde,nfe\n");
    for (_, rows) in &keyed {
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.sweep, r.config, r.seed, r.k, r.mse, r.cos_sim, r.fde, r.nfe
            ));
        }
    }
    fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))?;
    let n_rows = keyed.iter().map(|(_, r)| r.len()).sum::<usize>();
    println!("wrote {n_rows} sweep rows to {}", args.out.display());
    Ok(0)
}
