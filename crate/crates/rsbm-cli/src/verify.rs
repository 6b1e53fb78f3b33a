//! `rsbm verify` — the numerical verification suite, with a JSON report and
//! a nonzero exit code on any failure.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsbm_core::data::{self, generate_dataset, TaskSampler, ToyShape};
use rsbm_core::model::{ModelArch, PredictionTarget, TrainState, VelocityModel};
use rsbm_core::oracle::{self, OracleOptions, TrainedCheck};
use rsbm_core::prior::{self, PriorKind};
use rsbm_core::sampler::ModelField;
use rsbm_core::BridgeConfig;

#[derive(Args)]
pub struct VerifyArgs {
    /// Write the machine-readable report here.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Negative-control defect injected into the reference kernel
    /// derivative (test-only; any nonzero value must fail the suite).
    #[arg(long, default_value_t = 0.0)]
    pub perturb_kernel: f64,
    /// Monte-Carlo draws per variance cell.
    #[arg(long, default_value_t = 100_000)]
    pub mc_draws: usize,
    /// Skip the quick internal training used by the error-floor check.
    #[arg(long, default_value_t = false)]
    pub skip_trained: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Small internally-trained model, just capable enough to show a positive
/// approximation floor in the error decomposition.
fn quick_train(seed: u64) -> Result<(VelocityModel, PriorKind, data::Sample)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = TaskSampler::default();
    let tasks: Vec<_> = (0..512)
        .map(|i| {
            let shape = if i % 2 == 0 {
                ToyShape::StarPatrol
            } else {
                ToyShape::Figure8
            };
            sampler.sample(shape, &mut rng)
        })
        .collect();
    let samples = generate_dataset(512, &tasks, 8, &mut rng)?;
    let pairs = samples
        .iter()
        .map(|s| Ok((s.trajectory.clone(), data::context_of(&s.task, 8, false)?)))
        .collect::<rsbm_core::Result<Vec<_>>>()?;
    let bridge = BridgeConfig::default();
    let prior = PriorKind::PerturbedGt { scale: 1.0 };
    let arch = ModelArch::new(8, vec![64, 64], data::CONTEXT_DIM, 16)?;
    let model = VelocityModel::new(arch, bridge, PredictionTarget::Velocity, &mut rng);
    let mut state = TrainState::new(model, 2e-3, 32);
    rsbm_core::model::train(&mut state, &pairs, &prior, 30, &mut rng)?;
    Ok((state.model, prior, samples[0].clone()))
}

pub fn run(args: VerifyArgs) -> Result<i32> {
    let options = OracleOptions {
        seed: args.seed,
        mc_draws: args.mc_draws,
        perturb_kernel: args.perturb_kernel,
    };

    let trained = if args.skip_trained {
        None
    } else {
        Some(quick_train(args.seed.wrapping_add(7))?)
    };
    let episode = trained.as_ref().map(|(model, prior, sample)| {
        let context = data::context_of(&sample.task, 8, false).expect("valid task");
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(11));
        let a_terminal =
            prior::sample_prior(prior, &context, Some(&sample.trajectory), &mut rng)
                .expect("prior draw");
        (model, context, a_terminal, sample.trajectory.clone())
    });
    let field = episode.as_ref().map(|(model, context, a_terminal, _)| ModelField {
        model,
        context,
        a_terminal,
    });
    let check = match (&field, &episode) {
        (Some(f), Some((_, _, a_terminal, a0))) => Some(TrainedCheck {
            field: f,
            a0,
            a_terminal,
        }),
        _ => None,
    };

    let report = oracle::run_all(&options, check.as_ref());
    for r in &report.results {
        println!(
            "[{}] {}: measured={:.6e} expected={:.6e} tol={:.1e}",
            if r.pass { "PASS" } else { "FAIL" },
            r.check,
            r.measured,
            r.expected,
            r.tolerance
        );
    }
    println!(
        "verification: {} ({}/{} checks passed)",
        if report.pass { "PASS" } else { "FAIL" },
        report.results.iter().filter(|r| r.pass).count(),
        report.results.len()
    );
    if let Some(path) = &args.json {
        fs::write(path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        println!("report: {}", path.display());
    }
    Ok(if report.pass { 0 } else { 1 })
}
