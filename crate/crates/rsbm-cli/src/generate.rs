//! `rsbm generate` — synthetic dataset creation.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsbm_core::data::{generate_dataset, write_csv, TaskSampler, ToyShape, ToyTask};

#[derive(Args)]
pub struct GenerateArgs {
    /// Number of samples to generate.
    #[arg(long)]
    pub n: usize,
    /// Comma-separated shape classes to cycle through.
    #[arg(long, default_value = "star,figure8")]
    pub shapes: String,
    /// Waypoints per trajectory.
    #[arg(long, default_value_t = 8)]
    pub horizon: usize,
    /// Waypoint jitter standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: GenerateArgs) -> Result<i32> {
    if args.n == 0 {
        bail!("--n must be at least 1");
    }
    let shapes = args
        .shapes
        .split(',')
        .map(|s| ToyShape::parse(s.trim()).map_err(anyhow::Error::from))
        .collect::<Result<Vec<_>>>()?;
    if shapes.is_empty() {
        bail!("--shapes must name at least one class");
    }
    let sampler = TaskSampler {
        noise: args.noise,
        ..TaskSampler::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    // one task per sample: continuous pose variation across the dataset
    let tasks: Vec<ToyTask> = (0..args.n)
        .map(|i| sampler.sample(shapes[i % shapes.len()], &mut rng))
        .collect();
    let samples = generate_dataset(args.n, &tasks, args.horizon, &mut rng)?;
    write_csv(&args.out, &samples)
        .with_context(|| format!("writing dataset {}", args.out.display()))?;
    println!("wrote {} samples to {}", samples.len(), args.out.display());
    Ok(0)
}
