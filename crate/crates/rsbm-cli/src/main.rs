//! `rsbm` — command-line pipeline for rectified-bridge trajectory
//! generation: toy-data generation, prior/velocity training, few-step
//! sampling, ablation sweeps, and numerical verification.
//!
//! Every subcommand accepts `--seed` and is bit-reproducible given it.
//! Configuration precedence for training: CLI flags > `--config` TOML file >
//! built-in defaults.

mod ablate;
mod config;
mod generate;
mod pipeline;
mod sample;
mod train;
mod verify;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "rsbm",
    about = "Rectified bridge matching: conditional trajectory generation at desk scale",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic trajectory dataset (CSV).
    Generate(generate::GenerateArgs),
    /// Train the prior (if learned) and the velocity model; write checkpoints
    /// and a loss trace.
    Train(train::TrainArgs),
    /// Sample trajectories with the few-step ODE solver and report metrics.
    Sample(sample::SampleArgs),
    /// Run an ablation sweep (epsilon | target | solver | prior) across seeds.
    Ablate(ablate::AblateArgs),
    /// Run the numerical verification suite; exit nonzero on any failure.
    Verify(verify::VerifyArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Generate(args) => generate::run(args),
        Command::Train(args) => train::run(args),
        Command::Sample(args) => sample::run(args),
        Command::Ablate(args) => ablate::run(args),
        Command::Verify(args) => verify::run(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}
