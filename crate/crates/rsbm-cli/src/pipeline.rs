//! Shared train/evaluate plumbing used by `train`, `sample`, and `ablate`.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rand_chacha::ChaCha8Rng;
use rsbm_core::bridge::Trajectory;
use rsbm_core::data::{self, Sample};
use rsbm_core::metrics::EvalReport;
use rsbm_core::model::{
    self, ContextVector, ModelArch, PredictionTarget, TrainState, VelocityModel,
};
use rsbm_core::prior::{self, LearnedPrior, PriorKind, PriorTrainOptions};
use rsbm_core::sampler::{self, ModelField, SamplerConfig, Solver};
use rsbm_core::schedule::{karras_schedule, DEFAULT_RHO};
use rsbm_core::BridgeConfig;

use crate::config::TrainConfig;

/// Dataset rows plus the conditioning vectors derived from them.
pub struct LoadedData {
    pub samples: Vec<Sample>,
    pub pairs: Vec<(Trajectory, ContextVector)>,
    pub horizon: usize,
}

pub fn load_dataset(path: &Path, hide_phase: bool) -> Result<LoadedData> {
    let samples =
        data::read_csv(path).with_context(|| format!("loading dataset {}", path.display()))?;
    let horizon = samples[0].trajectory.horizon();
    let pairs = samples
        .iter()
        .map(|s| {
            Ok((
                s.trajectory.clone(),
                data::context_of(&s.task, horizon, hide_phase)?,
            ))
        })
        .collect::<rsbm_core::Result<Vec<_>>>()?;
    Ok(LoadedData {
        samples,
        pairs,
        horizon,
    })
}

pub struct TrainedArtifacts {
    pub model: VelocityModel,
    pub prior: PriorKind,
    pub loss_trace: Vec<f64>,
    pub prior_trace: Vec<f64>,
}

/// Two-phase training: fit the prior first (when learned), then regress the
/// velocity field with flow matching.
pub fn train_pipeline(
    data: &LoadedData,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainedArtifacts> {
    let bridge = BridgeConfig::new(cfg.sigma_max, cfg.sigma_min, cfg.epsilon)?;
    let target = PredictionTarget::parse(&cfg.target)?;

    let mut prior_trace = Vec::new();
    let prior = match cfg.prior.as_str() {
        "gaussian" => PriorKind::Gaussian {
            scale: cfg.sigma_max,
            horizon: data.horizon,
        },
        "perturbed" | "perturbed_gt" => PriorKind::PerturbedGt { scale: 1.0 },
        "learned" => {
            let mut learned = LearnedPrior::new(data::CONTEXT_DIM, data.horizon, rng);
            prior_trace = prior::train_prior(
                &mut learned,
                &data.pairs,
                cfg.prior_epochs,
                PriorTrainOptions {
                    learning_rate: cfg.prior_lr,
                    ..PriorTrainOptions::default()
                },
                rng,
            )?;
            PriorKind::Learned(learned)
        }
        other => bail!("unknown prior '{other}' (expected gaussian | perturbed | learned)"),
    };

    let arch = ModelArch::default_for(data.horizon, data::CONTEXT_DIM);
    let model = VelocityModel::new(arch, bridge, target, rng);
    let mut state = TrainState::new(model, cfg.lr, cfg.batch);
    let loss_trace = model::train(&mut state, &data.pairs, &prior, cfg.epochs, rng)?;
    Ok(TrainedArtifacts {
        model: state.model,
        prior,
        loss_trace,
        prior_trace,
    })
}

/// Open-loop evaluation: one prior draw per episode, few-step integration,
/// metrics against the ground truth.
pub struct Evaluation {
    pub report: EvalReport,
    /// `(prediction, ground truth)` in dataset order.
    pub pairs: Vec<(Trajectory, Trajectory)>,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model: &VelocityModel,
    prior: &PriorKind,
    data: &LoadedData,
    hide_phase: bool,
    solver: Solver,
    k: usize,
    n_eval: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Evaluation> {
    let schedule = karras_schedule(k, model.bridge(), DEFAULT_RHO)?;
    let sampler_cfg = SamplerConfig::new(solver, schedule);
    let expected_nfe = sampler::nfe_of(solver, k);
    let n = n_eval.min(data.samples.len());
    if n == 0 {
        bail!("evaluation set is empty");
    }
    let mut pairs = Vec::with_capacity(n);
    for s in data.samples.iter().take(n) {
        let context = data::context_of(&s.task, data.horizon, hide_phase)?;
        let a_terminal = prior::sample_prior(prior, &context, Some(&s.trajectory), rng)?;
        let field = ModelField {
            model,
            context: &context,
            a_terminal: &a_terminal,
        };
        let out = sampler::integrate(&field, &a_terminal, &sampler_cfg)?;
        if out.nfe != expected_nfe {
            bail!("NFE accounting drifted: {} vs {expected_nfe}", out.nfe);
        }
        pairs.push((out.a0_hat, s.trajectory.clone()));
    }
    let report = EvalReport::from_pairs(&pairs, expected_nfe)?;
    Ok(Evaluation { report, pairs })
}

/// Degenerate "no bridge" evaluation: the prior draw is the prediction.
pub fn evaluate_prior_only(
    prior: &PriorKind,
    data: &LoadedData,
    hide_phase: bool,
    n_eval: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Evaluation> {
    let n = n_eval.min(data.samples.len());
    if n == 0 {
        bail!("evaluation set is empty");
    }
    let mut pairs = Vec::with_capacity(n);
    for s in data.samples.iter().take(n) {
        let context = data::context_of(&s.task, data.horizon, hide_phase)?;
        let a_terminal = prior::sample_prior(prior, &context, Some(&s.trajectory), rng)?;
        pairs.push((a_terminal, s.trajectory.clone()));
    }
    let report = EvalReport::from_pairs(&pairs, 0)?;
    Ok(Evaluation { report, pairs })
}

/// Writes predictions next to their ground truth, one episode per row.
pub fn write_predictions_csv(path: &Path, pairs: &[(Trajectory, Trajectory)]) -> Result<()> {
    let horizon = pairs
        .first()
        .ok_or_else(|| anyhow!("no predictions to write"))?
        .0
        .horizon();
    let mut out = String::from("index");
    for i in 0..horizon {
        out.push_str(&format!(",pred_x{i},pred_y{i}"));
    }
    for i in 0..horizon {
        out.push_str(&format!(",gt_x{i},gt_y{i}"));
    }
    out.push('\n');
    for (index, (pred, gt)) in pairs.iter().enumerate() {
        out.push_str(&index.to_string());
        for v in pred.flat().iter().chain(gt.flat()) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
