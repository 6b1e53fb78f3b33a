//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Criteria 1–6, 8, 9 are exact analytic or measured-convergence checks.
//! Criterion 7 trains the desk-scale configurations (five configs × three
//! seeds, cached across its sub-criteria) and checks ordering-level
//! reproduction of the ablation structure.

use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rsbm_core::bridge::{
    self, bridge_std, kl_rectified, sample_bridge_with_noise, BridgeConfig, Trajectory,
};
use rsbm_core::data::{context_of, generate_dataset, Sample, TaskSampler, ToyShape, CONTEXT_DIM};
use rsbm_core::metrics::EvalReport;
use rsbm_core::model::{
    cfm_loss_and_grad_at, to_velocity, ContextVector, ModelArch, PredictionTarget, TrainState,
    TrainingExample, VelocityModel,
};
use rsbm_core::oracle;
use rsbm_core::prior::{sample_prior, train_prior, LearnedPrior, PriorKind, PriorTrainOptions};
use rsbm_core::sampler::{integrate, nfe_of, ModelField, SamplerConfig, Solver, VelocityField};
use rsbm_core::schedule::{karras_schedule, sample_training_time};

fn report_line(criterion: &str, pass: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion} [{}]: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn assert_all(criterion: &str, results: &[oracle::CheckResult], detail: &str) {
    let pass = results.iter().all(|r| r.pass);
    report_line(criterion, pass, detail);
    for r in results {
        assert!(
            r.pass,
            "{criterion}: {} measured {:.6e}, expected {:.6e} ± {:.1e}",
            r.check, r.measured, r.expected, r.tolerance
        );
    }
}

#[test]
fn criterion_1_epsilon_invariance() {
    let start = Instant::now();
    let cfg = BridgeConfig::default();
    let results = oracle::check_epsilon_invariance(&cfg, &[0.01, 0.1, 0.5, 1.0], 100, 0.0);
    let elapsed = start.elapsed();
    assert_all(
        "1 (velocity-structure invariance)",
        &results,
        &format!(
            "dlogσ/dt spread across ε < 1e-12 on a 100-point grid ({elapsed:?})"
        ),
    );
    assert!(elapsed.as_secs_f64() < 1.0, "runtime {elapsed:?} exceeds 1 s");
}

#[test]
fn criterion_2_velocity_variance_monte_carlo() {
    let start = Instant::now();
    let cfg = BridgeConfig::default();
    let results = oracle::check_velocity_variance_mc(&cfg, &[0.1, 0.25, 0.75], &[0.25, 0.5, 1.0], 100_000, 1);
    let elapsed = start.elapsed();
    assert_all(
        "2 (velocity-variance law)",
        &results,
        &format!(
            "MC variance matches ε(1−2s)²/(1−s) within 3% at 1e5 draws; ε-ratio 0.5 within 3% ({elapsed:?})"
        ),
    );
    assert!(elapsed.as_secs_f64() < 10.0, "runtime {elapsed:?} exceeds 10 s");
}

#[test]
fn criterion_3_kl_closed_form() {
    let results = oracle::check_kl(&[1.0, 0.5, 0.25, 0.1], &[2, 8, 16]);
    // pinned headline value and tolerance
    let value = kl_rectified(0.5f64, 16).unwrap();
    assert!(
        (value - 1.545).abs() <= 0.01,
        "kl(0.5, 16) = {value}, expected 1.545 ± 0.01"
    );
    assert_all(
        "3 (rectification KL)",
        &results,
        &format!("kl(0.5, 16) = {value:.6}; matches diagonal-Gaussian reference to 1e-10; monotone as ε → 0"),
    );
}

#[test]
fn criterion_4_boundary_pinning() {
    // exact zeros at both endpoints for every tested ε
    for eps in [0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9, 1.0] {
        let cfg = BridgeConfig::new(10.0, 0.002, eps).unwrap();
        assert_eq!(bridge_std(0.0, &cfg).unwrap(), 0.0, "σ(0) ≠ 0 at ε={eps}");
        assert_eq!(
            bridge_std(cfg.sigma_max, &cfg).unwrap(),
            0.0,
            "σ(σ_max) ≠ 0 at ε={eps}"
        );
    }
    // sampled state at t = σ_min stays within 6σ of a_0 component-wise
    let cfg = BridgeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a0 = Trajectory::constant(8, 1.0);
    let a_terminal = Trajectory::constant(8, -9.0);
    let bound = 6.0 * bridge_std(cfg.sigma_min, &cfg).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let s = bridge::sample_bridge(&a0, &a_terminal, cfg.sigma_min, &cfg, &mut rng).unwrap();
        worst = worst.max(s.a_t.linf_distance(&a0).unwrap());
    }
    let pass = worst <= bound;
    report_line(
        "4 (boundary pinning)",
        pass,
        &format!("σ pinned exactly at both ends; max |a_t − a_0|∞ = {worst:.6} ≤ 6σ(σ_min) = {bound:.6} over 1e4 draws"),
    );
    assert!(pass, "deviation {worst} exceeds {bound}");
}

#[test]
fn criterion_5_solver_orders() {
    let start = Instant::now();
    let cfg = BridgeConfig::default();
    let results = oracle::check_solver_orders(&cfg, 2);
    let elapsed = start.elapsed();
    assert_all(
        "5 (solver order structure)",
        &results,
        &format!("Heun slope 2 ± 0.3, Euler slope 1 ± 0.3, Heun(k=3) ≤ Euler(k=5) at NFE 5 ({elapsed:?})"),
    );
    assert!(elapsed.as_secs_f64() < 30.0, "runtime {elapsed:?} exceeds 30 s");
}

#[test]
fn criterion_6_nfe_accounting() {
    let cfg = BridgeConfig::default();
    let a_terminal = Trajectory::constant(8, 1.0);
    // instrumented counter: wrap a field that counts its own invocations
    use std::sync::atomic::{AtomicUsize, Ordering};
    struct Counting(AtomicUsize);
    impl VelocityField<f64> for Counting {
        fn velocity(&self, state: &Trajectory, _t: f64) -> rsbm_core::Result<Trajectory> {
            self.0.fetch_add(1, Ordering::Relaxed);
            Ok(Trajectory::zeros(state.horizon()))
        }
    }
    for k in [1usize, 3, 5, 10] {
        for solver in [Solver::Heun, Solver::Euler] {
            let field = Counting(AtomicUsize::new(0));
            let sc = SamplerConfig::new(solver, karras_schedule(k, &cfg, 7.0).unwrap());
            let out = integrate(&field, &a_terminal, &sc).unwrap();
            let counted = field.0.load(Ordering::Relaxed);
            assert_eq!(out.nfe, counted, "reported NFE differs from invocations");
            assert_eq!(counted, nfe_of(solver, k), "{solver} k={k}");
        }
    }
    assert_eq!(nfe_of(Solver::Heun, 3), 5);
    assert_eq!(nfe_of(Solver::Heun, 10), 19);
    report_line(
        "6 (NFE accounting)",
        true,
        "instrumented counter equals 2k−1 (Heun) and k (Euler) for k ∈ {1,3,5,10}; k=3 → 5, k=10 → 19",
    );
}

// ---------------------------------------------------------------------------
// Criterion 7: desk-scale training orderings (shared trained configurations)
// ---------------------------------------------------------------------------

const TRAIN_N: usize = 2000;
const EVAL_N: usize = 200;
const HORIZON: usize = 8;
const HIDE_PHASE: bool = true;
const VELOCITY_EPOCHS: usize = 60;
const VELOCITY_LR: f64 = 1e-3;
const VELOCITY_BATCH: usize = 64;
const PRIOR_EPOCHS: usize = 100;
const SEEDS: [u64; 3] = [0, 1, 2];

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
enum Config7 {
    Full,      // ε = 0.5, v-prediction, learned prior
    StdSb,     // ε = 1.0, v-prediction, learned prior
    X0Pred,    // ε = 0.5, x0-prediction, learned prior
    EpsPred,   // ε = 0.5, eps-prediction, learned prior
    GaussStd,  // ε = 1.0, v-prediction, Gaussian prior
}

impl Config7 {
    fn all() -> [Config7; 5] {
        [
            Config7::Full,
            Config7::StdSb,
            Config7::X0Pred,
            Config7::EpsPred,
            Config7::GaussStd,
        ]
    }

    fn epsilon(self) -> f64 {
        match self {
            Config7::StdSb | Config7::GaussStd => 1.0,
            _ => 0.5,
        }
    }

    fn target(self) -> PredictionTarget {
        match self {
            Config7::X0Pred => PredictionTarget::DataEndpoint,
            Config7::EpsPred => PredictionTarget::Noise,
            _ => PredictionTarget::Velocity,
        }
    }

    fn gaussian_prior(self) -> bool {
        matches!(self, Config7::GaussStd)
    }
}

struct Cell {
    config: Config7,
    seed: u64,
    mse_k3: f64,
    cos_k3: f64,
    mse_k10: f64,
}

fn toy_dataset(seed: u64, n: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = TaskSampler::default();
    let tasks: Vec<_> = (0..n)
        .map(|i| {
            let shape = if i % 2 == 0 {
                ToyShape::StarPatrol
            } else {
                ToyShape::Figure8
            };
            sampler.sample(shape, &mut rng)
        })
        .collect();
    generate_dataset(n, &tasks, HORIZON, &mut rng).unwrap()
}

fn run_cell(config: Config7, seed: u64, train: &[Sample], eval: &[Sample]) -> Cell {
    let bridge = BridgeConfig::new(10.0, 0.002, config.epsilon()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9000 + seed * 131 + config as u64 * 17);
    let pairs: Vec<(Trajectory, ContextVector)> = train
        .iter()
        .map(|s| {
            (
                s.trajectory.clone(),
                context_of(&s.task, HORIZON, HIDE_PHASE).unwrap(),
            )
        })
        .collect();
    let prior = if config.gaussian_prior() {
        PriorKind::Gaussian {
            scale: bridge.sigma_max,
            horizon: HORIZON,
        }
    } else {
        let mut learned = LearnedPrior::new(CONTEXT_DIM, HORIZON, &mut rng);
        train_prior(
            &mut learned,
            &pairs,
            PRIOR_EPOCHS,
            PriorTrainOptions::default(),
            &mut rng,
        )
        .unwrap();
        PriorKind::Learned(learned)
    };
    let arch = ModelArch::default_for(HORIZON, CONTEXT_DIM);
    let model = VelocityModel::new(arch, bridge, config.target(), &mut rng);
    let mut state = TrainState::new(model, VELOCITY_LR, VELOCITY_BATCH);
    rsbm_core::model::train(&mut state, &pairs, &prior, VELOCITY_EPOCHS, &mut rng).unwrap();

    let evaluate = |k: usize| -> EvalReport {
        let schedule = karras_schedule(k, &bridge, 7.0).unwrap();
        let sc = SamplerConfig::new(Solver::Heun, schedule);
        let mut eval_rng = ChaCha8Rng::seed_from_u64(7700 + seed);
        let mut pairs = Vec::with_capacity(eval.len());
        for s in eval {
            let context = context_of(&s.task, HORIZON, HIDE_PHASE).unwrap();
            let a_terminal =
                sample_prior(&prior, &context, Some(&s.trajectory), &mut eval_rng).unwrap();
            let field = ModelField {
                model: &state.model,
                context: &context,
                a_terminal: &a_terminal,
            };
            let out = integrate(&field, &a_terminal, &sc).unwrap();
            pairs.push((out.a0_hat, s.trajectory.clone()));
        }
        EvalReport::from_pairs(&pairs, nfe_of(Solver::Heun, k)).unwrap()
    };
    let k3 = evaluate(3);
    let k10 = evaluate(10);
    Cell {
        config,
        seed,
        mse_k3: k3.mse,
        cos_k3: k3.cos_sim,
        mse_k10: k10.mse,
    }
}

fn criterion7_cells() -> &'static Vec<Cell> {
    static CELLS: OnceLock<Vec<Cell>> = OnceLock::new();
    CELLS.get_or_init(|| {
        let train = toy_dataset(1234, TRAIN_N);
        let eval = toy_dataset(4321, EVAL_N);
        let jobs: Vec<(Config7, u64)> = Config7::all()
            .into_iter()
            .flat_map(|c| SEEDS.map(|s| (c, s)))
            .collect();
        jobs.par_iter()
            .map(|&(config, seed)| run_cell(config, seed, &train, &eval))
            .collect()
    })
}

fn cell(config: Config7, seed: u64) -> &'static Cell {
    criterion7_cells()
        .iter()
        .find(|c| c.config == config && c.seed == seed)
        .expect("cell computed")
}

#[test]
fn criterion_7a_epsilon_ordering() {
    let mut wins = 0;
    let mut detail = String::new();
    for seed in SEEDS {
        let full = cell(Config7::Full, seed);
        let std_sb = cell(Config7::StdSb, seed);
        let win = full.mse_k3 < std_sb.mse_k3 && full.cos_k3 > std_sb.cos_k3;
        wins += win as u32;
        detail.push_str(&format!(
            "seed {seed}: ε=0.5 mse {:.4}/cos {:.4} vs ε=1.0 mse {:.4}/cos {:.4}; ",
            full.mse_k3, full.cos_k3, std_sb.mse_k3, std_sb.cos_k3
        ));
    }
    let pass = wins >= 2;
    report_line(
        "7a (ε ordering at k=3)",
        pass,
        &format!("{wins}/3 seeds — {detail}"),
    );
    assert!(pass, "ε = 0.5 beat ε = 1.0 on only {wins}/3 seeds: {detail}");
}

#[test]
fn criterion_7b_prediction_target_ordering() {
    let mut wins = 0;
    let mut detail = String::new();
    for seed in SEEDS {
        let v = cell(Config7::Full, seed).mse_k3;
        let x0 = cell(Config7::X0Pred, seed).mse_k3;
        let eps = cell(Config7::EpsPred, seed).mse_k3;
        let win = v <= x0 && x0 <= eps;
        wins += win as u32;
        detail.push_str(&format!("seed {seed}: v {v:.4}, x0 {x0:.4}, eps {eps:.4}; "));
    }
    let pass = wins >= 2;
    report_line(
        "7b (prediction-target ordering at k=3)",
        pass,
        &format!("{wins}/3 seeds — {detail}"),
    );
    assert!(
        pass,
        "v ≤ x0 ≤ eps held on only {wins}/3 seeds: {detail}. Measured desk-scale behavior: \
         the x0 head feeds the analytic affine conversion, which supplies the exact transport \
         scaffold and bounds the learned component, so endpoint prediction dominates at k=3 on \
         this toy (its context pins the endpoint far more tightly than a vision bottleneck); \
         the published target ordering does not transfer. See the decisions ledger."
    );
}

#[test]
fn criterion_7c_prior_ordering() {
    let mut wins = 0;
    let mut detail = String::new();
    for seed in SEEDS {
        let full = cell(Config7::Full, seed).mse_k3;
        let gauss = cell(Config7::GaussStd, seed).mse_k3;
        let win = full < gauss;
        wins += win as u32;
        detail.push_str(&format!(
            "seed {seed}: learned+ε0.5 {full:.4} vs gaussian+ε1.0 {gauss:.4}; "
        ));
    }
    let pass = wins == 3;
    report_line(
        "7c (prior ordering at k=3)",
        pass,
        &format!("{wins}/3 seeds — {detail}"),
    );
    assert!(pass, "learned prior + ε=0.5 lost on a seed: {detail}");
}

#[test]
fn criterion_7d_step_count_saturation() {
    let m3: f64 = SEEDS.iter().map(|&s| cell(Config7::Full, s).mse_k3).sum::<f64>() / 3.0;
    let m10: f64 = SEEDS.iter().map(|&s| cell(Config7::Full, s).mse_k10).sum::<f64>() / 3.0;
    let improvement = (m3 - m10) / m3;
    let pass = improvement < 0.25;
    report_line(
        "7d (early saturation, k=10 vs k=3)",
        pass,
        &format!("mean MSE k=3 {m3:.4}, k=10 {m10:.4}, improvement {:.1}%", 100.0 * improvement),
    );
    assert!(
        pass,
        "k=10 improved over k=3 by {:.1}% (criterion: < 25%). Measured desk-scale behavior: \
         the exact marginal flow of this bridge is affine in the state and integrates to \
         machine precision even at k=3, so the entire k=3 error is network extrapolation at \
         the Heun predictor's off-tube states; at k=10 every evaluation stays inside the \
         trained tube and the model reaches the task floor. The saturation direction of the \
         published step-count table needs the k=3 walk to sit on the same floor, which an \
         honestly trained velocity head does not reach at desk scale. See the decisions \
         ledger.",
        100.0 * improvement
    );
}

// ---------------------------------------------------------------------------
// Criteria 8 and 9
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_target_conversion_round_trips() {
    let base = BridgeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let eps = 0.05 + 0.95 * rng.random::<f64>();
        let cfg = base.with_epsilon(eps).unwrap();
        let a0 = Trajectory::from_flat((0..16).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect())
            .unwrap();
        let a_terminal =
            Trajectory::from_flat((0..16).map(|_| 6.0 * rng.random::<f64>() - 3.0).collect())
                .unwrap();
        let t = sample_training_time(&mut rng, &cfg);
        let noise: Vec<f64> = (0..16)
            .map(|_| {
                <rand_distr::StandardNormal as rand_distr::Distribution<f64>>::sample(
                    &rand_distr::StandardNormal,
                    &mut rng,
                )
            })
            .collect();
        let sample = sample_bridge_with_noise(&a0, &a_terminal, t, &cfg, noise.clone()).unwrap();
        let truth = bridge::target_velocity(&sample, &a0, &a_terminal, &cfg).unwrap();
        let via_eps = to_velocity(
            &noise,
            &sample.a_t,
            &a_terminal,
            t,
            &cfg,
            PredictionTarget::Noise,
        )
        .unwrap();
        let via_x0 = to_velocity(
            a0.flat(),
            &sample.a_t,
            &a_terminal,
            t,
            &cfg,
            PredictionTarget::DataEndpoint,
        )
        .unwrap();
        worst = worst.max(via_eps.linf_distance(&truth).unwrap());
        worst = worst.max(via_x0.linf_distance(&truth).unwrap());
    }
    let pass = worst < 1e-10;
    report_line(
        "8 (target-conversion round trips)",
        pass,
        &format!("worst deviation from the analytic velocity over 1000 cases: {worst:.3e}"),
    );
    assert!(pass, "round-trip error {worst} ≥ 1e-10");
}

#[test]
fn criterion_9_gradient_check() {
    let arch = ModelArch::new(2, vec![6], 3, 4).unwrap();
    let cfg = BridgeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut model = VelocityModel::new(arch, cfg, PredictionTarget::Velocity, &mut rng);
    let params: Vec<f64> = (0..model.num_params())
        .map(|_| 0.4 * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    model.set_params(params).unwrap();
    let batch: Vec<TrainingExample> = (0..3)
        .map(|_| {
            let a0 = Trajectory::from_flat((0..4).map(|_| rng.random::<f64>()).collect()).unwrap();
            let a_terminal =
                Trajectory::from_flat((0..4).map(|_| 2.0 * rng.random::<f64>()).collect())
                    .unwrap();
            let context =
                ContextVector::new((0..3).map(|_| rng.random::<f64>()).collect()).unwrap();
            let t = sample_training_time(&mut rng, &cfg);
            let noise: Vec<f64> = (0..4)
                .map(|_| {
                    <rand_distr::StandardNormal as rand_distr::Distribution<f64>>::sample(
                        &rand_distr::StandardNormal,
                        &mut rng,
                    )
                })
                .collect();
            let sample = sample_bridge_with_noise(&a0, &a_terminal, t, &cfg, noise).unwrap();
            TrainingExample {
                a0,
                a_terminal,
                context,
                sample,
            }
        })
        .collect();
    let (_, grad) = cfm_loss_and_grad_at(&model, &batch).unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..model.num_params() {
        let mut plus = model.clone();
        let mut p = plus.params().to_vec();
        p[i] += h;
        plus.set_params(p).unwrap();
        let mut minus = model.clone();
        let mut p = minus.params().to_vec();
        p[i] -= h;
        minus.set_params(p).unwrap();
        let (lp, _) = cfm_loss_and_grad_at(&plus, &batch).unwrap();
        let (lm, _) = cfm_loss_and_grad_at(&minus, &batch).unwrap();
        let fd = (lp - lm) / (2.0 * h);
        if grad[i].abs() < 1e-8 && fd.abs() < 1e-8 {
            continue;
        }
        worst = worst.max((grad[i] - fd).abs() / grad[i].abs().max(fd.abs()));
    }
    let pass = worst < 1e-3;
    report_line(
        "9 (gradient check)",
        pass,
        &format!("worst relative error vs central differences: {worst:.3e}"),
    );
    assert!(pass, "gradient error {worst} ≥ 1e-3");
}
