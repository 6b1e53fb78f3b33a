//! Terminal boundary-condition generators.
//!
//! Three prior families cover the initialization ablation:
//!
//! - `gaussian` — isotropic `N(0, scale² I)` noise reshaped to a trajectory;
//! - `perturbed_gt` — the ground truth plus isotropic jitter (training-style
//!   usage; needs `a_0`);
//! - `learned` — a small conditional VAE: an encoder maps `(c, a_0)` to a
//!   diagonal Gaussian over an 8-dimensional latent, a decoder maps `(c, z)`
//!   to a trajectory. Test-time draws use `z ~ N(0, I)`; training-style draws
//!   use the posterior.
//!
//! The VAE trains on reconstruction MSE plus `β·KL(q(z|c,a_0) ‖ N(0,I))`
//! with `β = 0.1`, chosen so the prior keeps enough latent stochasticity for
//! multimodal generation without collapsing.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bridge::Trajectory;
use crate::error::{Error, Result};
use crate::model::{AdamW, ContextVector, TerminalSampler};

/// ELBO KL weight.
pub const DEFAULT_BETA: f64 = 0.1;

fn standard_normal<G: RngCore + ?Sized>(rng: &mut G) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// `scale · noise` reshaped to `H × 2`; the deterministic core of the
/// Gaussian prior.
pub(crate) fn gaussian_trajectory(scale: f64, noise: &[f64]) -> Result<Trajectory> {
    Trajectory::from_flat(noise.iter().map(|&z| scale * z).collect())
}

/// Plain linear-silu-linear block operating on a slice of a flat parameter
/// vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Mlp2 {
    n_in: usize,
    n_hidden: usize,
    n_out: usize,
}

struct Mlp2Cache {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    out: Vec<f64>,
}

impl Mlp2 {
    fn param_count(&self) -> usize {
        self.n_hidden * self.n_in + self.n_hidden + self.n_out * self.n_hidden + self.n_out
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let w1 = 0;
        let b1 = w1 + self.n_hidden * self.n_in;
        let w2 = b1 + self.n_hidden;
        let b2 = w2 + self.n_out * self.n_hidden;
        (w1, b1, w2, b2)
    }

    /// Fan-in uniform first layer, zero output layer.
    fn init<G: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut G) {
        let (w1, b1, _, _) = self.offsets();
        let bound = 1.0 / (self.n_in as f64).sqrt();
        for p in params[w1..b1].iter_mut() {
            *p = bound * (2.0 * rng.random::<f64>() - 1.0);
        }
    }

    fn forward(&self, params: &[f64], input: &[f64]) -> Mlp2Cache {
        let (w1, b1, w2, b2) = self.offsets();
        let mut pre = vec![0.0; self.n_hidden];
        for i in 0..self.n_hidden {
            let mut acc = params[b1 + i];
            let base = w1 + i * self.n_in;
            for (j, &x) in input.iter().enumerate() {
                acc += params[base + j] * x;
            }
            pre[i] = acc;
        }
        let hidden: Vec<f64> = pre.iter().map(|&x| x * sigmoid(x)).collect();
        let mut out = vec![0.0; self.n_out];
        for i in 0..self.n_out {
            let mut acc = params[b2 + i];
            let base = w2 + i * self.n_hidden;
            for (j, &h) in hidden.iter().enumerate() {
                acc += params[base + j] * h;
            }
            out[i] = acc;
        }
        Mlp2Cache {
            input: input.to_vec(),
            pre,
            hidden,
            out,
        }
    }

    /// Accumulates parameter gradients and returns `∂L/∂input`.
    fn backward(
        &self,
        params: &[f64],
        cache: &Mlp2Cache,
        dout: &[f64],
        grad: &mut [f64],
    ) -> Vec<f64> {
        let (w1, b1, w2, b2) = self.offsets();
        let mut dhidden = vec![0.0; self.n_hidden];
        for (i, &d) in dout.iter().enumerate() {
            let base = w2 + i * self.n_hidden;
            for (j, &h) in cache.hidden.iter().enumerate() {
                grad[base + j] += d * h;
                dhidden[j] += params[base + j] * d;
            }
            grad[b2 + i] += d;
        }
        let mut dinput = vec![0.0; self.n_in];
        for i in 0..self.n_hidden {
            let s = sigmoid(cache.pre[i]);
            let dpre = dhidden[i] * (s + cache.pre[i] * s * (1.0 - s));
            let base = w1 + i * self.n_in;
            for (j, &x) in cache.input.iter().enumerate() {
                grad[base + j] += dpre * x;
                dinput[j] += params[base + j] * dpre;
            }
            grad[b1 + i] += dpre;
        }
        dinput
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Small conditional VAE prior: encoder `(c, a_0) → (μ_z, log σ_z²)`,
/// decoder `(c, z) → trajectory`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedPrior {
    context_dim: usize,
    horizon: usize,
    latent_dim: usize,
    hidden_dim: usize,
    encoder: Mlp2,
    decoder: Mlp2,
    params: Vec<f64>,
}

impl LearnedPrior {
    pub fn new<G: Rng + ?Sized>(context_dim: usize, horizon: usize, rng: &mut G) -> Self {
        Self::with_dims(context_dim, horizon, 8, 64, rng)
    }

    pub fn with_dims<G: Rng + ?Sized>(
        context_dim: usize,
        horizon: usize,
        latent_dim: usize,
        hidden_dim: usize,
        rng: &mut G,
    ) -> Self {
        let d = 2 * horizon;
        let encoder = Mlp2 {
            n_in: context_dim + d,
            n_hidden: hidden_dim,
            n_out: 2 * latent_dim,
        };
        let decoder = Mlp2 {
            n_in: context_dim + latent_dim,
            n_hidden: hidden_dim,
            n_out: d,
        };
        let mut params = vec![0.0; encoder.param_count() + decoder.param_count()];
        let enc_len = encoder.param_count();
        encoder.init(&mut params[..enc_len], rng);
        decoder.init(&mut params[enc_len..], rng);
        Self {
            context_dim,
            horizon,
            latent_dim,
            hidden_dim,
            encoder,
            decoder,
            params,
        }
    }

    pub fn context_dim(&self) -> usize {
        self.context_dim
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn enc_params(&self) -> &[f64] {
        &self.params[..self.encoder.param_count()]
    }

    fn dec_params(&self) -> &[f64] {
        &self.params[self.encoder.param_count()..]
    }

    fn check_context(&self, context: &ContextVector) -> Result<()> {
        if context.dim() != self.context_dim {
            return Err(Error::InvalidConfig(format!(
                "prior expects context dimension {}, got {}",
                self.context_dim,
                context.dim()
            )));
        }
        Ok(())
    }

    /// Posterior parameters `(μ_z, log σ_z²)` for a `(context, a_0)` pair.
    pub fn encode(&self, context: &ContextVector, a0: &Trajectory) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_context(context)?;
        if a0.horizon() != self.horizon {
            return Err(Error::ShapeMismatch {
                left: a0.horizon(),
                right: self.horizon,
            });
        }
        let mut input = context.values().to_vec();
        input.extend_from_slice(a0.flat());
        let cache = self.encoder.forward(self.enc_params(), &input);
        let mu = cache.out[..self.latent_dim].to_vec();
        let logvar = cache.out[self.latent_dim..].to_vec();
        Ok((mu, logvar))
    }

    /// Decodes a latent draw into a trajectory.
    pub fn decode(&self, context: &ContextVector, z: &[f64]) -> Result<Trajectory> {
        self.check_context(context)?;
        if z.len() != self.latent_dim {
            return Err(Error::InvalidConfig(format!(
                "prior expects latent dimension {}, got {}",
                self.latent_dim,
                z.len()
            )));
        }
        let mut input = context.values().to_vec();
        input.extend_from_slice(z);
        let cache = self.decoder.forward(self.dec_params(), &input);
        Trajectory::from_flat(cache.out)
    }

    /// Test-time draw: `z ~ N(0, I)`.
    pub fn sample<G: RngCore + ?Sized>(
        &self,
        context: &ContextVector,
        rng: &mut G,
    ) -> Result<Trajectory> {
        let z: Vec<f64> = (0..self.latent_dim).map(|_| standard_normal(rng)).collect();
        self.decode(context, &z)
    }

    /// Training-style draw: `z ~ q(z | c, a_0)`.
    pub fn posterior_sample<G: RngCore + ?Sized>(
        &self,
        context: &ContextVector,
        a0: &Trajectory,
        rng: &mut G,
    ) -> Result<Trajectory> {
        let (mu, logvar) = self.encode(context, a0)?;
        let z: Vec<f64> = mu
            .iter()
            .zip(&logvar)
            .map(|(&m, &lv)| m + (0.5 * lv).exp() * standard_normal(rng))
            .collect();
        self.decode(context, &z)
    }
}

/// Closed-form KL of a diagonal Gaussian against the standard normal,
/// `½ Σ (μ² + σ² − 1 − log σ²)`; nonnegative term by term.
pub fn diagonal_kl_to_standard(mu: &[f64], logvar: &[f64]) -> f64 {
    mu.iter()
        .zip(logvar)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum()
}

/// ELBO loss and gradient at fixed latent noise draws (one `η` per sample):
/// `mean_components (x̂ − a_0)² + β · KL(q ‖ N(0, I))`, batch-averaged.
fn elbo_loss_and_grad(
    prior: &LearnedPrior,
    batch: &[(&Trajectory, &ContextVector, &[f64])],
    beta: f64,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Dataset("empty prior training batch".into()));
    }
    let n = batch.len() as f64;
    let d = (2 * prior.horizon) as f64;
    let enc_len = prior.encoder.param_count();
    let mut grad = vec![0.0; prior.num_params()];
    let mut loss = 0.0;
    for (a0, context, eta) in batch {
        prior.check_context(context)?;
        let mut enc_in = context.values().to_vec();
        enc_in.extend_from_slice(a0.flat());
        let enc_cache = prior.encoder.forward(prior.enc_params(), &enc_in);
        let (mu, logvar) = enc_cache.out.split_at(prior.latent_dim);
        let sdev: Vec<f64> = logvar.iter().map(|&lv| (0.5 * lv).exp()).collect();
        let z: Vec<f64> = mu
            .iter()
            .zip(&sdev)
            .zip(*eta)
            .map(|((&m, &s), &e)| m + s * e)
            .collect();
        let mut dec_in = context.values().to_vec();
        dec_in.extend_from_slice(&z);
        let dec_cache = prior.decoder.forward(prior.dec_params(), &dec_in);

        // reconstruction term
        let mut dxhat = vec![0.0; dec_cache.out.len()];
        for ((&xh, &x), dv) in dec_cache.out.iter().zip(a0.flat()).zip(dxhat.iter_mut()) {
            let r = xh - x;
            loss += r * r / (d * n);
            *dv = 2.0 * r / (d * n);
        }
        let dec_din = prior
            .decoder
            .backward(prior.dec_params(), &dec_cache, &dxhat, &mut grad[enc_len..]);
        let dz = &dec_din[prior.context_dim..];

        // KL term and reparameterization pull-back
        loss += beta * diagonal_kl_to_standard(mu, logvar) / n;
        let mut denc_out = vec![0.0; 2 * prior.latent_dim];
        for j in 0..prior.latent_dim {
            denc_out[j] = dz[j] + beta * mu[j] / n;
            denc_out[prior.latent_dim + j] =
                dz[j] * eta[j] * 0.5 * sdev[j] + beta * 0.5 * (logvar[j].exp() - 1.0) / n;
        }
        prior
            .encoder
            .backward(prior.enc_params(), &enc_cache, &denc_out, &mut grad[..enc_len]);
    }
    Ok((loss, grad))
}

/// Prior-training hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct PriorTrainOptions {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta: f64,
}

impl Default for PriorTrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            beta: DEFAULT_BETA,
        }
    }
}

/// Trains the VAE prior in place; returns the per-epoch mean ELBO trace.
pub fn train_prior<G: Rng + ?Sized>(
    prior: &mut LearnedPrior,
    dataset: &[(Trajectory, ContextVector)],
    epochs: usize,
    options: PriorTrainOptions,
    rng: &mut G,
) -> Result<Vec<f64>> {
    if dataset.is_empty() {
        return Err(Error::Dataset("empty prior training dataset".into()));
    }
    let mut optimizer = AdamW::new(prior.num_params(), options.learning_rate);
    let mut trace = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..epochs {
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(options.batch_size.max(1)) {
            let etas: Vec<Vec<f64>> = chunk
                .iter()
                .map(|_| (0..prior.latent_dim).map(|_| standard_normal(rng)).collect())
                .collect();
            let batch: Vec<(&Trajectory, &ContextVector, &[f64])> = chunk
                .iter()
                .zip(&etas)
                .map(|(&idx, eta)| (&dataset[idx].0, &dataset[idx].1, eta.as_slice()))
                .collect();
            let (loss, grad) = elbo_loss_and_grad(prior, &batch, options.beta)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step: optimizer.step_count(),
                    epoch,
                    loss,
                });
            }
            optimizer.update(&mut prior.params, &grad);
            epoch_loss += loss;
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    Ok(trace)
}

/// Which terminal-condition family drives the bridge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PriorKind {
    /// Isotropic `N(0, scale² I)`; scale defaults to `σ_max`.
    Gaussian { scale: f64, horizon: usize },
    /// Ground truth plus `N(0, scale² I)` jitter; needs `a_0`.
    PerturbedGt { scale: f64 },
    /// Conditional VAE.
    Learned(LearnedPrior),
}

impl PriorKind {
    pub fn variant_name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::PerturbedGt { .. } => "perturbed",
            Self::Learned(_) => "learned",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { scale, horizon } => {
                if *scale <= 0.0 || *horizon == 0 {
                    return Err(Error::InvalidConfig(
                        "gaussian prior needs positive scale and horizon".into(),
                    ));
                }
            }
            Self::PerturbedGt { scale } => {
                // zero perturbation is the degenerate bridge, explicitly allowed
                if *scale < 0.0 {
                    return Err(Error::InvalidConfig(
                        "perturbation scale must be nonnegative".into(),
                    ));
                }
            }
            Self::Learned(_) => {}
        }
        Ok(())
    }
}

/// Test-time prior draw. `a0` is only consulted by `perturbed_gt`
/// (training-style usage); the learned prior draws `z ~ N(0, I)`.
pub fn sample_prior<G: RngCore + ?Sized>(
    kind: &PriorKind,
    context: &ContextVector,
    a0: Option<&Trajectory>,
    rng: &mut G,
) -> Result<Trajectory> {
    kind.validate()?;
    match kind {
        PriorKind::Gaussian { scale, horizon } => {
            let noise: Vec<f64> = (0..2 * horizon).map(|_| standard_normal(rng)).collect();
            gaussian_trajectory(*scale, &noise)
        }
        PriorKind::PerturbedGt { scale } => {
            let a0 = a0.ok_or_else(|| {
                Error::InvalidConfig("perturbed_gt prior requires the ground truth a_0".into())
            })?;
            let values: Vec<f64> = a0
                .flat()
                .iter()
                .map(|&v| v + scale * standard_normal(rng))
                .collect();
            Trajectory::from_flat(values)
        }
        PriorKind::Learned(prior) => prior.sample(context, rng),
    }
}

impl TerminalSampler for PriorKind {
    /// Draw used during velocity training. The prior here is already frozen
    /// (two-phase training), so the learned variant draws `z ~ N(0, I)`
    /// exactly as at generation time: training bridges then cover the same
    /// terminal distribution the sampler integrates from. Posterior draws
    /// would anchor the learned field to a narrower terminal cloud and leave
    /// generation-time starts off the training support.
    fn sample_terminal(
        &self,
        context: &ContextVector,
        a0: &Trajectory,
        rng: &mut dyn RngCore,
    ) -> Result<Trajectory> {
        sample_prior(self, context, Some(a0), rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::mse;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn context() -> ContextVector {
        ContextVector::new(vec![1.0, 0.0, 2.5, 1.0, 0.0, 0.3, 1.5, -0.5]).unwrap()
    }

    #[test]
    fn gaussian_prior_is_linear_in_the_draw() {
        assert_eq!(
            gaussian_trajectory(10.0, &[0.0; 16]).unwrap(),
            Trajectory::zeros(8)
        );
        let t = gaussian_trajectory(2.0, &[1.0, -1.0, 0.5, 0.0]).unwrap();
        assert_eq!(t.flat(), &[2.0, -2.0, 1.0, 0.0]);
    }

    #[test]
    fn perturbed_prior_with_zero_scale_is_the_ground_truth() {
        let a0 = Trajectory::constant(8, 1.25);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kind = PriorKind::PerturbedGt { scale: 0.0 };
        let a_t = sample_prior(&kind, &context(), Some(&a0), &mut rng).unwrap();
        assert_eq!(a_t, a0);
    }

    #[test]
    fn perturbed_prior_requires_the_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let kind = PriorKind::PerturbedGt { scale: 1.0 };
        assert!(sample_prior(&kind, &context(), None, &mut rng).is_err());
    }

    #[test]
    fn perturbed_prior_transport_distance_matches_its_scale() {
        // E‖a_T − a_0‖² = D · scale²
        let a0 = Trajectory::zeros(8);
        let scale = 0.7;
        let kind = PriorKind::PerturbedGt { scale };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let a_t = sample_prior(&kind, &context(), Some(&a0), &mut rng).unwrap();
            acc += a_t.flat().iter().map(|v| v * v).sum::<f64>();
        }
        let measured = acc / n as f64;
        let expected = 16.0 * scale * scale;
        assert!(
            ((measured - expected) / expected).abs() < 0.03,
            "measured {measured}, expected {expected}"
        );
    }

    #[test]
    fn diagonal_kl_is_nonnegative_and_zero_at_standard() {
        assert_eq!(diagonal_kl_to_standard(&[0.0; 8], &[0.0; 8]), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mu: Vec<f64> = (0..8).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let lv: Vec<f64> = (0..8).map(|_| 6.0 * rng.random::<f64>() - 3.0).collect();
            assert!(diagonal_kl_to_standard(&mu, &lv) >= 0.0);
        }
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut prior = LearnedPrior::with_dims(3, 2, 2, 5, &mut rng);
        // randomize heads too, so every block carries gradient
        let params: Vec<f64> = (0..prior.num_params())
            .map(|_| 0.3 * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        prior.params = params;
        let a0 = Trajectory::from_flat(vec![0.4, -0.2, 0.9, 0.1]).unwrap();
        let ctx = ContextVector::new(vec![0.2, -0.7, 1.0]).unwrap();
        let eta = vec![0.3, -1.1];
        let batch = vec![(&a0, &ctx, eta.as_slice())];
        let (_, grad) = elbo_loss_and_grad(&prior, &batch, 0.1).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for (i, &g) in grad.iter().enumerate() {
            let mut plus = prior.clone();
            plus.params[i] += h;
            let mut minus = prior.clone();
            minus.params[i] -= h;
            let (lp, _) = elbo_loss_and_grad(&plus, &batch, 0.1).unwrap();
            let (lm, _) = elbo_loss_and_grad(&minus, &batch, 0.1).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            if g.abs() < 1e-8 && fd.abs() < 1e-8 {
                continue;
            }
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()));
        }
        assert!(worst < 1e-3, "worst relative ELBO gradient error {worst}");
    }

    #[test]
    fn zero_epochs_leave_the_prior_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut prior = LearnedPrior::new(8, 8, &mut rng);
        let before = prior.params().to_vec();
        let dataset = vec![(Trajectory::constant(8, 1.0), context())];
        let trace =
            train_prior(&mut prior, &dataset, 0, PriorTrainOptions::default(), &mut rng).unwrap();
        assert!(trace.is_empty());
        assert_eq!(prior.params(), before.as_slice());
    }

    #[test]
    fn prior_memorizes_a_single_repeated_trajectory() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut prior = LearnedPrior::new(8, 8, &mut rng);
        let a0 = Trajectory::from_flat(
            (0..16).map(|i| 1.5 * ((i as f64) * 0.4).sin()).collect(),
        )
        .unwrap();
        let dataset = vec![(a0.clone(), context()); 32];
        let options = PriorTrainOptions {
            learning_rate: 3e-3,
            batch_size: 32,
            beta: DEFAULT_BETA,
        };
        train_prior(&mut prior, &dataset, 300, options, &mut rng).unwrap();
        let recon = prior.posterior_sample(&context(), &a0, &mut rng).unwrap();
        let err = mse(&recon, &a0).unwrap();
        assert!(err < 0.05, "reconstruction MSE {err}");
    }

    #[test]
    fn trained_prior_beats_gaussian_initialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut prior = LearnedPrior::new(8, 8, &mut rng);
        // small two-mode dataset
        let mk = |amp: f64| {
            Trajectory::from_flat((0..16).map(|i| amp * ((i as f64) * 0.3).cos()).collect())
                .unwrap()
        };
        let ctx_a = ContextVector::new(vec![1.0, 0.0, 2.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let ctx_b = ContextVector::new(vec![0.0, 1.0, 2.0, 1.0, 0.0, 0.0, -1.0, 0.0]).unwrap();
        let dataset: Vec<(Trajectory, ContextVector)> = (0..64)
            .map(|i| {
                if i % 2 == 0 {
                    (mk(2.0), ctx_a.clone())
                } else {
                    (mk(-2.0), ctx_b.clone())
                }
            })
            .collect();
        train_prior(
            &mut prior,
            &dataset,
            200,
            PriorTrainOptions::default(),
            &mut rng,
        )
        .unwrap();
        let gaussian = PriorKind::Gaussian {
            scale: 10.0,
            horizon: 8,
        };
        let mut prior_err = 0.0;
        let mut gauss_err = 0.0;
        for (a0, ctx) in dataset.iter().take(16) {
            let from_prior = prior.sample(ctx, &mut rng).unwrap();
            let from_gauss = sample_prior(&gaussian, ctx, None, &mut rng).unwrap();
            prior_err += mse(&from_prior, a0).unwrap();
            gauss_err += mse(&from_gauss, a0).unwrap();
        }
        assert!(
            prior_err < gauss_err,
            "prior {prior_err} vs gaussian {gauss_err}"
        );
    }

    #[test]
    fn prior_training_is_deterministic() {
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut prior = LearnedPrior::new(8, 8, &mut rng);
            let dataset = vec![(Trajectory::constant(8, 0.5), context()); 16];
            let trace = train_prior(
                &mut prior,
                &dataset,
                20,
                PriorTrainOptions::default(),
                &mut rng,
            )
            .unwrap();
            (trace, prior.params().to_vec())
        };
        assert_eq!(run(23), run(23));
    }
}
