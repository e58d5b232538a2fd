//! The oversample-and-compress GAN training loop on a 2-D mixture.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::loss::{
    discriminator_logit_grads, discriminator_loss, generator_logit_grads, generator_loss,
};
use super::mixture::GaussianMixtureSpec;
use super::mlp::{Head, Mlp, Scalar};
use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::projection::{make_projection, DataPool};
use crate::sampling::{random_prior_batch, PriorSpec, Sampler, SamplerConfig};

pub const DEFAULT_STEPS: usize = 15_000;
pub const DEFAULT_HIDDEN_WIDTH: usize = 256;
/// Adam learning rate for both networks.
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
pub const DEFAULT_DATASET_SIZE: usize = 65_536;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanConfig {
    pub latent_dim: usize,
    pub hidden_width: usize,
    /// Number of affine layers in each network.
    pub depth: usize,
    pub generator_opt: AdamHyper,
    pub discriminator_opt: AdamHyper,
    pub steps: usize,
    pub sampler: SamplerConfig,
    pub prior_low: f64,
    pub prior_high: f64,
    /// Size of the finite training set drawn once from the mixture.
    pub dataset_size: usize,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        let opt = AdamHyper {
            lr: DEFAULT_LEARNING_RATE,
            ..AdamHyper::default()
        };
        GanConfig {
            latent_dim: 2,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            depth: 4,
            generator_opt: opt,
            discriminator_opt: opt,
            steps: DEFAULT_STEPS,
            sampler: SamplerConfig::default(),
            prior_low: -1.0,
            prior_high: 1.0,
            dataset_size: DEFAULT_DATASET_SIZE,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn prior(&self) -> PriorSpec {
        PriorSpec {
            dim: self.latent_dim,
            low: self.prior_low,
            high: self.prior_high,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.hidden_width == 0 || self.depth == 0 {
            return Err(Error::contract("latent dim, hidden width and depth must be positive"));
        }
        for (name, h) in [("generator", &self.generator_opt), ("discriminator", &self.discriminator_opt)] {
            if !(h.lr > 0.0 && (0.0..1.0).contains(&h.beta1) && (0.0..1.0).contains(&h.beta2) && h.eps > 0.0) {
                return Err(Error::contract(format!("invalid {name} optimizer settings {h:?}")));
            }
        }
        self.sampler.validate()?;
        self.prior().validate()?;
        if self.dataset_size < self.sampler.target_pool_size() {
            return Err(Error::PoolExhausted {
                needed: self.sampler.target_pool_size(),
                available: self.dataset_size,
            });
        }
        Ok(())
    }

    fn widths(&self, input: usize, output: usize) -> Vec<usize> {
        let mut w = vec![input];
        w.extend(std::iter::repeat_n(self.hidden_width, self.depth - 1));
        w.push(output);
        w
    }
}

/// Generator, discriminator, and their optimizer states.
#[derive(Debug, Clone)]
pub struct GanModel<F = f32> {
    pub generator: Mlp<F>,
    pub discriminator: Mlp<F>,
    pub generator_state: AdamState<F>,
    pub discriminator_state: AdamState<F>,
    pub steps_done: u64,
}

impl<F: Scalar> PartialEq for GanModel<F> {
    fn eq(&self, other: &Self) -> bool {
        self.generator == other.generator
            && self.discriminator == other.discriminator
            && self.generator_state == other.generator_state
            && self.discriminator_state == other.discriminator_state
            && self.steps_done == other.steps_done
    }
}

impl<F: Scalar> GanModel<F> {
    pub fn init(cfg: &GanConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SeedStream::Init));
        let generator = Mlp::init(&cfg.widths(cfg.latent_dim, 2), Head::Linear, &mut rng)?;
        let discriminator = Mlp::init(&cfg.widths(2, 1), Head::Sigmoid, &mut rng)?;
        Ok(GanModel {
            generator_state: AdamState::for_network(cfg.generator_opt, &generator),
            discriminator_state: AdamState::for_network(cfg.discriminator_opt, &discriminator),
            generator,
            discriminator,
            steps_done: 0,
        })
    }

    /// Maps latent rows through the generator.
    pub fn generate_from(&self, latent: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = latent.mapv(F::of);
        Ok(self.generator.predict(z.view())?.mapv(Scalar::f64))
    }

    /// `count` samples from i.i.d. uniform latents.
    pub fn generate(&self, prior: &PriorSpec, count: usize, seed: u64) -> Result<Array2<f64>> {
        let z = random_prior_batch(prior, count, seed)?;
        self.generate_from(z.view())
    }

    /// One discriminator update followed by one generator update on the same
    /// latent batch.
    pub fn train_step(&mut self, latent: ArrayView2<'_, F>, real: ArrayView2<'_, F>) -> Result<StepLog> {
        let k_real = real.nrows();
        let g_cache = self.generator.forward(latent)?;
        let fake = g_cache.output();

        let both = concatenate(Axis(0), &[real.view(), fake.view()])
            .map_err(|e| Error::contract(format!("real and fake batches disagree: {e}")))?;
        let d_cache = self.discriminator.forward(both.view())?;
        let logits = d_cache.logits().column(0).to_vec();
        let probs = d_cache.output().column(0).to_vec();
        let loss_d = discriminator_loss(&probs[..k_real], &probs[k_real..]);
        let (gr, gf) = discriminator_logit_grads(&logits[..k_real], &logits[k_real..]);
        let d_grad = Array2::from_shape_vec((gr.len() + gf.len(), 1), [gr, gf].concat())
            .expect("one gradient per logit");
        let d_grads = self.discriminator.backward_from_logits(&d_cache, d_grad.view())?;
        adam_step(&mut self.discriminator, &d_grads, &mut self.discriminator_state)?;

        let d_fake = self.discriminator.forward(fake.view())?;
        let loss_g = generator_loss(d_fake.output().as_slice().expect("contiguous"));
        let gg = generator_logit_grads(d_fake.logits().as_slice().expect("contiguous"));
        let gg = Array2::from_shape_vec((gg.len(), 1), gg).expect("one gradient per logit");
        let fake_grad = self.discriminator.input_gradient_from_logits(&d_fake, gg.view())?;
        let g_grads = self.generator.backward(&g_cache, fake_grad.view())?;
        adam_step(&mut self.generator, &g_grads, &mut self.generator_state)?;

        self.steps_done += 1;
        Ok(StepLog {
            step: self.steps_done,
            loss_d,
            loss_g,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss_d: f64,
    pub loss_g: f64,
}

/// Renders step logs as CSV with header `step,loss_d,loss_g`.
pub fn logs_to_csv(logs: &[StepLog]) -> String {
    let mut out = String::from("step,loss_d,loss_g\n");
    for l in logs {
        out.push_str(&format!("{},{},{}\n", l.step, l.loss_d, l.loss_g));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GanModel<f32>,
    pub logs: Vec<StepLog>,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum SeedStream {
    Init,
    Dataset,
    Sampler,
    Projection,
    Eval,
}

/// Independent sub-seed for one consumer of a run's master seed.
pub(crate) fn derive_seed(seed: u64, stream: SeedStream) -> u64 {
    // splitmix64 finalizer over (seed, stream)
    let mut z = seed ^ (stream as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed used by [`evaluate`] when drawing evaluation latents.
pub fn eval_seed(seed: u64) -> u64 {
    derive_seed(seed, SeedStream::Eval)
}

/// Trains a fresh model on a finite dataset drawn from `mixture`.
pub fn train(cfg: &GanConfig, mixture: &GaussianMixtureSpec) -> Result<TrainOutcome> {
    train_with(cfg, mixture, |_| {})
}

/// [`train`] with a per-step callback.
pub fn train_with<C: FnMut(&StepLog)>(
    cfg: &GanConfig,
    mixture: &GaussianMixtureSpec,
    mut on_step: C,
) -> Result<TrainOutcome> {
    let mut model = GanModel::<f32>::init(cfg)?;
    let mut logs = Vec::with_capacity(cfg.steps);
    if cfg.steps == 0 {
        return Ok(TrainOutcome { model, logs });
    }

    let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SeedStream::Dataset));
    let dataset = mixture.sample_with(cfg.dataset_size, &mut data_rng);
    let pool = selection_pool(cfg, &dataset)?;
    let dataset = dataset.mapv(|v| v as f32);
    let prior = cfg.prior();
    let mut sampler = Sampler::new(cfg.sampler, derive_seed(cfg.seed, SeedStream::Sampler))?;

    for _ in 0..cfg.steps {
        let z = sampler.prior_batch(&prior)?.mapv(|v| v as f32);
        let rows = sampler.data_batch_rows(&pool)?;
        let real = dataset.select(Axis(0), &rows);
        let log = model.train_step(z.view(), real.view())?;
        if !(log.loss_d.is_finite() && log.loss_g.is_finite()) {
            return Err(Error::Diverged {
                step: log.step as usize,
                loss_d: log.loss_d,
                loss_g: log.loss_g,
            });
        }
        on_step(&log);
        logs.push(log);
    }
    Ok(TrainOutcome { model, logs })
}

/// Embedding pool the data-side core-set runs on. The mixture samples are
/// their own embeddings; a projection applies only when it reduces the
/// dimension.
fn selection_pool(cfg: &GanConfig, dataset: &Array2<f64>) -> Result<DataPool> {
    let dim = dataset.ncols();
    let embedded = match cfg.sampler.projection_dim {
        Some(m) if m < dim => {
            make_projection(dim, m, derive_seed(cfg.seed, SeedStream::Projection))?.apply(dataset)?
        }
        _ => dataset.clone(),
    };
    Ok(DataPool::with_row_ids(PointSet::new(embedded)?))
}
