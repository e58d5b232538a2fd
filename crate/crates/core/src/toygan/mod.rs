//! A small GAN on 2-D Gaussian mixtures: ReLU MLPs, manual backprop, Adam.

mod adam;
mod checkpoint;
mod gan;
mod loss;
mod mixture;
mod mlp;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use gan::{
    eval_seed, logs_to_csv, train, train_with, GanConfig, GanModel, StepLog, TrainOutcome,
    DEFAULT_DATASET_SIZE, DEFAULT_HIDDEN_WIDTH, DEFAULT_LEARNING_RATE, DEFAULT_STEPS,
};
pub use loss::{
    discriminator_logit_grads, discriminator_loss, generator_logit_grads, generator_loss, PROB_EPS,
};
pub use mixture::{make_grid_mixture, sample_mixture, GaussianMixtureSpec, GRID_HALF_SPAN};
pub use mlp::{Dense, ForwardCache, Gradients, Head, Mlp, Scalar};

use crate::error::Result;
use crate::metrics::{mode_report, ModeReport};
use crate::sampling::PriorSpec;

/// Number of generated samples scored per evaluation.
pub const EVAL_SAMPLES: usize = 10_000;

/// Scores `count` generated samples against the mixture.
pub fn evaluate<F: Scalar>(
    model: &GanModel<F>,
    prior: &PriorSpec,
    mixture: &GaussianMixtureSpec,
    count: usize,
    seed: u64,
) -> Result<ModeReport> {
    let samples = model.generate(prior, count, seed)?;
    mode_report(&samples, mixture)
}
