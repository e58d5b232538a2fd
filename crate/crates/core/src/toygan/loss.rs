//! Standard GAN losses on discriminator probabilities.
//!
//! Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before taking
//! logs. The gradient helpers differentiate with respect to the
//! discriminator logits in closed form, so the clamp only guards loss values.

use super::mlp::{sigmoid, Scalar};

pub const PROB_EPS: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn mean<I: Iterator<Item = f64>>(iter: I) -> f64 {
    let (sum, count) = iter.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// `-mean(log D(x)) - mean(log(1 - D(G(z))))`.
pub fn discriminator_loss<F: Scalar>(d_real: &[F], d_fake: &[F]) -> f64 {
    let real = mean(d_real.iter().map(|p| -clamp_prob(p.f64()).ln()));
    let fake = mean(d_fake.iter().map(|p| -(1.0 - clamp_prob(p.f64())).ln()));
    real + fake
}

/// Non-saturating generator loss, `-mean(log D(G(z)))`.
pub fn generator_loss<F: Scalar>(d_fake: &[F]) -> f64 {
    mean(d_fake.iter().map(|p| -clamp_prob(p.f64()).ln()))
}

/// `dL_D/d(logit)` for the real and fake halves.
pub fn discriminator_logit_grads<F: Scalar>(real_logits: &[F], fake_logits: &[F]) -> (Vec<F>, Vec<F>) {
    let nr = F::of(real_logits.len().max(1) as f64);
    let nf = F::of(fake_logits.len().max(1) as f64);
    let real = real_logits
        .iter()
        .map(|&l| (sigmoid(l) - F::one()) / nr)
        .collect();
    let fake = fake_logits.iter().map(|&l| sigmoid(l) / nf).collect();
    (real, fake)
}

/// `dL_G/d(logit)` for the generator's fake batch.
pub fn generator_logit_grads<F: Scalar>(fake_logits: &[F]) -> Vec<F> {
    let n = F::of(fake_logits.len().max(1) as f64);
    fake_logits
        .iter()
        .map(|&l| (sigmoid(l) - F::one()) / n)
        .collect()
}
