//! Central finite-difference checks of the hand-written backward passes, in f64.

use ndarray::{concatenate, s, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smallgan::toygan::{
    discriminator_logit_grads, discriminator_loss, generator_logit_grads, generator_loss, Head, Mlp,
};

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub label: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.checked > 0 && self.max_rel_err <= FD_TOLERANCE
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-8 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

struct Setup {
    generator: Mlp<f64>,
    discriminator: Mlp<f64>,
    latent: Array2<f64>,
    real: Array2<f64>,
}

fn random_widths(rng: &mut ChaCha8Rng, input: usize, output: usize) -> Vec<usize> {
    let hidden = rng.gen_range(1..=3);
    let mut w = vec![input];
    w.extend((0..hidden).map(|_| rng.gen_range(3..=8)));
    w.push(output);
    w
}

// Zero biases let dead units emit exact zeros, which sit on a ReLU kink.
fn with_random_biases(mut net: Mlp<f64>, rng: &mut ChaCha8Rng) -> Mlp<f64> {
    for (t, values) in net.param_slices_mut().into_iter().enumerate() {
        if t % 2 == 1 {
            values.iter_mut().for_each(|b| *b = rng.gen_range(-0.5..0.5));
        }
    }
    net
}

fn setup(seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent_dim = rng.gen_range(1..=3);
    let batch = rng.gen_range(2..=6);
    let gw = random_widths(&mut rng, latent_dim, 2);
    let dw = random_widths(&mut rng, 2, 1);
    let generator = with_random_biases(Mlp::init(&gw, Head::Linear, &mut rng).unwrap(), &mut rng);
    let discriminator = with_random_biases(Mlp::init(&dw, Head::Sigmoid, &mut rng).unwrap(), &mut rng);
    let latent = Array2::from_shape_simple_fn((batch, latent_dim), || rng.gen_range(-1.0..1.0));
    let real = Array2::from_shape_simple_fn((batch, 2), || rng.gen_range(-2.0..2.0));
    Setup {
        generator,
        discriminator,
        latent,
        real,
    }
}

fn d_loss(d: &Mlp<f64>, real: &Array2<f64>, fake: &Array2<f64>) -> f64 {
    let pr = d.predict(real.view()).unwrap();
    let pf = d.predict(fake.view()).unwrap();
    discriminator_loss(pr.as_slice().unwrap(), pf.as_slice().unwrap())
}

fn g_loss(g: &Mlp<f64>, d: &Mlp<f64>, latent: &Array2<f64>) -> f64 {
    let fake = g.predict(latent.view()).unwrap();
    let pf = d.predict(fake.view()).unwrap();
    generator_loss(pf.as_slice().unwrap())
}

fn compare<L: FnMut(&Mlp<f64>) -> f64>(net: &Mlp<f64>, analytic: &[&[f64]], mut loss: L) -> (usize, f64) {
    let mut work = net.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (t, grads) in analytic.iter().enumerate() {
        for (i, &a) in grads.iter().enumerate() {
            let orig = work.param_slices()[t][i];
            work.param_slices_mut()[t][i] = orig + FD_STEP;
            let up = loss(&work);
            work.param_slices_mut()[t][i] = orig - FD_STEP;
            let down = loss(&work);
            work.param_slices_mut()[t][i] = orig;
            worst = worst.max(rel_err(a, (up - down) / (2.0 * FD_STEP)));
            checked += 1;
        }
    }
    (checked, worst)
}

/// Discriminator parameters through the discriminator loss.
pub fn check_discriminator(seed: u64) -> GradCheck {
    let Setup {
        generator,
        discriminator,
        latent,
        real,
    } = setup(seed);
    let fake = generator.predict(latent.view()).unwrap();
    let n = real.nrows();
    let both = concatenate(Axis(0), &[real.view(), fake.view()]).unwrap();
    let cache = discriminator.forward(both.view()).unwrap();
    let logits = cache.logits().as_slice().unwrap().to_vec();
    let (gr, gf) = discriminator_logit_grads(&logits[..n], &logits[n..]);
    let mut g = gr;
    g.extend(gf);
    let grad_logits = Array2::from_shape_vec((2 * n, 1), g).unwrap();
    let grads = discriminator.backward_from_logits(&cache, grad_logits.view()).unwrap();
    let (checked, max_rel_err) = compare(&discriminator, &grads.slices(), |d| d_loss(d, &real, &fake));
    GradCheck {
        label: format!("discriminator seed {seed}"),
        checked,
        max_rel_err,
    }
}

/// Generator parameters through the generator loss, backpropagated through a
/// fixed discriminator.
pub fn check_generator(seed: u64) -> GradCheck {
    let Setup {
        generator,
        discriminator,
        latent,
        ..
    } = setup(seed);
    let g_cache = generator.forward(latent.view()).unwrap();
    let d_cache = discriminator.forward(g_cache.output().view()).unwrap();
    let gl = generator_logit_grads(d_cache.logits().as_slice().unwrap());
    let grad_logits = Array2::from_shape_vec((gl.len(), 1), gl).unwrap();
    let dx = discriminator
        .input_gradient_from_logits(&d_cache, grad_logits.view())
        .unwrap();
    let grads = generator.backward(&g_cache, dx.view()).unwrap();
    let (checked, max_rel_err) = compare(&generator, &grads.slices(), |g| g_loss(g, &discriminator, &latent));

    // The discriminator's input gradient is what feeds the generator; check it too.
    let fake = g_cache.output().clone();
    let mut worst = max_rel_err;
    let mut count = checked;
    for r in 0..fake.nrows() {
        for c in 0..fake.ncols() {
            let mut up = fake.clone();
            up[[r, c]] += FD_STEP;
            let mut down = fake.clone();
            down[[r, c]] -= FD_STEP;
            let f = |x: &Array2<f64>| {
                let p = discriminator.predict(x.view()).unwrap();
                generator_loss(p.slice(s![.., 0]).as_slice().unwrap())
            };
            worst = worst.max(rel_err(dx[[r, c]], (f(&up) - f(&down)) / (2.0 * FD_STEP)));
            count += 1;
        }
    }
    GradCheck {
        label: format!("generator seed {seed}"),
        checked: count,
        max_rel_err: worst,
    }
}
