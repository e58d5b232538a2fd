//! Fully connected ReLU networks with hand-written backpropagation.

use std::fmt::Debug;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayBase, ArrayView2, Axis, Data, Ix2, Zip};
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element type for network parameters and activations.
pub trait Scalar:
    ndarray::LinalgScalar + Float + num_traits::NumAssign + Debug + Default + Send + Sync + 'static
{
    /// Bytes per value in checkpoints.
    const WIDTH: u32;

    fn of(v: f64) -> Self;

    fn f64(self) -> f64;

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const WIDTH: u32 = 4;

    fn of(v: f64) -> Self {
        v as f32
    }

    fn f64(self) -> f64 {
        self as f64
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const WIDTH: u32 = 8;

    fn of(v: f64) -> Self {
        v
    }

    fn f64(self) -> f64 {
        self
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Output nonlinearity of the last layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    Linear,
    Sigmoid,
}

impl Head {
    pub(crate) fn code(self) -> u8 {
        match self {
            Head::Linear => 0,
            Head::Sigmoid => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Head> {
        match code {
            0 => Some(Head::Linear),
            1 => Some(Head::Sigmoid),
            _ => None,
        }
    }
}

/// One affine layer, `y = x W + b` with `W` stored `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Scalar> Dense<F> {
    pub fn zeros(input: usize, output: usize) -> Self {
        Dense {
            weight: Array2::zeros((input, output)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.ncols()
    }
}

// Every parameter change takes a fresh version so stale caches are detectable.
static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn next_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

/// A stack of dense layers with ReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp<F> {
    layers: Vec<Dense<F>>,
    head: Head,
    version: u64,
}

impl<F: Scalar> PartialEq for Mlp<F> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.head == other.head
    }
}

/// Activations recorded by [`Mlp::forward`] for use by the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    version: u64,
    /// Input to each layer.
    inputs: Vec<Array2<F>>,
    /// Pre-activation of each layer; the last one holds the logits.
    pre: Vec<Array2<F>>,
    output: Array2<F>,
}

impl<F: Scalar> ForwardCache<F> {
    pub fn output(&self) -> &Array2<F> {
        &self.output
    }

    pub fn logits(&self) -> &Array2<F> {
        self.pre.last().expect("at least one layer")
    }
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<Dense<F>>,
    /// Gradient with respect to the network input.
    pub input: Array2<F>,
}

impl<F: Scalar> Gradients<F> {
    pub fn slices(&self) -> Vec<&[F]> {
        param_slices(&self.layers)
    }
}

fn param_slices<F: Scalar>(layers: &[Dense<F>]) -> Vec<&[F]> {
    layers
        .iter()
        .flat_map(|l| {
            [
                l.weight.as_slice().expect("standard layout"),
                l.bias.as_slice().expect("standard layout"),
            ]
        })
        .collect()
}

/// Row-major `a · b`.
fn matmul<F: Scalar, A: Data<Elem = F>, B: Data<Elem = F>>(
    a: &ArrayBase<A, Ix2>,
    b: &ArrayBase<B, Ix2>,
) -> Array2<F> {
    let mut out = Array2::zeros((a.nrows(), b.ncols()));
    general_mat_mul(F::one(), a, b, F::zero(), &mut out);
    out
}

pub(crate) fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

impl<F: Scalar> Mlp<F> {
    /// Builds a network from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Dense<F>>, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::contract(format!(
                    "layer {i}: bias length {} does not match output width {}",
                    l.bias.len(),
                    l.output_dim()
                )));
            }
            if !l.weight.is_standard_layout() {
                return Err(Error::contract(format!("layer {i}: weight must be row-major")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::contract(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        if layers
            .iter()
            .any(|l| l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::contract("network parameters must be finite"));
        }
        Ok(Mlp {
            layers,
            head,
            version: next_version(),
        })
    }

    /// He-style uniform initialization: weights in `±sqrt(6 / fan_in)`,
    /// zero biases. `widths` lists every layer boundary, input first.
    pub fn init<R: Rng + ?Sized>(widths: &[usize], head: Head, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::contract(format!("invalid layer widths {widths:?}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((w[0], w[1]), || {
                    F::of(rng.gen_range(-bound..bound))
                });
                Dense {
                    weight,
                    bias: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self::from_layers(layers, head)
    }

    pub fn layers(&self) -> &[Dense<F>] {
        &self.layers
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").output_dim()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn param_slices(&self) -> Vec<&[F]> {
        param_slices(&self.layers)
    }

    /// Mutable access to all parameters. Invalidates outstanding caches.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        self.version = next_version();
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    /// Runs the network on a batch (one sample per row).
    pub fn forward(&self, input: ArrayView2<'_, F>) -> Result<ForwardCache<F>> {
        if input.ncols() != self.input_dim() {
            return Err(Error::contract(format!(
                "input has {} columns but the network expects {}",
                input.ncols(),
                self.input_dim()
            )));
        }
        let depth = self.layers.len();
        let mut inputs = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        let mut x = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = matmul(&x, &layer.weight);
            z += &layer.bias;
            inputs.push(x);
            if i + 1 < depth {
                x = z.mapv(|v| v.max(F::zero()));
            } else {
                x = match self.head {
                    Head::Linear => z.clone(),
                    Head::Sigmoid => z.mapv(sigmoid),
                };
            }
            pre.push(z);
        }
        Ok(ForwardCache {
            version: self.version,
            inputs,
            pre,
            output: x,
        })
    }

    /// Convenience: output only.
    pub fn predict(&self, input: ArrayView2<'_, F>) -> Result<Array2<F>> {
        Ok(self.forward(input)?.output)
    }

    fn check_cache(&self, cache: &ForwardCache<F>, grad: &ArrayView2<'_, F>) -> Result<()> {
        if cache.version != self.version || cache.pre.len() != self.layers.len() {
            return Err(Error::contract(
                "stale forward cache: parameters changed since the forward pass",
            ));
        }
        if grad.dim() != cache.output.dim() {
            return Err(Error::contract(format!(
                "output gradient has shape {:?} but the forward output is {:?}",
                grad.dim(),
                cache.output.dim()
            )));
        }
        Ok(())
    }

    /// Gradients of a scalar loss given `dL/d(output)`.
    pub fn backward(
        &self,
        cache: &ForwardCache<F>,
        grad_output: ArrayView2<'_, F>,
    ) -> Result<Gradients<F>> {
        self.check_cache(cache, &grad_output)?;
        let delta = match self.head {
            Head::Linear => grad_output.to_owned(),
            Head::Sigmoid => {
                let mut d = grad_output.to_owned();
                Zip::from(&mut d)
                    .and(&cache.output)
                    .for_each(|g, &p| *g = *g * p * (F::one() - p));
                d
            }
        };
        let (layers, input) = self.propagate(cache, delta, true);
        Ok(Gradients {
            layers: layers.expect("requested"),
            input,
        })
    }

    /// Gradients given `dL/d(logits)` directly, bypassing the head's
    /// nonlinearity.
    pub fn backward_from_logits(
        &self,
        cache: &ForwardCache<F>,
        grad_logits: ArrayView2<'_, F>,
    ) -> Result<Gradients<F>> {
        self.check_cache(cache, &grad_logits)?;
        let (layers, input) = self.propagate(cache, grad_logits.to_owned(), true);
        Ok(Gradients {
            layers: layers.expect("requested"),
            input,
        })
    }

    /// Only `dL/d(input)` given `dL/d(logits)`; skips parameter gradients.
    pub fn input_gradient_from_logits(
        &self,
        cache: &ForwardCache<F>,
        grad_logits: ArrayView2<'_, F>,
    ) -> Result<Array2<F>> {
        self.check_cache(cache, &grad_logits)?;
        Ok(self.propagate(cache, grad_logits.to_owned(), false).1)
    }

    fn propagate(
        &self,
        cache: &ForwardCache<F>,
        mut delta: Array2<F>,
        want_params: bool,
    ) -> (Option<Vec<Dense<F>>>, Array2<F>) {
        let mut grads: Vec<Dense<F>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            if want_params {
                grads.push(Dense {
                    weight: matmul(&cache.inputs[i].t(), &delta),
                    bias: delta.sum_axis(Axis(0)),
                });
            }
            let mut upstream = matmul(&delta, &layer.weight.t());
            if i > 0 {
                Zip::from(&mut upstream)
                    .and(&cache.pre[i - 1])
                    .for_each(|g, &z| {
                        if z <= F::zero() {
                            *g = F::zero();
                        }
                    });
            }
            delta = upstream;
        }
        if want_params {
            grads.reverse();
            (Some(grads), delta)
        } else {
            (None, delta)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_with_sigmoid_head_outputs_half() {
        let layers = vec![Dense::<f64>::zeros(2, 8), Dense::zeros(8, 8), Dense::zeros(8, 1)];
        let net = Mlp::from_layers(layers, Head::Sigmoid).unwrap();
        let out = net.predict(array![[1.0, -3.0], [0.2, 5.0]].view()).unwrap();
        assert_eq!(out, array![[0.5], [0.5]]);
    }

    #[test]
    fn single_linear_layer_is_affine() {
        let layer = Dense {
            weight: array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
            bias: array![0.5, -0.5],
        };
        let net = Mlp::from_layers(vec![layer], Head::Linear).unwrap();
        let out = net.predict(array![[1.0, 0.0, -1.0]].view()).unwrap();
        assert_eq!(out, array![[1.0 - 5.0 + 0.5, 2.0 - 6.0 - 0.5]]);
    }

    #[test]
    fn relu_blocks_negative_hidden_units() {
        let hidden = Dense {
            weight: array![[1.0, 1.0, 1.0]],
            bias: array![0.0, 0.0, 0.0],
        };
        let out_layer = Dense {
            weight: array![[7.0], [8.0], [9.0]],
            bias: array![0.25],
        };
        let net = Mlp::from_layers(vec![hidden, out_layer], Head::Linear).unwrap();
        let out = net.predict(array![[-2.0]].view()).unwrap();
        assert_eq!(out, array![[0.25]]);
    }

    #[test]
    fn shape_errors() {
        assert!(Mlp::from_layers(vec![Dense::<f64>::zeros(2, 3), Dense::zeros(4, 1)], Head::Linear).is_err());
        let net = Mlp::from_layers(vec![Dense::<f64>::zeros(2, 3)], Head::Linear).unwrap();
        assert!(net.forward(array![[1.0, 2.0, 3.0]].view()).is_err());
    }

    #[test]
    fn linear_layer_gradient_closed_form() {
        let layer = Dense {
            weight: array![[0.3, -0.2], [0.1, 0.4]],
            bias: array![0.0, 1.0],
        };
        let net = Mlp::from_layers(vec![layer.clone()], Head::Linear).unwrap();
        let x = array![[1.0, 2.0], [-1.0, 0.5], [0.0, 3.0]];
        let g = array![[1.0, 0.0], [0.5, -1.0], [2.0, 2.0]];
        let cache = net.forward(x.view()).unwrap();
        let grads = net.backward(&cache, g.view()).unwrap();
        assert_eq!(grads.layers[0].weight, x.t().dot(&g));
        assert_eq!(grads.layers[0].bias, g.sum_axis(Axis(0)));
        assert_eq!(grads.input, g.dot(&layer.weight.t()));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::<f64>::init(&[2, 16, 16, 1], Head::Sigmoid, &mut rng).unwrap();
        let x = array![[0.3, -0.7], [1.0, 2.0]];
        let cache = net.forward(x.view()).unwrap();
        let grads = net.backward(&cache, Array2::zeros((2, 1)).view()).unwrap();
        assert!(grads.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(grads.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut net = Mlp::<f64>::init(&[2, 4, 1], Head::Linear, &mut rng).unwrap();
        let cache = net.forward(array![[0.1, 0.2]].view()).unwrap();
        net.param_slices_mut()[0][0] += 1.0;
        let err = net.backward(&cache, array![[1.0]].view()).unwrap_err();
        assert!(err.to_string().contains("stale"));

        let other = Mlp::<f64>::init(&[2, 4, 1], Head::Linear, &mut rng).unwrap();
        let cache = other.forward(array![[0.1, 0.2]].view()).unwrap();
        assert!(net.backward(&cache, array![[1.0]].view()).is_err());
    }

    #[test]
    fn input_gradient_matches_full_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Mlp::<f64>::init(&[3, 8, 8, 1], Head::Sigmoid, &mut rng).unwrap();
        let x = array![[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]];
        let cache = net.forward(x.view()).unwrap();
        let g = array![[0.7], [-0.2]];
        let full = net.backward_from_logits(&cache, g.view()).unwrap();
        let only = net.input_gradient_from_logits(&cache, g.view()).unwrap();
        assert_eq!(full.input, only);
    }

    #[test]
    fn init_is_seeded() {
        let a = Mlp::<f32>::init(&[2, 5, 1], Head::Linear, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = Mlp::<f32>::init(&[2, 5, 1], Head::Linear, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let bound = (6.0f32 / 2.0).sqrt();
        assert!(a.layers()[0].weight.iter().all(|w| w.abs() <= bound));
        assert_eq!(a.param_count(), 2 * 5 + 5 + 5 + 1);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
        assert!(sigmoid(-800.0f32).is_finite());
    }
}
