use serde::{Deserialize, Serialize};

use super::mlp::{Gradients, Mlp, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment accumulators, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub hyper: AdamHyper,
    pub t: u64,
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
}

impl<F: Scalar> AdamState<F> {
    /// Zeroed state shaped like `shapes` (lengths of each parameter buffer).
    pub fn new(hyper: AdamHyper, shapes: &[usize]) -> Self {
        AdamState {
            hyper,
            t: 0,
            m: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![F::zero(); n]).collect(),
        }
    }

    pub fn for_network(hyper: AdamHyper, net: &Mlp<F>) -> Self {
        let shapes: Vec<usize> = net.param_slices().iter().map(|s| s.len()).collect();
        Self::new(hyper, &shapes)
    }

    /// One bias-corrected Adam update over raw parameter buffers.
    pub fn step_slices(&mut self, params: &mut [&mut [F]], grads: &[&[F]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.m).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::contract(format!(
                    "tensor {i}: optimizer expects {} values, got {} params and {} grads",
                    m.len(),
                    p.len(),
                    g.len()
                )));
            }
        }

        self.t += 1;
        let h = self.hyper;
        let b1 = F::of(h.beta1);
        let b2 = F::of(h.beta2);
        let one = F::one();
        let c1 = F::of(1.0 - h.beta1.powi(self.t as i32));
        let c2 = F::of(1.0 - h.beta2.powi(self.t as i32));
        let lr = F::of(h.lr);
        let eps = F::of(h.eps);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to every parameter of `net`.
pub fn adam_step<F: Scalar>(net: &mut Mlp<F>, grads: &Gradients<F>, state: &mut AdamState<F>) -> Result<()> {
    let g = grads.slices();
    let mut p = net.param_slices_mut();
    state.step_slices(&mut p, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toygan::mlp::{Dense, Head};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut state = AdamState::<f64>::new(AdamHyper::default(), &[3]);
        let mut p = vec![1.0, -2.0, 0.5];
        state.step_slices(&mut [&mut p[..]], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let hyper = AdamHyper {
            lr: 0.01,
            ..AdamHyper::default()
        };
        let mut state = AdamState::<f64>::new(hyper, &[3]);
        let mut p = [0.0; 3];
        state.step_slices(&mut [&mut p[..]], &[&[3.0, -0.2, 1e-3]]).unwrap();
        assert_abs_diff_eq!(p[0], -0.01, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 0.01, epsilon = 1e-9);
        assert_abs_diff_eq!(p[2], -0.01, epsilon = 1e-6);
    }

    #[test]
    fn two_step_scalar_trace() {
        // lr 0.1, betas (0.9, 0.999), grads 0.5 then -0.25, from p = 1.
        let hyper = AdamHyper {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut state = AdamState::<f64>::new(hyper, &[1]);
        let mut p = [1.0];
        state.step_slices(&mut [&mut p[..]], &[&[0.5]]).unwrap();
        assert_abs_diff_eq!(p[0], 0.900000002, epsilon = 1e-12);
        state.step_slices(&mut [&mut p[..]], &[&[-0.25]]).unwrap();
        assert_abs_diff_eq!(state.m[0][0], 0.02, epsilon = 1e-15);
        assert_abs_diff_eq!(state.v[0][0], 0.00031225, epsilon = 1e-15);
        assert_abs_diff_eq!(p[0], 0.8733662987078463, epsilon = 1e-12);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = AdamState::<f64>::new(AdamHyper::default(), &[2]);
        let mut p = [0.0; 3];
        assert!(state.step_slices(&mut [&mut p[..]], &[&[0.0; 3]]).is_err());
        assert_eq!(state.t, 0);
    }

    #[test]
    fn network_step_updates_every_tensor() {
        let layer = Dense {
            weight: array![[1.0], [2.0]],
            bias: array![0.0],
        };
        let mut net = Mlp::from_layers(vec![layer], Head::Linear).unwrap();
        let mut state = AdamState::for_network(AdamHyper::default(), &net);
        let cache = net.forward(array![[1.0, 1.0]].view()).unwrap();
        let grads = net.backward(&cache, array![[1.0]].view()).unwrap();
        adam_step(&mut net, &grads, &mut state).unwrap();
        let w = &net.layers()[0];
        assert!(w.weight[[0, 0]] < 1.0 && w.weight[[1, 0]] < 2.0 && w.bias[0] < 0.0);
    }
}
