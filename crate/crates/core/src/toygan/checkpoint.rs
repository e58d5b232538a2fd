//! Versioned binary model checkpoints.
//!
//! Little-endian, same conventions as the embedding cache:
//!
//! ```text
//! magic      b"SGCK"
//! version    u32 = 1
//! width      u32   bytes per scalar (4 = f32, 8 = f64)
//! steps_done u64
//! generator      network, then its Adam state
//! discriminator  network, then its Adam state
//!
//! network:  layers u32, head u8, then per layer: in u32, out u32,
//!           in*out weights (row-major), out biases
//! adam:     t u64, lr f64, beta1 f64, beta2 f64, eps f64,
//!           then per parameter tensor: first moments, second moments
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::adam::{AdamHyper, AdamState};
use super::gan::GanModel;
use super::mlp::{Dense, Head, Mlp, Scalar};
use crate::binio::ByteReader;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SGCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn write_values<F: Scalar>(out: &mut Vec<u8>, values: &[F]) {
    for &v in values {
        v.write_le(out);
    }
}

fn write_network<F: Scalar>(out: &mut Vec<u8>, net: &Mlp<F>) {
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    out.push(net.head().code());
    for l in net.layers() {
        out.extend_from_slice(&(l.input_dim() as u32).to_le_bytes());
        out.extend_from_slice(&(l.output_dim() as u32).to_le_bytes());
        write_values(out, l.weight.as_slice().expect("standard layout"));
        write_values(out, l.bias.as_slice().expect("standard layout"));
    }
}

fn write_adam<F: Scalar>(out: &mut Vec<u8>, state: &AdamState<F>) {
    out.extend_from_slice(&state.t.to_le_bytes());
    let h = state.hyper;
    for v in [h.lr, h.beta1, h.beta2, h.eps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (m, v) in state.m.iter().zip(&state.v) {
        write_values(out, m);
        write_values(out, v);
    }
}

pub fn checkpoint_bytes<F: Scalar>(model: &GanModel<F>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&F::WIDTH.to_le_bytes());
    out.extend_from_slice(&model.steps_done.to_le_bytes());
    write_network(&mut out, &model.generator);
    write_adam(&mut out, &model.generator_state);
    write_network(&mut out, &model.discriminator);
    write_adam(&mut out, &model.discriminator_state);
    out
}

fn read_values<F: Scalar>(r: &mut ByteReader<'_>, field: &'static str, count: usize) -> Result<Vec<F>> {
    let width = F::WIDTH as usize;
    let len = count
        .checked_mul(width)
        .ok_or_else(|| Error::format(field, "size overflows"))?;
    let bytes = r.take(field, len)?;
    let values: Vec<F> = bytes.chunks_exact(width).map(F::read_le).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(field, "non-finite value"));
    }
    Ok(values)
}

fn read_network<F: Scalar>(r: &mut ByteReader<'_>) -> Result<Mlp<F>> {
    let n_layers = r.u32("layers")? as usize;
    if n_layers == 0 {
        return Err(Error::format("layers", "network has no layers"));
    }
    let head_code = r.take("head", 1)?[0];
    let head = Head::from_code(head_code)
        .ok_or_else(|| Error::format("head", format!("unknown head code {head_code}")))?;
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let input = r.u32("layer_shape")? as usize;
        let output = r.u32("layer_shape")? as usize;
        let count = input
            .checked_mul(output)
            .ok_or_else(|| Error::format("layer_shape", "size overflows"))?;
        let weight = read_values::<F>(r, "weights", count)?;
        let bias = read_values::<F>(r, "biases", output)?;
        layers.push(Dense {
            weight: Array2::from_shape_vec((input, output), weight)
                .map_err(|e| Error::format("weights", e.to_string()))?,
            bias: Array1::from(bias),
        });
    }
    Mlp::from_layers(layers, head).map_err(|e| Error::format("layer_shape", e.to_string()))
}

fn read_adam<F: Scalar>(r: &mut ByteReader<'_>, net: &Mlp<F>) -> Result<AdamState<F>> {
    let t = r.u64("adam_t")?;
    let mut h = [0.0; 4];
    for v in &mut h {
        *v = f64::from_le_bytes(r.take("adam_hyper", 8)?.try_into().expect("8 bytes"));
    }
    let hyper = AdamHyper {
        lr: h[0],
        beta1: h[1],
        beta2: h[2],
        eps: h[3],
    };
    let mut state = AdamState::for_network(hyper, net);
    state.t = t;
    for (m, v) in state.m.iter_mut().zip(state.v.iter_mut()) {
        *m = read_values(r, "adam_moments", m.len())?;
        *v = read_values(r, "adam_moments", v.len())?;
    }
    Ok(state)
}

pub fn checkpoint_from_bytes<F: Scalar>(bytes: &[u8]) -> Result<GanModel<F>> {
    let mut r = ByteReader::new(bytes);
    if r.take("magic", 4)? != CHECKPOINT_MAGIC {
        return Err(Error::format("magic", "expected \"SGCK\""));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            "version",
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let width = r.u32("width")?;
    if width != F::WIDTH {
        return Err(Error::format(
            "width",
            format!("checkpoint stores {width}-byte scalars, expected {}", F::WIDTH),
        ));
    }
    let steps_done = r.u64("steps_done")?;
    let generator = read_network::<F>(&mut r)?;
    let generator_state = read_adam(&mut r, &generator)?;
    let discriminator = read_network::<F>(&mut r)?;
    let discriminator_state = read_adam(&mut r, &discriminator)?;
    if r.remaining() != 0 {
        return Err(Error::format("adam_moments", format!("{} trailing bytes", r.remaining())));
    }
    Ok(GanModel {
        generator,
        discriminator,
        generator_state,
        discriminator_state,
        steps_done,
    })
}

pub fn save_checkpoint<F: Scalar>(model: &GanModel<F>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, checkpoint_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint<F: Scalar>(path: impl AsRef<Path>) -> Result<GanModel<F>> {
    checkpoint_from_bytes(&fs::read(path)?)
}
