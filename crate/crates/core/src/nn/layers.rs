use rand::Rng;

use super::params::{Binding, ParamStore};
use super::tape::{conv_geom, pixel_shuffle, pixel_unshuffle, Tape, Var};
use super::tensor::Tensor;
use crate::error::{dim_err, Result};

/// Fully connected layer `y = W x + b`, parameters `{name}.w` (`out×in`) and `{name}.b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Linear {
    pub name: String,
    pub n_in: usize,
    pub n_out: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, n_in: usize, n_out: usize) -> Self {
        Linear {
            name: name.into(),
            n_in,
            n_out,
        }
    }

    /// Uniform He-style fan-in initialisation; zero bias.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let bound = (6.0 / self.n_in as f64).sqrt();
        let w = (0..self.n_in * self.n_out)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        store.insert(
            format!("{}.w", self.name),
            Tensor::new(&[self.n_out, self.n_in], w).expect("linear weight shape"),
        );
        store.insert(format!("{}.b", self.name), Tensor::zeros(&[self.n_out]));
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var> {
        let w = bind.get(&format!("{}.w", self.name))?;
        let b = bind.get(&format!("{}.b", self.name))?;
        tape.linear(x, w, Some(b))
    }
}

/// Square-kernel 2-D convolution with parameters `{name}.w` (`O×C×k×k`) and `{name}.b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conv2d {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv2d {
    pub fn new(
        name: impl Into<String>,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
    ) -> Self {
        Conv2d {
            name: name.into(),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        let fan_in = self.in_channels * self.kernel * self.kernel;
        let bound = (6.0 / fan_in as f64).sqrt();
        let w = (0..self.out_channels * fan_in)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        store.insert(
            format!("{}.w", self.name),
            Tensor::new(
                &[
                    self.out_channels,
                    self.in_channels,
                    self.kernel,
                    self.kernel,
                ],
                w,
            )
            .expect("conv weight shape"),
        );
        store.insert(
            format!("{}.b", self.name),
            Tensor::zeros(&[self.out_channels]),
        );
    }

    pub fn forward(&self, tape: &mut Tape, bind: &Binding, x: Var) -> Result<Var> {
        let w = bind.get(&format!("{}.w", self.name))?;
        let b = bind.get(&format!("{}.b", self.name))?;
        tape.conv2d(x, w, Some(b), self.stride, self.padding)
    }
}

/// Dense layer on a single vector: `output[i] = Σ_j weights[i][j]·input[j] + bias[i]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if input.rank() != 1 {
        return dim_err(format!(
            "dense_forward: input must be a vector, got {:?}",
            input.shape()
        ));
    }
    let mut tape = Tape::new();
    let x = tape.constant(input.reshape(&[1, input.len()])?);
    let w = tape.constant(weights.clone());
    let b = tape.constant(bias.clone());
    let y = tape.linear(x, w, Some(b))?;
    tape.value(y).reshape(&[weights.shape()[0]])
}

/// Single-image convolution: `input[C×H×W]`, `kernels[O×C×k×k]`, no bias.
pub fn conv2d_forward(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 3 {
        return dim_err(format!("conv2d_forward: input must be C×H×W, got {s:?}"));
    }
    conv_geom(
        s,
        kernels.shape().get(2).copied().unwrap_or(0),
        stride,
        padding,
    )?;
    let mut tape = Tape::new();
    let x = tape.constant(input.reshape(&[1, s[0], s[1], s[2]])?);
    let w = tape.constant(kernels.clone());
    let y = tape.conv2d(x, w, None, stride, padding)?;
    let out = tape.value(y);
    out.reshape(&out.shape()[1..])
}

/// `[(C·r²)×H×W] → [C×(r·H)×(r·W)]`.
pub fn pixel_shuffle_forward(input: &Tensor, r: usize) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 3 {
        return dim_err(format!("pixel_shuffle: input must be C×H×W, got {s:?}"));
    }
    let out = pixel_shuffle(&input.reshape(&[1, s[0], s[1], s[2]])?, r)?;
    out.reshape(&out.shape()[1..])
}

pub fn pixel_unshuffle_forward(input: &Tensor, r: usize) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 3 {
        return dim_err(format!("pixel_unshuffle: input must be C×H×W, got {s:?}"));
    }
    let out = pixel_unshuffle(&input.reshape(&[1, s[0], s[1], s[2]])?, r)?;
    out.reshape(&out.shape()[1..])
}
