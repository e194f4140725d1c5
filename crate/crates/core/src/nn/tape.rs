//! Reverse-mode gradient tape.
//!
//! Nodes are appended in evaluation order, so the node vector is already a topological
//! order; [`Tape::backward`] walks it once in reverse and visits every producing operation
//! exactly once.

use std::sync::Arc;

use super::kernels::{col2im, dft2_planes, gemm, im2col, ConvGeom, MatView};
use super::tensor::Tensor;
use crate::error::{dim_err, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Log,
    Sqrt,
    Square,
    Abs,
    Clamp(f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, f64),
    Offset(Var),
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    ChannelMatMul {
        m: Var,
        x: Var,
    },
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    PixelShuffle(Var, usize),
    PixelUnshuffle(Var, usize),
    Sum(Var),
    Mean(Var),
    SumRows(Var),
    Reshape(Var),
    SwapLeading(Var),
    Dft2Re(Var),
    Dft2Im(Var),
    ComplexAbs(Var, Var),
}

struct Node {
    value: Arc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.push_arc(Arc::new(value), op, requires_grad)
    }

    fn push_arc(&mut self, value: Arc<Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Shared parameter leaf; `trainable` decides whether gradients flow into it.
    pub fn param(&mut self, value: Arc<Tensor>, trainable: bool) -> Var {
        self.push_arc(value, Op::Leaf, trainable)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ---- elementwise -------------------------------------------------------

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let f = match kind {
            Binary::Add => |x: f64, y: f64| x + y,
            Binary::Sub => |x: f64, y: f64| x - y,
            Binary::Mul => |x: f64, y: f64| x * y,
            Binary::Div => |x: f64, y: f64| x / y,
        };
        let out = broadcast_binary(self.value(a), self.value(b), f)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Binary(kind, a, b), rg))
    }

    /// Elementwise sum with broadcasting over size-1 dimensions of equal-rank operands.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v + c);
        let rg = self.rg(&[a]);
        self.push(out, Op::Offset(a), rg)
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let x = self.value(a);
        let out = match kind {
            Unary::Relu => x.map(|v| if v < 0.0 { 0.0 } else { v }),
            Unary::LeakyRelu(s) => x.map(|v| if v > 0.0 { v } else { s * v }),
            Unary::Tanh => x.map(f64::tanh),
            Unary::Sigmoid => x.map(sigmoid),
            Unary::Softplus => x.map(softplus),
            Unary::Exp => x.map(f64::exp),
            Unary::Log => x.map(f64::ln),
            Unary::Sqrt => x.map(f64::sqrt),
            Unary::Square => x.map(|v| v * v),
            Unary::Abs => x.map(f64::abs),
            Unary::Clamp(lo, hi) => x.map(|v| v.clamp(lo, hi)),
        };
        let rg = self.rg(&[a]);
        self.push(out, Op::Unary(kind, a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(slope), a)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.unary(Unary::Log, a)
    }

    /// Square root; the gradient at exactly zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(Unary::Sqrt, a)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Unary::Abs, a)
    }

    /// Clamp into `[lo, hi]`; gradient is passed only inside the closed interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(Unary::Clamp(lo, hi), a)
    }

    // ---- structured ops ----------------------------------------------------

    /// `x[B×n] · wᵀ + b` with `w[m×n]`, `b[m]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(x), self.shape(w));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return dim_err(format!("linear: input {xs:?} vs weights {ws:?}"));
        }
        let (batch, n_in, n_out) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            if self.shape(b) != [n_out] {
                return dim_err(format!(
                    "linear: bias {:?}, expected [{n_out}]",
                    self.shape(b)
                ));
            }
        }
        let mut out = vec![0.0; batch * n_out];
        if let Some(b) = b {
            for row in out.chunks_mut(n_out) {
                row.copy_from_slice(self.value(b).data());
            }
        }
        gemm(
            MatView::new(self.value(x).data(), batch, n_in),
            MatView::new(self.value(w).data(), n_out, n_in).t(),
            &mut out,
            1.0,
        );
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        let t = Tensor::new(&[batch, n_out], out)?;
        Ok(self.push(t, Op::Linear { x, w, b }, rg))
    }

    /// Per-channel matrix product: `m[C×o×i] · x[C×i×N] → [C×o×N]`.
    pub fn channel_matmul(&mut self, m: Var, x: Var) -> Result<Var> {
        let (ms, xs) = (self.shape(m).to_vec(), self.shape(x).to_vec());
        if ms.len() != 3 || xs.len() != 3 || ms[0] != xs[0] || ms[2] != xs[1] {
            return dim_err(format!("channel_matmul: {ms:?} x {xs:?}"));
        }
        let (c, o, i, n) = (ms[0], ms[1], ms[2], xs[2]);
        let mut out = vec![0.0; c * o * n];
        let (mv, xv) = (self.value(m).data(), self.value(x).data());
        for ch in 0..c {
            gemm(
                MatView::new(&mv[ch * o * i..(ch + 1) * o * i], o, i),
                MatView::new(&xv[ch * i * n..(ch + 1) * i * n], i, n),
                &mut out[ch * o * n..(ch + 1) * o * n],
                0.0,
            );
        }
        let rg = self.rg(&[m, x]);
        let t = Tensor::new(&[c, o, n], out)?;
        Ok(self.push(t, Op::ChannelMatMul { m, x }, rg))
    }

    /// Cross-correlation of `x[B×C×H×W]` with `w[O×C×k×k]` plus optional bias `b[O]`.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (xs, ws) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if xs.len() != 4 || ws.len() != 4 || ws[1] != xs[1] || ws[2] != ws[3] {
            return dim_err(format!("conv2d: input {xs:?} vs kernels {ws:?}"));
        }
        let geom = conv_geom(&xs[1..], ws[2], stride, padding)?;
        let (batch, out_c) = (xs[0], ws[0]);
        if let Some(b) = b {
            if self.shape(b) != [out_c] {
                return dim_err(format!(
                    "conv2d: bias {:?}, expected [{out_c}]",
                    self.shape(b)
                ));
            }
        }
        let in_plane = geom.channels * geom.height * geom.width;
        let out_plane = out_c * geom.col_cols();
        let mut out = vec![0.0; batch * out_plane];
        let mut cols = vec![0.0; geom.col_rows() * geom.col_cols()];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        for bi in 0..batch {
            im2col(&xv[bi * in_plane..(bi + 1) * in_plane], &geom, &mut cols);
            let dst = &mut out[bi * out_plane..(bi + 1) * out_plane];
            if let Some(b) = b {
                for (o, row) in dst.chunks_mut(geom.col_cols()).enumerate() {
                    row.fill(self.value(b).data()[o]);
                }
            }
            gemm(
                MatView::new(wv, out_c, geom.col_rows()),
                MatView::new(&cols, geom.col_rows(), geom.col_cols()),
                dst,
                1.0,
            );
        }
        let rg = self.rg(&[x, w]) || b.is_some_and(|b| self.requires_grad(b));
        let t = Tensor::new(&[batch, out_c, geom.out_h, geom.out_w], out)?;
        Ok(self.push(t, Op::Conv2d { x, w, b, geom }, rg))
    }

    /// `[B×(C·r²)×H×W] → [B×C×(H·r)×(W·r)]`.
    pub fn pixel_shuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = pixel_shuffle(self.value(x), r)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::PixelShuffle(x, r), rg))
    }

    /// Inverse of [`Tape::pixel_shuffle`].
    pub fn pixel_unshuffle(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = pixel_unshuffle(self.value(x), r)?;
        let rg = self.rg(&[x]);
        Ok(self.push(out, Op::PixelUnshuffle(x, r), rg))
    }

    // ---- reductions and views ---------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let s = self.value(a).mean();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Sums everything but the leading dimension: `[B×…] → [B×1]`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.rank() < 2 {
            return dim_err(format!("sum_rows needs rank ≥ 2, got {:?}", v.shape()));
        }
        let b = v.shape()[0];
        let per = v.len() / b;
        let sums: Vec<f64> = v.data().chunks(per).map(|r| r.iter().sum()).collect();
        let rg = self.rg(&[a]);
        let t = Tensor::new(&[b, 1], sums)?;
        Ok(self.push(t, Op::SumRows(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Swaps the two leading axes: `[A×B×…] → [B×A×…]`.
    pub fn swap_leading(&mut self, a: Var) -> Result<Var> {
        let out = swap_leading(self.value(a))?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::SwapLeading(a), rg))
    }

    /// Real part of the orthonormal 2-D DFT over the two trailing dimensions.
    pub fn dft2_re(&mut self, a: Var) -> Result<Var> {
        let (h, w) = trailing_plane(self.value(a))?;
        let (re, _) = dft2_planes(self.value(a).data(), h, w);
        let out = Tensor::new(self.shape(a), re)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Dft2Re(a), rg))
    }

    /// Imaginary part of the orthonormal 2-D DFT over the two trailing dimensions.
    pub fn dft2_im(&mut self, a: Var) -> Result<Var> {
        let (h, w) = trailing_plane(self.value(a))?;
        let (_, im) = dft2_planes(self.value(a).data(), h, w);
        let out = Tensor::new(self.shape(a), im)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Dft2Im(a), rg))
    }

    /// Elementwise modulus `sqrt(re² + im²)`; the gradient at a zero modulus is zero.
    pub fn complex_abs(&mut self, re: Var, im: Var) -> Result<Var> {
        let out = self
            .value(re)
            .zip_map(self.value(im), |a, b| (a * a + b * b).sqrt())?;
        let rg = self.rg(&[re, im]);
        Ok(self.push(out, Op::ComplexAbs(re, im), rg))
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse sweep from a scalar `loss`, seeding `d loss / d loss = 1`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return dim_err(format!(
                "backward needs a scalar, got {:?}",
                self.shape(loss)
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            // leaves keep their gradient; interior nodes are released after use
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = &self.nodes[idx].value;
        match self.nodes[idx].op.clone() {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                if self.requires_grad(a) {
                    let ga = match kind {
                        Binary::Add | Binary::Sub => g.clone(),
                        Binary::Mul => broadcast_binary(g, bv, |g, y| g * y)?,
                        Binary::Div => broadcast_binary(g, bv, |g, y| g / y)?,
                    };
                    let ga = reduce_to(&ga, av.shape());
                    self.accumulate(grads, a, ga);
                }
                if self.requires_grad(b) {
                    let gb = match kind {
                        Binary::Add => g.clone(),
                        Binary::Sub => g.map(|v| -v),
                        Binary::Mul => broadcast_binary(g, av, |g, x| g * x)?,
                        Binary::Div => {
                            // d(a/b)/db = -a/b² = -out/b
                            let t = g.zip_map(out, |g, o| -g * o)?;
                            broadcast_binary(&t, bv, |t, y| t / y)?
                        }
                    };
                    let gb = reduce_to(&gb, bv.shape());
                    self.accumulate(grads, b, gb);
                }
            }
            Op::Unary(kind, a) => {
                let x = self.value(a);
                let ga = match kind {
                    Unary::Relu => g.zip_map(x, |g, x| if x > 0.0 { g } else { 0.0 })?,
                    Unary::LeakyRelu(s) => g.zip_map(x, |g, x| if x > 0.0 { g } else { s * g })?,
                    Unary::Tanh => g.zip_map(out, |g, y| g * (1.0 - y * y))?,
                    Unary::Sigmoid => g.zip_map(out, |g, y| g * y * (1.0 - y))?,
                    Unary::Softplus => g.zip_map(x, |g, x| g * sigmoid(x))?,
                    Unary::Exp => g.zip_map(out, |g, y| g * y)?,
                    Unary::Log => g.zip_map(x, |g, x| g / x)?,
                    Unary::Sqrt => {
                        g.zip_map(out, |g, y| if y > 0.0 { g / (2.0 * y) } else { 0.0 })?
                    }
                    Unary::Square => g.zip_map(x, |g, x| 2.0 * g * x)?,
                    Unary::Abs => g.zip_map(x, |g, x| {
                        if x > 0.0 {
                            g
                        } else if x < 0.0 {
                            -g
                        } else {
                            0.0
                        }
                    })?,
                    Unary::Clamp(lo, hi) => {
                        g.zip_map(x, |g, x| if x >= lo && x <= hi { g } else { 0.0 })?
                    }
                };
                self.accumulate(grads, a, ga);
            }
            Op::Scale(a, c) => self.accumulate(grads, a, g.map(|v| v * c)),
            Op::Offset(a) => self.accumulate(grads, a, g.clone()),
            Op::Linear { x, w, b } => {
                let (batch, n_in) = (self.shape(x)[0], self.shape(x)[1]);
                let n_out = self.shape(w)[0];
                if self.requires_grad(x) {
                    let mut gx = vec![0.0; batch * n_in];
                    gemm(
                        MatView::new(g.data(), batch, n_out),
                        MatView::new(self.value(w).data(), n_out, n_in),
                        &mut gx,
                        0.0,
                    );
                    self.accumulate(grads, x, Tensor::new(&[batch, n_in], gx)?);
                }
                if self.requires_grad(w) {
                    let mut gw = vec![0.0; n_out * n_in];
                    gemm(
                        MatView::new(g.data(), batch, n_out).t(),
                        MatView::new(self.value(x).data(), batch, n_in),
                        &mut gw,
                        0.0,
                    );
                    self.accumulate(grads, w, Tensor::new(&[n_out, n_in], gw)?);
                }
                if let Some(b) = b.filter(|b| self.requires_grad(*b)) {
                    let mut gb = vec![0.0; n_out];
                    for row in g.data().chunks(n_out) {
                        for (a, v) in gb.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    self.accumulate(grads, b, Tensor::new(&[n_out], gb)?);
                }
            }
            Op::ChannelMatMul { m, x } => {
                let ms = self.shape(m).to_vec();
                let (c, o, i) = (ms[0], ms[1], ms[2]);
                let n = self.shape(x)[2];
                let (mv, xv) = (self.value(m).data(), self.value(x).data());
                if self.requires_grad(m) {
                    let mut gm = vec![0.0; c * o * i];
                    for ch in 0..c {
                        gemm(
                            MatView::new(&g.data()[ch * o * n..(ch + 1) * o * n], o, n),
                            MatView::new(&xv[ch * i * n..(ch + 1) * i * n], i, n).t(),
                            &mut gm[ch * o * i..(ch + 1) * o * i],
                            0.0,
                        );
                    }
                    self.accumulate(grads, m, Tensor::new(&ms, gm)?);
                }
                if self.requires_grad(x) {
                    let mut gx = vec![0.0; c * i * n];
                    for ch in 0..c {
                        gemm(
                            MatView::new(&mv[ch * o * i..(ch + 1) * o * i], o, i).t(),
                            MatView::new(&g.data()[ch * o * n..(ch + 1) * o * n], o, n),
                            &mut gx[ch * i * n..(ch + 1) * i * n],
                            0.0,
                        );
                    }
                    self.accumulate(grads, x, Tensor::new(&[c, i, n], gx)?);
                }
            }
            Op::Conv2d { x, w, b, geom } => {
                let batch = self.shape(x)[0];
                let out_c = self.shape(w)[0];
                let in_plane = geom.channels * geom.height * geom.width;
                let ncol = geom.col_cols();
                let out_plane = out_c * ncol;
                let xv = self.value(x).data();
                let wv = self.value(w).data();
                let need_x = self.requires_grad(x);
                let need_w = self.requires_grad(w);
                let mut gx = if need_x {
                    vec![0.0; batch * in_plane]
                } else {
                    Vec::new()
                };
                let mut gw = if need_w {
                    vec![0.0; wv.len()]
                } else {
                    Vec::new()
                };
                let mut cols = vec![0.0; geom.col_rows() * ncol];
                let mut gcols = vec![0.0; geom.col_rows() * ncol];
                for bi in 0..batch {
                    let gout = &g.data()[bi * out_plane..(bi + 1) * out_plane];
                    if need_w {
                        im2col(&xv[bi * in_plane..(bi + 1) * in_plane], &geom, &mut cols);
                        gemm(
                            MatView::new(gout, out_c, ncol),
                            MatView::new(&cols, geom.col_rows(), ncol).t(),
                            &mut gw,
                            1.0,
                        );
                    }
                    if need_x {
                        gemm(
                            MatView::new(wv, out_c, geom.col_rows()).t(),
                            MatView::new(gout, out_c, ncol),
                            &mut gcols,
                            0.0,
                        );
                        col2im(&gcols, &geom, &mut gx[bi * in_plane..(bi + 1) * in_plane]);
                    }
                }
                if need_x {
                    self.accumulate(grads, x, Tensor::new(self.shape(x), gx)?);
                }
                if need_w {
                    self.accumulate(grads, w, Tensor::new(self.shape(w), gw)?);
                }
                if let Some(b) = b.filter(|b| self.requires_grad(*b)) {
                    let mut gb = vec![0.0; out_c];
                    for (k, row) in g.data().chunks(ncol).enumerate() {
                        gb[k % out_c] += row.iter().sum::<f64>();
                    }
                    self.accumulate(grads, b, Tensor::new(&[out_c], gb)?);
                }
            }
            Op::PixelShuffle(a, r) => self.accumulate(grads, a, pixel_unshuffle(g, r)?),
            Op::PixelUnshuffle(a, r) => self.accumulate(grads, a, pixel_shuffle(g, r)?),
            Op::Sum(a) => {
                let v = g.item();
                self.accumulate(grads, a, Tensor::full(self.shape(a), v));
            }
            Op::Mean(a) => {
                let v = g.item() / self.value(a).len() as f64;
                self.accumulate(grads, a, Tensor::full(self.shape(a), v));
            }
            Op::SumRows(a) => {
                let shape = self.shape(a).to_vec();
                let per = self.value(a).len() / shape[0];
                let mut ga = Vec::with_capacity(self.value(a).len());
                for &gv in g.data() {
                    ga.extend(std::iter::repeat_n(gv, per));
                }
                self.accumulate(grads, a, Tensor::new(&shape, ga)?);
            }
            Op::Reshape(a) => {
                let ga = g.reshape(self.shape(a))?;
                self.accumulate(grads, a, ga);
            }
            Op::SwapLeading(a) => self.accumulate(grads, a, swap_leading(g)?),
            Op::Dft2Re(a) => {
                let (h, w) = trailing_plane(g)?;
                let (re, _) = dft2_planes(g.data(), h, w);
                self.accumulate(grads, a, Tensor::new(g.shape(), re)?);
            }
            Op::Dft2Im(a) => {
                let (h, w) = trailing_plane(g)?;
                let (_, im) = dft2_planes(g.data(), h, w);
                self.accumulate(grads, a, Tensor::new(g.shape(), im)?);
            }
            Op::ComplexAbs(re, im) => {
                let (rv, iv) = (self.value(re), self.value(im));
                let ratio = |num: &Tensor| -> Result<Tensor> {
                    let t = g.zip_map(out, |g, m| if m > 0.0 { g / m } else { 0.0 })?;
                    t.zip_map(num, |t, n| t * n)
                };
                if self.requires_grad(re) {
                    let gr = ratio(rv)?;
                    self.accumulate(grads, re, gr);
                }
                if self.requires_grad(im) {
                    let gi = ratio(iv)?;
                    self.accumulate(grads, im, gi);
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn trailing_plane(t: &Tensor) -> Result<(usize, usize)> {
    let s = t.shape();
    if s.len() < 2 {
        return dim_err(format!("dft2d needs rank ≥ 2, got {s:?}"));
    }
    Ok((s[s.len() - 2], s[s.len() - 1]))
}

pub(crate) fn conv_geom(
    chw: &[usize],
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<ConvGeom> {
    let (c, h, w) = (chw[0], chw[1], chw[2]);
    if stride == 0 || kernel == 0 {
        return dim_err("conv2d: stride and kernel must be positive");
    }
    if padding >= kernel {
        return dim_err(format!(
            "conv2d: padding {padding} must be below kernel {kernel}"
        ));
    }
    if h + 2 * padding < kernel || w + 2 * padding < kernel {
        return dim_err(format!(
            "conv2d: {h}x{w} input smaller than kernel {kernel}"
        ));
    }
    Ok(ConvGeom {
        channels: c,
        height: h,
        width: w,
        kernel,
        stride,
        padding,
        out_h: (h + 2 * padding - kernel) / stride + 1,
        out_w: (w + 2 * padding - kernel) / stride + 1,
    })
}

pub(crate) fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 || r == 0 || !s[1].is_multiple_of(r * r) {
        return dim_err(format!("pixel_shuffle: shape {s:?} with factor {r}"));
    }
    let (b, cin, h, w) = (s[0], s[1], s[2], s[3]);
    let c = cin / (r * r);
    let mut out = vec![0.0; x.len()];
    let xv = x.data();
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let src_c = ci * r * r + i * r + j;
                    for y in 0..h {
                        let src = &xv[((bi * cin + src_c) * h + y) * w..][..w];
                        let row = ((bi * c + ci) * h * r + y * r + i) * w * r;
                        for (xx, &v) in src.iter().enumerate() {
                            out[row + xx * r + j] = v;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[b, c, h * r, w * r], out)
}

pub(crate) fn pixel_unshuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let s = x.shape();
    if s.len() != 4 || r == 0 || !s[2].is_multiple_of(r) || !s[3].is_multiple_of(r) {
        return dim_err(format!("pixel_unshuffle: shape {s:?} with factor {r}"));
    }
    let (b, c, hr, wr) = (s[0], s[1], s[2], s[3]);
    let (h, w) = (hr / r, wr / r);
    let cout = c * r * r;
    let mut out = vec![0.0; x.len()];
    let xv = x.data();
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let dst_c = ci * r * r + i * r + j;
                    for y in 0..h {
                        let row = ((bi * c + ci) * hr + y * r + i) * wr;
                        let dst = &mut out[((bi * cout + dst_c) * h + y) * w..][..w];
                        for (xx, d) in dst.iter_mut().enumerate() {
                            *d = xv[row + xx * r + j];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[b, cout, h, w], out)
}

fn swap_leading(x: &Tensor) -> Result<Tensor> {
    let s = x.shape();
    if s.len() < 2 {
        return dim_err(format!("swap_leading needs rank ≥ 2, got {s:?}"));
    }
    let (a, b) = (s[0], s[1]);
    let inner = x.len() / (a * b);
    let mut out = vec![0.0; x.len()];
    for i in 0..a {
        for j in 0..b {
            let src = &x.data()[(i * b + j) * inner..][..inner];
            out[(j * a + i) * inner..][..inner].copy_from_slice(src);
        }
    }
    let mut shape = s.to_vec();
    shape.swap(0, 1);
    Tensor::new(&shape, out)
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return dim_err(format!("broadcast: rank mismatch {a:?} vs {b:?}"));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => dim_err(format!("broadcast: {a:?} vs {b:?}")),
        })
        .collect()
}

fn strides_for(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for d in (0..shape.len()).rev() {
        strides[d] = if shape[d] == 1 && out[d] != 1 { 0 } else { acc };
        acc *= shape[d];
    }
    strides
}

/// Visits every output coordinate with the matching flat offsets into `a` and `b`.
fn for_each_broadcast(
    out: &[usize],
    a: &[usize],
    b: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let sa = strides_for(a, out);
    let sb = strides_for(b, out);
    let n: usize = out.iter().product();
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    for o in 0..n {
        f(o, ia, ib);
        for d in (0..rank).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

fn broadcast_binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let out_shape = broadcast_shape(a.shape(), b.shape())?;
    let mut out = vec![0.0; out_shape.iter().product()];
    let (av, bv) = (a.data(), b.data());
    for_each_broadcast(&out_shape, a.shape(), b.shape(), |o, ia, ib| {
        out[o] = f(av[ia], bv[ib]);
    });
    Tensor::new(&out_shape, out)
}

/// Sums a broadcast gradient back down to `target` shape.
fn reduce_to(g: &Tensor, target: &[usize]) -> Tensor {
    if g.shape() == target {
        return g.clone();
    }
    let mut out = vec![0.0; target.iter().product()];
    let gv = g.data();
    for_each_broadcast(g.shape(), g.shape(), target, |o, _, it| {
        out[it] += gv[o];
    });
    Tensor::new(target, out).expect("reduced shape is valid")
}
