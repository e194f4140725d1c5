//! Analog/digital allocation: hyper codec, residual split, analog channel codec and fusion.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{dim_err, HdaError, Result};
use crate::nn::{Binding, Conv2d, Linear, ParamStore, Tape, Tensor, Var, LEAKY_SLOPE};

/// Spatial downsampling of the hyper encoder.
pub const HYPER_DOWNSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QuantMode {
    /// Additive `U(−½, ½)` noise as a differentiable stand-in for rounding.
    Train,
    /// Rounding half away from zero.
    Infer,
    /// No quantization at all.
    Identity,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HyperCodec {
    pub latent: usize,
    pub hidden: usize,
    pub digital: usize,
}

/// Tape handles produced by [`HyperCodec::allocate`].
#[derive(Clone, Copy, Debug)]
pub struct Allocation {
    pub z_d: Var,
    pub z_d_tilde: Var,
    pub coarse: Var,
    pub z_a: Var,
}

impl HyperCodec {
    pub fn new(latent: usize, hidden: usize, digital: usize) -> Self {
        HyperCodec {
            latent,
            hidden,
            digital,
        }
    }

    fn layers(&self) -> [Conv2d; 4] {
        [
            Conv2d::new("hyper_enc.conv1", self.latent, self.hidden, 3, 2),
            Conv2d::new("hyper_enc.conv2", self.hidden, self.digital, 3, 2),
            Conv2d::new("hyper_dec.conv1", self.digital, 4 * self.hidden, 3, 1),
            Conv2d::new("hyper_dec.conv2", self.hidden, 4 * self.latent, 3, 1),
        ]
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for l in &self.layers() {
            l.init(store, rng);
        }
    }

    /// Digital layout for a `latent × h × w` feature grid.
    pub fn digital_shape(&self, h: usize, w: usize) -> Result<[usize; 3]> {
        if !h.is_multiple_of(HYPER_DOWNSAMPLE) || !w.is_multiple_of(HYPER_DOWNSAMPLE) {
            return dim_err(format!(
                "feature grid {h}×{w} is not divisible by {HYPER_DOWNSAMPLE}"
            ));
        }
        Ok([self.digital, h / HYPER_DOWNSAMPLE, w / HYPER_DOWNSAMPLE])
    }

    pub fn encode(&self, tape: &mut Tape, bind: &Binding, z: Var) -> Result<Var> {
        let s = tape.shape(z).to_vec();
        if s.len() != 4 || s[1] != self.latent {
            return dim_err(format!(
                "hyper encoder expects B×{}×h×w, got {s:?}",
                self.latent
            ));
        }
        self.digital_shape(s[2], s[3])?;
        let [e1, e2, _, _] = self.layers();
        let h = e1.forward(tape, bind, z)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE);
        e2.forward(tape, bind, h)
    }

    pub fn decode(&self, tape: &mut Tape, bind: &Binding, z_d: Var) -> Result<Var> {
        let s = tape.shape(z_d).to_vec();
        if s.len() != 4 || s[1] != self.digital {
            return dim_err(format!(
                "hyper decoder expects B×{}×h×w, got {s:?}",
                self.digital
            ));
        }
        let [_, _, d1, d2] = self.layers();
        let h = d1.forward(tape, bind, z_d)?;
        let h = tape.pixel_shuffle(h, 2)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE);
        let h = d2.forward(tape, bind, h)?;
        tape.pixel_shuffle(h, 2)
    }

    /// `z_D = H(z)`, `z̃_D = Q(z_D)`, `z̃ = H⁻¹(z̃_D)`, `z_A = z − z̃`.
    pub fn allocate(
        &self,
        tape: &mut Tape,
        bind: &Binding,
        z: Var,
        mode: QuantMode,
        rng: &mut impl Rng,
    ) -> Result<Allocation> {
        let z_d = self.encode(tape, bind, z)?;
        let z_d_tilde = match mode {
            QuantMode::Identity => z_d,
            QuantMode::Infer => {
                let r = tape.value(z_d).map(f64::round);
                tape.constant(r)
            }
            QuantMode::Train => {
                let shape = tape.shape(z_d).to_vec();
                let n: usize = shape.iter().product();
                let u = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
                let u = tape.constant(Tensor::new(&shape, u)?);
                tape.add(z_d, u)?
            }
        };
        let coarse = self.decode(tape, bind, z_d_tilde)?;
        let z_a = tape.sub(z, coarse)?;
        Ok(Allocation {
            z_d,
            z_d_tilde,
            coarse,
            z_a,
        })
    }

    /// `ẑ = H⁻¹(ẑ_D) + ẑ_A`.
    pub fn fuse(&self, tape: &mut Tape, bind: &Binding, z_a_hat: Var, z_d_hat: Var) -> Result<Var> {
        let coarse = self.decode(tape, bind, z_d_hat)?;
        if tape.shape(coarse) != tape.shape(z_a_hat) {
            return dim_err(format!(
                "analog part {:?} does not match coarse layout {:?}",
                tape.shape(z_a_hat),
                tape.shape(coarse)
            ));
        }
        tape.add(coarse, z_a_hat)
    }
}

/// Dense analog channel codec mapping a flattened residual to `L_A` complex symbols.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnalogCodec {
    pub input_dim: usize,
    pub hidden: usize,
    pub symbols: usize,
}

impl AnalogCodec {
    pub fn new(input_dim: usize, hidden: usize, symbols: usize) -> Self {
        AnalogCodec {
            input_dim,
            hidden,
            symbols,
        }
    }

    fn layers(&self) -> [Linear; 4] {
        [
            Linear::new("analog_enc.fc1", self.input_dim, self.hidden),
            Linear::new("analog_enc.fc2", self.hidden, 2 * self.symbols),
            Linear::new("analog_dec.fc1", 2 * self.symbols, self.hidden),
            Linear::new("analog_dec.fc2", self.hidden, self.input_dim),
        ]
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for l in &self.layers() {
            l.init(store, rng);
        }
        // start the decoder near zero output; the residual it reconstructs is small
        let w = store.get_mut("analog_dec.fc2.w").expect("just inserted");
        for v in w.data_mut() {
            *v *= 0.1;
        }
    }

    /// Maps `z_A` (`B×…`, flattened per sample) to `B×2L_A` interleaved (re, im) values with
    /// unit mean symbol power per sample.
    pub fn encode(&self, tape: &mut Tape, bind: &Binding, z_a: Var) -> Result<Var> {
        Ok(self.encode_parts(tape, bind, z_a)?.1)
    }

    /// Pre-normalization output and the normalized frame.
    fn encode_parts(&self, tape: &mut Tape, bind: &Binding, z_a: Var) -> Result<(Var, Var)> {
        let s = tape.shape(z_a).to_vec();
        let b = s[0];
        if s[1..].iter().product::<usize>() != self.input_dim {
            return dim_err(format!(
                "analog encoder expects {} values per sample, got {s:?}",
                self.input_dim
            ));
        }
        let x = tape.reshape(z_a, &[b, self.input_dim])?;
        let [f1, f2, _, _] = self.layers();
        let h = f1.forward(tape, bind, x)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE);
        let y = f2.forward(tape, bind, h)?;
        let sq = tape.square(y);
        let energy = tape.sum_rows(sq)?;
        if tape.value(energy).data().iter().any(|&e| !(e > 0.0)) {
            return Err(HdaError::DegenerateFrame(
                "analog encoder produced a zero-power frame".into(),
            ));
        }
        let norm = tape.sqrt(energy);
        let x = tape.div(y, norm)?;
        Ok((y, tape.scale(x, (self.symbols as f64).sqrt())))
    }

    /// Inverse map from `B×2L_A` interleaved values to `B×layout`.
    pub fn decode(&self, tape: &mut Tape, bind: &Binding, x: Var, layout: &[usize]) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        if s.len() != 2 || s[1] != 2 * self.symbols {
            return dim_err(format!(
                "analog decoder expects B×{}, got {s:?}",
                2 * self.symbols
            ));
        }
        let [_, _, f1, f2] = self.layers();
        let h = f1.forward(tape, bind, x)?;
        let h = tape.leaky_relu(h, LEAKY_SLOPE);
        let y = f2.forward(tape, bind, h)?;
        let mut shape = vec![s[0]];
        shape.extend_from_slice(layout);
        tape.reshape(y, &shape)
    }
}

/// Interleaved (re, im) reals → complex symbols.
pub fn to_complex(interleaved: &[f64]) -> Vec<Complex64> {
    interleaved
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect()
}

pub fn to_interleaved(symbols: &[Complex64]) -> Vec<f64> {
    symbols.iter().flat_map(|s| [s.re, s.im]).collect()
}

/// An analog frame of `L_A` complex symbols after power normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalogFrame {
    pub symbols: Vec<Complex64>,
    /// Mean `|x|²` before normalization.
    pub raw_power: f64,
}

/// Single-sample analog encoding with the pre-normalization power reported.
pub fn analog_encode(codec: &AnalogCodec, store: &ParamStore, z_a: &Tensor) -> Result<AnalogFrame> {
    let mut tape = Tape::new();
    let bind = store.bind(&mut tape, |_| false);
    let mut shape = vec![1];
    shape.extend_from_slice(z_a.shape());
    let x = tape.constant(z_a.reshape(&shape)?);
    let (y, out) = codec.encode_parts(&mut tape, &bind, x)?;
    let symbols = to_complex(tape.value(out).data());
    let raw_power = tape.value(y).sum_squares() / codec.symbols as f64;
    Ok(AnalogFrame { symbols, raw_power })
}

pub fn analog_decode(
    codec: &AnalogCodec,
    store: &ParamStore,
    x_hat: &[Complex64],
    layout: &[usize],
) -> Result<Tensor> {
    if x_hat.len() != codec.symbols {
        return dim_err(format!(
            "expected {} analog symbols, got {}",
            codec.symbols,
            x_hat.len()
        ));
    }
    let mut tape = Tape::new();
    let bind = store.bind(&mut tape, |_| false);
    let x = tape.constant(Tensor::new(&[1, 2 * codec.symbols], to_interleaved(x_hat))?);
    let out = codec.decode(&mut tape, &bind, x, layout)?;
    tape.value(out).reshape(layout)
}

/// `E‖z − ẑ‖ + λ_z·E‖z − z̃‖²` over the batch; `squared` switches the first term to `‖·‖²`.
pub fn loss_channel_distortion(
    tape: &mut Tape,
    z: Var,
    z_hat: Var,
    coarse: Var,
    lambda_z: f64,
    squared: bool,
) -> Result<Var> {
    if tape.shape(z) != tape.shape(z_hat) || tape.shape(z) != tape.shape(coarse) {
        return dim_err("channel distortion inputs must share one layout");
    }
    let d = tape.sub(z, z_hat)?;
    let d2 = tape.square(d);
    let per = tape.sum_rows(d2)?;
    let first = if squared { per } else { tape.sqrt(per) };
    let first = tape.mean(first);
    if lambda_z == 0.0 {
        return Ok(first);
    }
    let c = tape.sub(z, coarse)?;
    let c2 = tape.square(c);
    let per_c = tape.sum_rows(c2)?;
    let second = tape.mean(per_c);
    let second = tape.scale(second, lambda_z);
    tape.add(first, second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn random(shape: &[usize], seed: u64, scale: f64) -> Tensor {
        let mut rng = seeded(seed);
        let n = shape.iter().product();
        Tensor::new(
            shape,
            (0..n)
                .map(|_| scale * rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    fn hyper() -> (HyperCodec, ParamStore) {
        let h = HyperCodec::new(16, 12, 8);
        let mut s = ParamStore::new();
        h.init(&mut s, &mut seeded(1));
        (h, s)
    }

    fn run_alloc(
        h: &HyperCodec,
        s: &ParamStore,
        z: &Tensor,
        mode: QuantMode,
        seed: u64,
    ) -> (Tensor, Tensor, Tensor, Tensor) {
        let mut tape = Tape::new();
        let bind = s.bind(&mut tape, |_| false);
        let zv = tape.constant(z.clone());
        let a = h
            .allocate(&mut tape, &bind, zv, mode, &mut seeded(seed))
            .unwrap();
        (
            tape.value(a.z_d).clone(),
            tape.value(a.z_d_tilde).clone(),
            tape.value(a.coarse).clone(),
            tape.value(a.z_a).clone(),
        )
    }

    #[test]
    fn digital_size() {
        let (h, s) = hyper();
        let z = random(&[1, 16, 8, 8], 2, 1.0);
        let (zd, ..) = run_alloc(&h, &s, &z, QuantMode::Infer, 0);
        assert_eq!(zd.shape(), &[1, 8, 2, 2]);
        assert_eq!(zd.len(), 32);
    }

    #[test]
    fn zero_in_zero_out() {
        let (h, s) = hyper();
        let z = Tensor::zeros(&[1, 16, 8, 8]);
        let (zd, _, coarse, _) = run_alloc(&h, &s, &z, QuantMode::Identity, 0);
        assert!(zd.data().iter().all(|&v| v == 0.0));
        assert!(coarse.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_identity_all_modes() {
        let (h, s) = hyper();
        let z = random(&[2, 16, 8, 8], 3, 5.0);
        for mode in [QuantMode::Train, QuantMode::Infer, QuantMode::Identity] {
            let (_, _, coarse, za) = run_alloc(&h, &s, &z, mode, 4);
            let back = za.zip_map(&coarse, |a, c| a + c).unwrap();
            // z_A = z − z̃ is computed once, so z_A + z̃ equals z up to a single rounding
            for (x, y) in back.data().iter().zip(z.data()) {
                assert!((x - y).abs() <= 4.0 * f64::EPSILON * y.abs().max(1.0));
            }
        }
    }

    #[test]
    fn infer_rounds_and_train_noise_is_seeded() {
        let (h, s) = hyper();
        let z = random(&[1, 16, 8, 8], 5, 20.0);
        let (zd, zdt, ..) = run_alloc(&h, &s, &z, QuantMode::Infer, 0);
        assert_eq!(zdt, zd.map(f64::round));
        let (_, a, ..) = run_alloc(&h, &s, &z, QuantMode::Train, 9);
        let (_, b, ..) = run_alloc(&h, &s, &z, QuantMode::Train, 9);
        assert_eq!(a, b);
        assert!(a
            .zip_map(&zd, |x, y| (x - y).abs())
            .unwrap()
            .data()
            .iter()
            .all(|&d| d <= 0.5));
    }

    #[test]
    fn fusion_inverts_noiseless_allocation() {
        let (h, s) = hyper();
        let z = random(&[1, 16, 8, 8], 6, 3.0);
        let mut tape = Tape::new();
        let bind = s.bind(&mut tape, |_| false);
        let zv = tape.constant(z.clone());
        let a = h
            .allocate(&mut tape, &bind, zv, QuantMode::Identity, &mut seeded(0))
            .unwrap();
        let fused = h.fuse(&mut tape, &bind, a.z_a, a.z_d_tilde).unwrap();
        for (x, y) in tape.value(fused).data().iter().zip(z.data()) {
            assert!((x - y).abs() <= 4.0 * f64::EPSILON * y.abs().max(1.0));
        }
        // zero analog part leaves only the coarse reconstruction
        let zero = tape.constant(Tensor::zeros(&[1, 16, 8, 8]));
        let only = h.fuse(&mut tape, &bind, zero, a.z_d_tilde).unwrap();
        assert_eq!(tape.value(only), tape.value(a.coarse));
    }

    #[test]
    fn analog_frame_unit_power() {
        let codec = AnalogCodec::new(64, 32, 24);
        let mut s = ParamStore::new();
        codec.init(&mut s, &mut seeded(7));
        let za = random(&[4, 4, 4], 8, 2.0);
        let f = analog_encode(&codec, &s, &za).unwrap();
        assert_eq!(f.symbols.len(), 24);
        let p = f.symbols.iter().map(|c| c.norm_sqr()).sum::<f64>() / 24.0;
        assert!((p - 1.0).abs() < 1e-9);
        let f2 = analog_encode(&codec, &s, &za.map(|v| 2.0 * v)).unwrap();
        let p2 = f2.symbols.iter().map(|c| c.norm_sqr()).sum::<f64>() / 24.0;
        assert!((p2 - 1.0).abs() < 1e-9);
        assert!((f2.raw_power - f.raw_power).abs() > 1e-6);
        let back = analog_decode(&codec, &s, &f.symbols, &[4, 4, 4]).unwrap();
        assert_eq!(back.shape(), &[4, 4, 4]);
        assert_eq!(
            back,
            analog_decode(&codec, &s, &f.symbols, &[4, 4, 4]).unwrap()
        );
        assert!(analog_decode(&codec, &s, &f.symbols[..3], &[4, 4, 4]).is_err());
    }

    #[test]
    fn zero_power_frame_is_degenerate() {
        let codec = AnalogCodec::new(4, 3, 2);
        let mut s = ParamStore::new();
        codec.init(&mut s, &mut seeded(7));
        // zero input with zero biases gives an all-zero pre-normalization frame
        assert!(matches!(
            analog_encode(&codec, &s, &Tensor::zeros(&[4])),
            Err(HdaError::DegenerateFrame(_))
        ));
    }

    #[test]
    fn channel_distortion_by_hand() {
        let z = random(&[1, 16], 10, 1.0);
        let zh = random(&[1, 16], 11, 1.0);
        let c = random(&[1, 16], 12, 1.0);
        let mut tape = Tape::new();
        let (a, b, d) = (
            tape.constant(z.clone()),
            tape.constant(zh.clone()),
            tape.constant(c.clone()),
        );
        let l = loss_channel_distortion(&mut tape, a, b, d, 0.1, false).unwrap();
        let n1 = z
            .data()
            .iter()
            .zip(zh.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let n2 = z
            .data()
            .iter()
            .zip(c.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>();
        assert!((tape.value(l).item() - (n1 + 0.1 * n2)).abs() < 1e-12);
        let l0 = loss_channel_distortion(&mut tape, a, b, d, 0.0, false).unwrap();
        assert!((tape.value(l0).item() - n1).abs() < 1e-12);
        let zero = loss_channel_distortion(&mut tape, a, a, a, 0.1, false).unwrap();
        assert_eq!(tape.value(zero).item(), 0.0);
    }
}
