//! Convolutional semantic encoder/decoder and the semantic distortion loss.

use rand::Rng;

use crate::error::{dim_err, Result};
use crate::nn::{Binding, Conv2d, ParamStore, Tape, Tensor, Var};

/// Spatial downsampling of the semantic encoder.
pub const SEMANTIC_DOWNSAMPLE: usize = 4;

/// An RGB image with values in `[0, 1]`, stored `3×H×W`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub pixels: Tensor,
    pub source: String,
}

impl ImageSample {
    pub fn new(pixels: Tensor, source: impl Into<String>) -> Result<Self> {
        let s = pixels.shape();
        if s.len() != 3 || s[0] != 3 {
            return dim_err(format!("image must be 3×H×W, got {s:?}"));
        }
        if s[1] < 8 || s[2] < 8 {
            return dim_err(format!("image {}×{} is smaller than 8×8", s[1], s[2]));
        }
        if pixels.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return dim_err("pixel values must lie in [0, 1]");
        }
        Ok(ImageSample {
            pixels,
            source: source.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }
}

/// Feature tensor `channels × h × w`, flattened row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticFeatures {
    pub z: Tensor,
}

impl SemanticFeatures {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn layout(&self) -> &[usize] {
        self.z.shape()
    }
}

/// Stacks images into a `B×3×H×W` batch.
pub fn batch_images(images: &[&ImageSample]) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return dim_err("empty image batch");
    };
    let shape = first.pixels.shape().to_vec();
    let mut data = Vec::with_capacity(images.len() * first.pixels.len());
    for im in images {
        if im.pixels.shape() != shape.as_slice() {
            return dim_err("images in a batch must share one size");
        }
        data.extend_from_slice(im.pixels.data());
    }
    Tensor::new(&[images.len(), shape[0], shape[1], shape[2]], data)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticCodec {
    pub hidden: [usize; 2],
    pub latent: usize,
}

impl SemanticCodec {
    pub fn new(hidden: [usize; 2], latent: usize) -> Self {
        SemanticCodec { hidden, latent }
    }

    fn enc_layers(&self) -> [Conv2d; 5] {
        let [c1, c2] = self.hidden;
        [
            Conv2d::new("sem_enc.conv1", 3, c1, 3, 2),
            Conv2d::new("sem_enc.conv2", c1, c1, 3, 1),
            Conv2d::new("sem_enc.conv3", c1, c2, 3, 2),
            Conv2d::new("sem_enc.conv4", c2, self.latent, 3, 1),
            Conv2d::new("sem_enc.skip", c1, self.latent, 1, 2),
        ]
    }

    fn dec_layers(&self) -> [Conv2d; 5] {
        let [c1, c2] = self.hidden;
        let out = 3 * SEMANTIC_DOWNSAMPLE * SEMANTIC_DOWNSAMPLE;
        [
            Conv2d::new("sem_dec.conv1", self.latent, c2, 3, 1),
            Conv2d::new("sem_dec.conv2", c2, c1, 3, 1),
            Conv2d::new("sem_dec.conv3", c1, c1, 3, 1),
            Conv2d::new("sem_dec.conv4", c1, out, 3, 1),
            Conv2d::new("sem_dec.skip", self.latent, out, 1, 1),
        ]
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        for l in self.enc_layers().iter().chain(&self.dec_layers()) {
            l.init(store, rng);
        }
        // start the decoder at mid-gray
        let b = store.get_mut("sem_dec.conv4.b").expect("just inserted");
        b.data_mut().fill(0.5);
    }

    /// Feature grid for an `H×W` image.
    pub fn feature_shape(&self, height: usize, width: usize) -> Result<[usize; 3]> {
        if !height.is_multiple_of(SEMANTIC_DOWNSAMPLE) || !width.is_multiple_of(SEMANTIC_DOWNSAMPLE)
        {
            return dim_err(format!(
                "image {height}×{width} is not divisible by {SEMANTIC_DOWNSAMPLE}"
            ));
        }
        Ok([
            self.latent,
            height / SEMANTIC_DOWNSAMPLE,
            width / SEMANTIC_DOWNSAMPLE,
        ])
    }

    /// `z = S(I)` for a `B×3×H×W` batch.
    pub fn encode(&self, tape: &mut Tape, bind: &Binding, images: Var) -> Result<Var> {
        let s = tape.shape(images).to_vec();
        if s.len() != 4 || s[1] != 3 {
            return dim_err(format!("encoder expects B×3×H×W, got {s:?}"));
        }
        self.feature_shape(s[2], s[3])?;
        let [c1, c2, c3, c4, skip] = self.enc_layers();
        let h1 = c1.forward(tape, bind, images)?;
        let h1 = tape.relu(h1);
        let h = c2.forward(tape, bind, h1)?;
        let h = tape.relu(h);
        let h = c3.forward(tape, bind, h)?;
        let h = tape.relu(h);
        let deep = c4.forward(tape, bind, h)?;
        let shallow = skip.forward(tape, bind, h1)?;
        tape.add(deep, shallow)
    }

    /// `Î = S⁻¹(ẑ)`, clamped to `[0, 1]`.
    pub fn decode(&self, tape: &mut Tape, bind: &Binding, z: Var) -> Result<Var> {
        let s = tape.shape(z).to_vec();
        if s.len() != 4 || s[1] != self.latent {
            return dim_err(format!("decoder expects B×{}×h×w, got {s:?}", self.latent));
        }
        let [c1, c2, c3, c4, skip] = self.dec_layers();
        let h = c1.forward(tape, bind, z)?;
        let h = tape.relu(h);
        let h = c2.forward(tape, bind, h)?;
        let h = tape.relu(h);
        let h = c3.forward(tape, bind, h)?;
        let h = tape.relu(h);
        let deep = c4.forward(tape, bind, h)?;
        let shallow = skip.forward(tape, bind, z)?;
        let out = tape.add(deep, shallow)?;
        let out = tape.pixel_shuffle(out, SEMANTIC_DOWNSAMPLE)?;
        Ok(tape.clamp(out, 0.0, 1.0))
    }

    pub fn encode_image(
        &self,
        image: &ImageSample,
        store: &ParamStore,
    ) -> Result<SemanticFeatures> {
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, |_| false);
        let x = tape.constant(batch_images(&[image])?);
        let z = self.encode(&mut tape, &bind, x)?;
        let v = tape.value(z);
        Ok(SemanticFeatures {
            z: v.reshape(&v.shape()[1..])?,
        })
    }

    pub fn decode_features(
        &self,
        features: &SemanticFeatures,
        store: &ParamStore,
    ) -> Result<ImageSample> {
        let s = features.layout();
        if s.len() != 3 || s[0] != self.latent {
            return dim_err(format!("feature layout {s:?} does not match the decoder"));
        }
        let mut tape = Tape::new();
        let bind = store.bind(&mut tape, |_| false);
        let z = tape.constant(features.z.reshape(&[1, s[0], s[1], s[2]])?);
        let out = self.decode(&mut tape, &bind, z)?;
        let v = tape.value(out);
        ImageSample::new(v.reshape(&v.shape()[1..])?, "decoded")
    }
}

/// `MSE(I, Î) + λ_F · mean |F(I) − F(Î)|` with the orthonormal 2-D DFT taken per colour plane.
pub fn loss_semantic_distortion(
    tape: &mut Tape,
    original: Var,
    recon: Var,
    lambda_f: f64,
) -> Result<Var> {
    semantic_loss(tape, original, recon, lambda_f, true)
}

/// Rec. 601 luma weights used when the Fourier term is taken on luminance only.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// [`loss_semantic_distortion`] with the Fourier term either per colour plane or on luminance.
pub fn semantic_loss(
    tape: &mut Tape,
    original: Var,
    recon: Var,
    lambda_f: f64,
    per_channel: bool,
) -> Result<Var> {
    if tape.shape(original) != tape.shape(recon) {
        return dim_err(format!(
            "loss inputs differ: {:?} vs {:?}",
            tape.shape(original),
            tape.shape(recon)
        ));
    }
    let d = tape.sub(recon, original)?;
    let sq = tape.square(d);
    let mse = tape.mean(sq);
    if lambda_f == 0.0 {
        return Ok(mse);
    }
    let planes = if per_channel {
        d
    } else {
        if tape.shape(d).len() != 4 || tape.shape(d)[1] != 3 {
            return dim_err("luminance Fourier term needs B×3×H×W inputs");
        }
        let w = tape.constant(Tensor::new(&[1, 3, 1, 1], LUMA.to_vec())?);
        tape.conv2d(d, w, None, 1, 0)?
    };
    let re = tape.dft2_re(planes)?;
    let im = tape.dft2_im(planes)?;
    let m = tape.complex_abs(re, im)?;
    let f = tape.mean(m);
    let f = tape.scale(f, lambda_f);
    tape.add(mse, f)
}

/// Scalar evaluation of [`loss_semantic_distortion`].
pub fn semantic_distortion(original: &Tensor, recon: &Tensor, lambda_f: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(original.clone());
    let b = tape.constant(recon.clone());
    let l = loss_semantic_distortion(&mut tape, a, b, lambda_f)?;
    Ok(tape.value(l).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dft2d;
    use crate::rng::seeded;
    use rand::Rng;

    fn codec() -> (SemanticCodec, ParamStore) {
        let c = SemanticCodec::new([8, 8], 16);
        let mut s = ParamStore::new();
        c.init(&mut s, &mut seeded(1));
        (c, s)
    }

    fn random_image(seed: u64, h: usize) -> ImageSample {
        let mut rng = seeded(seed);
        let d = (0..3 * h * h).map(|_| rng.random::<f64>()).collect();
        ImageSample::new(Tensor::new(&[3, h, h], d).unwrap(), "rand").unwrap()
    }

    #[test]
    fn feature_size_for_32px() {
        let (c, s) = codec();
        let f = c.encode_image(&random_image(2, 32), &s).unwrap();
        assert_eq!(f.layout(), &[16, 8, 8]);
        assert_eq!(f.len(), 1024);
    }

    #[test]
    fn encoding_is_deterministic() {
        let (c, s) = codec();
        let im = random_image(3, 16);
        assert_eq!(
            c.encode_image(&im, &s).unwrap(),
            c.encode_image(&im, &s).unwrap()
        );
    }

    #[test]
    fn zero_image_maps_to_zero_features() {
        let (c, s) = codec();
        let im = ImageSample::new(Tensor::zeros(&[3, 16, 16]), "zero").unwrap();
        assert!(c
            .encode_image(&im, &s)
            .unwrap()
            .z
            .data()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn decoder_output_in_unit_range() {
        let (c, s) = codec();
        let mut rng = seeded(4);
        let z = Tensor::new(
            &[16, 4, 4],
            (0..256).map(|_| rng.random_range(-20.0..20.0)).collect(),
        )
        .unwrap();
        let f = SemanticFeatures { z };
        let a = c.decode_features(&f, &s).unwrap();
        assert!(a.pixels.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, c.decode_features(&f, &s).unwrap());
    }

    #[test]
    fn bad_sizes_are_rejected() {
        let (c, s) = codec();
        let im = ImageSample::new(Tensor::zeros(&[3, 10, 10]), "odd").unwrap();
        assert!(c.encode_image(&im, &s).is_err());
        let f = SemanticFeatures {
            z: Tensor::zeros(&[8, 4, 4]),
        };
        assert!(c.decode_features(&f, &s).is_err());
        assert!(ImageSample::new(Tensor::full(&[3, 8, 8], 1.5), "x").is_err());
    }

    #[test]
    fn loss_zero_on_identical() {
        let im = random_image(5, 8).pixels;
        assert_eq!(semantic_distortion(&im, &im, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn loss_without_fourier_is_mse() {
        let a = random_image(6, 8).pixels;
        let b = random_image(7, 8).pixels;
        let mse = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            / a.len() as f64;
        assert!((semantic_distortion(&a, &b, 0.0).unwrap() - mse).abs() < 1e-15);
    }

    #[test]
    fn single_pixel_difference_matches_direct_dft() {
        let a = Tensor::zeros(&[1, 1, 8, 8]);
        let mut b = Tensor::zeros(&[1, 1, 8, 8]);
        b.data_mut()[19] = 0.8;
        // a delta of height d has DFT modulus d/8 everywhere
        let hand = 0.8 * 0.8 / 64.0 + 0.1 * 0.8 / 8.0;
        let grid = dft2d(&b.reshape(&[8, 8]).unwrap()).unwrap();
        let direct = (0..64).map(|i| grid.re[i].hypot(grid.im[i])).sum::<f64>() / 64.0;
        let oracle = 0.8 * 0.8 / 64.0 + 0.1 * direct;
        let got = semantic_distortion(&a, &b, 0.1).unwrap();
        assert!(
            (got - hand).abs() < 1e-12 && (got - oracle).abs() < 1e-12,
            "{got} {hand} {oracle}"
        );
    }

    #[test]
    fn fourier_term_invariant_to_joint_circular_shift() {
        let a = random_image(8, 8).pixels;
        let b = random_image(9, 8).pixels;
        let shift = |t: &Tensor| {
            let mut out = Tensor::zeros(t.shape());
            for c in 0..3 {
                for y in 0..8 {
                    for x in 0..8 {
                        out.data_mut()[c * 64 + ((y + 3) % 8) * 8 + (x + 5) % 8] =
                            t.data()[c * 64 + y * 8 + x];
                    }
                }
            }
            out.reshape(&[1, 3, 8, 8]).unwrap()
        };
        let a4 = a.reshape(&[1, 3, 8, 8]).unwrap();
        let b4 = b.reshape(&[1, 3, 8, 8]).unwrap();
        let l1 = semantic_distortion(&a4, &b4, 1.0).unwrap();
        let l2 = semantic_distortion(&shift(&a), &shift(&b), 1.0).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
    }
}
