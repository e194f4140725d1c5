//! Image quality metrics on the `[0, 1]` scale.

use crate::error::{dim_err, HdaError, Result};
use crate::nn::Tensor;
use crate::semantic::LUMA;

pub const PSNR_CAP_DB: f64 = 100.0;

/// Per-scale exponents of the five-scale MS-SSIM.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return dim_err(format!(
            "image shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    if a.shape().len() != 3 || a.shape()[0] != 3 {
        return dim_err(format!("expected 3×H×W images, got {:?}", a.shape()));
    }
    Ok(())
}

/// `10·log₁₀(1/MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(original: &Tensor, recon: &Tensor) -> Result<f64> {
    if original.shape() != recon.shape() {
        return dim_err(format!(
            "image shapes differ: {:?} vs {:?}",
            original.shape(),
            recon.shape()
        ));
    }
    let mse = original
        .data()
        .iter()
        .zip(recon.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / original.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

/// Number of scales usable for an image whose smaller side is `min_side`.
pub fn ms_ssim_scales(min_side: usize) -> usize {
    (1..=MS_SSIM_WEIGHTS.len())
        .rev()
        .find(|&s| min_side >= (1 << (s - 1)) * SSIM_WINDOW)
        .unwrap_or(0)
}

/// A single-channel plane.
#[derive(Clone)]
struct Plane {
    h: usize,
    w: usize,
    v: Vec<f64>,
}

fn luminance(img: &Tensor) -> Plane {
    let (h, w) = (img.shape()[1], img.shape()[2]);
    let d = img.data();
    let n = h * w;
    let v = (0..n)
        .map(|i| LUMA[0] * d[i] + LUMA[1] * d[n + i] + LUMA[2] * d[2 * n + i])
        .collect();
    Plane { h, w, v }
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering with the normalized Gaussian window.
fn filter(p: &Plane, g: &[f64]) -> Plane {
    let k = g.len();
    let ow = p.w - k + 1;
    let oh = p.h - k + 1;
    let mut rows = vec![0.0; p.h * ow];
    for y in 0..p.h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|i| g[i] * p.v[y * p.w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    Plane {
        h: oh,
        w: ow,
        v: out,
    }
}

fn product(a: &Plane, b: &Plane) -> Plane {
    Plane {
        h: a.h,
        w: a.w,
        v: a.v.iter().zip(&b.v).map(|(x, y)| x * y).collect(),
    }
}

/// Mean SSIM and mean contrast-structure term at one scale.
fn ssim_terms(a: &Plane, b: &Plane, g: &[f64]) -> (f64, f64) {
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mu_a = filter(a, g);
    let mu_b = filter(b, g);
    let aa = filter(&product(a, a), g);
    let bb = filter(&product(b, b), g);
    let ab = filter(&product(a, b), g);
    let n = mu_a.v.len() as f64;
    let (mut ssim, mut cs) = (0.0, 0.0);
    for i in 0..mu_a.v.len() {
        let (ma, mb) = (mu_a.v[i], mu_b.v[i]);
        let va = aa.v[i] - ma * ma;
        let vb = bb.v[i] - mb * mb;
        let cov = ab.v[i] - ma * mb;
        let c = (2.0 * cov + c2) / (va + vb + c2);
        let l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        ssim += l * c;
        cs += c;
    }
    (ssim / n, cs / n)
}

/// 2×2 average pooling (odd trailing row/column dropped).
fn downsample(p: &Plane) -> Plane {
    let (h, w) = (p.h / 2, p.w / 2);
    let mut v = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let at = |dy: usize, dx: usize| p.v[(2 * y + dy) * p.w + 2 * x + dx];
            v[y * w + x] = 0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1));
        }
    }
    Plane { h, w, v }
}

/// Multi-scale SSIM on luminance; the scale count shrinks to fit the image and the weights of
/// the retained scales are renormalized to sum to one. Negative per-scale terms clip to zero.
pub fn ms_ssim(original: &Tensor, recon: &Tensor) -> Result<f64> {
    check_pair(original, recon)?;
    let (h, w) = (original.shape()[1], original.shape()[2]);
    let scales = ms_ssim_scales(h.min(w));
    if scales == 0 {
        return Err(HdaError::Scale {
            scales: 1,
            height: h,
            width: w,
        });
    }
    let weights = &MS_SSIM_WEIGHTS[..scales];
    let total: f64 = weights.iter().sum();
    let g = gaussian_window();
    let mut a = luminance(original);
    let mut b = luminance(recon);
    let mut score = 1.0;
    for (s, wt) in weights.iter().enumerate() {
        let (ssim, cs) = ssim_terms(&a, &b, &g);
        let term = if s + 1 == scales { ssim } else { cs };
        score *= term.max(0.0).powf(wt / total);
        if s + 1 < scales {
            a = downsample(&a);
            b = downsample(&b);
        }
    }
    Ok(score.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_reference_values() {
        let a = Tensor::full(&[3, 8, 8], 0.25);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let black = Tensor::zeros(&[3, 8, 8]);
        let white = Tensor::full(&[3, 8, 8], 1.0);
        assert_eq!(psnr(&black, &white).unwrap(), 0.0);
        let off = black.map(|_| 1.0 / 255.0);
        assert!((psnr(&black, &off).unwrap() - 48.1308).abs() < 1e-4);
        assert!(psnr(&black, &Tensor::zeros(&[3, 8, 9])).is_err());
    }

    #[test]
    fn scale_count() {
        assert_eq!(ms_ssim_scales(64), 3);
        assert_eq!(ms_ssim_scales(32), 2);
        assert_eq!(ms_ssim_scales(176), 5);
        assert_eq!(ms_ssim_scales(10), 0);
        let tiny = Tensor::zeros(&[3, 10, 10]);
        assert!(matches!(ms_ssim(&tiny, &tiny), Err(HdaError::Scale { .. })));
    }
}
