use super::kernels::{dft2_planes, dft_basis};
use super::tensor::Tensor;
use crate::error::{dim_err, Result};

/// Complex `h×w` coefficient grid stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    pub height: usize,
    pub width: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexGrid {
    pub fn energy(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r * r + i * i)
            .sum()
    }
}

/// Orthonormal 2-D DFT of a real `h×w` image.
pub fn dft2d(input: &Tensor) -> Result<ComplexGrid> {
    let s = input.shape();
    if s.len() != 2 {
        return dim_err(format!("dft2d expects an h×w plane, got {s:?}"));
    }
    let (re, im) = dft2_planes(input.data(), s[0], s[1]);
    Ok(ComplexGrid {
        height: s[0],
        width: s[1],
        re,
        im,
    })
}

/// Orthonormal inverse 2-D DFT: `X = (C + iS) Y (C + iS)`; returns real and imaginary planes.
pub fn idft2d(grid: &ComplexGrid) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (grid.height, grid.width);
    let (ch, sh) = dft_basis(h);
    let (cw, sw) = dft_basis(w);
    // left multiply by (C_h + i S_h)
    let mut lr = vec![0.0; h * w];
    let mut li = vec![0.0; h * w];
    for u in 0..h {
        for y in 0..h {
            let (c, s) = (ch[u * h + y], sh[u * h + y]);
            for x in 0..w {
                let (yr, yi) = (grid.re[y * w + x], grid.im[y * w + x]);
                lr[u * w + x] += c * yr - s * yi;
                li[u * w + x] += c * yi + s * yr;
            }
        }
    }
    let mut outr = vec![0.0; h * w];
    let mut outi = vec![0.0; h * w];
    for u in 0..h {
        for x in 0..w {
            let (ar, ai) = (lr[u * w + x], li[u * w + x]);
            for v in 0..w {
                let (c, s) = (cw[x * w + v], sw[x * w + v]);
                outr[u * w + v] += ar * c - ai * s;
                outi[u * w + v] += ar * s + ai * c;
            }
        }
    }
    (outr, outi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_only_dc() {
        let (h, w, v) = (4, 6, 0.7);
        let g = dft2d(&Tensor::full(&[h, w], v)).unwrap();
        assert!((g.re[0] - v * ((h * w) as f64).sqrt()).abs() < 1e-12);
        assert!(g.im[0].abs() < 1e-12);
        for k in 1..h * w {
            assert!(
                g.re[k].abs() < 1e-12 && g.im[k].abs() < 1e-12,
                "coefficient {k}"
            );
        }
    }

    #[test]
    fn parseval_and_round_trip() {
        let (h, w) = (8, 5);
        let data: Vec<f64> = (0..h * w)
            .map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.4)
            .collect();
        let x = Tensor::new(&[h, w], data.clone()).unwrap();
        let g = dft2d(&x).unwrap();
        let e_in = x.sum_squares();
        assert!((g.energy() - e_in).abs() <= 1e-9 * e_in);
        let (re, im) = idft2d(&g);
        let norm: f64 = data.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err: f64 = re
            .iter()
            .zip(&data)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(err <= 1e-9 * norm);
        assert!(im.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matches_direct_summation() {
        let (h, w) = (3, 4);
        let data: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let g = dft2d(&Tensor::new(&[h, w], data.clone()).unwrap()).unwrap();
        let norm = 1.0 / ((h * w) as f64).sqrt();
        for u in 0..h {
            for v in 0..w {
                let (mut re, mut im) = (0.0, 0.0);
                for y in 0..h {
                    for x in 0..w {
                        let th = -2.0
                            * std::f64::consts::PI
                            * (u as f64 * y as f64 / h as f64 + v as f64 * x as f64 / w as f64);
                        re += data[y * w + x] * th.cos();
                        im += data[y * w + x] * th.sin();
                    }
                }
                assert!((g.re[u * w + v] - re * norm).abs() < 1e-12);
                assert!((g.im[u * w + v] - im * norm).abs() < 1e-12);
            }
        }
    }
}
