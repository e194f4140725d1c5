//! Numeric kernels shared by the tape: strided GEMM, im2col and the separable DFT.

use std::f64::consts::PI;

/// Row-major matrix view descriptor: `rows × cols`, optionally read transposed.
#[derive(Clone, Copy)]
pub(crate) struct MatView<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
}

impl<'a> MatView<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        MatView {
            data,
            rows,
            cols,
            transposed: false,
        }
    }

    pub fn t(self) -> Self {
        MatView {
            transposed: !self.transposed,
            ..self
        }
    }

    fn logical_rows(&self) -> usize {
        if self.transposed {
            self.cols
        } else {
            self.rows
        }
    }

    fn logical_cols(&self) -> usize {
        if self.transposed {
            self.rows
        } else {
            self.cols
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `out = beta·out + a·b` with `out` row-major of size `a.rows × b.cols` (logical).
pub(crate) fn gemm(a: MatView, b: MatView, out: &mut [f64], beta: f64) {
    let m = a.logical_rows();
    let k = a.logical_cols();
    let n = b.logical_cols();
    debug_assert_eq!(k, b.logical_rows());
    debug_assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in out.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: the views describe in-bounds strided layouts of the given slices and `out`
    // is a distinct, exclusively borrowed m×n buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a 2-D convolution over one image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one `C×H×W` image into a `(C·k·k) × (Ho·Wo)` patch matrix.
pub(crate) fn im2col(img: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let ncol = g.col_cols();
    for c in 0..g.channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let dst = &mut cols[row * ncol..(row + 1) * ncol];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.height as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &img[(c * g.height + iy as usize) * g.width..][..g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back into the image gradient.
pub(crate) fn col2im(cols: &[f64], g: &ConvGeom, img: &mut [f64]) {
    let ncol = g.col_cols();
    for c in 0..g.channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let row = (c * g.kernel + ky) * g.kernel + kx;
                let src = &cols[row * ncol..(row + 1) * ncol];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut img[(c * g.height + iy as usize) * g.width..][..g.width];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && (ix as usize) < g.width {
                            dst[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Orthonormal DFT cosine and sine matrices of size `n×n` (both symmetric).
pub(crate) fn dft_basis(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut c = vec![0.0; n * n];
    let mut s = vec![0.0; n * n];
    let scale = 1.0 / (n as f64).sqrt();
    for u in 0..n {
        for y in 0..n {
            // reduce the index product first so large grids keep full angle precision
            let k = (u * y) % n;
            let theta = 2.0 * PI * k as f64 / n as f64;
            c[u * n + y] = theta.cos() * scale;
            s[u * n + y] = theta.sin() * scale;
        }
    }
    (c, s)
}

/// Real and imaginary parts of the orthonormal 2-D DFT applied to every trailing `h×w` plane.
///
/// `F = (C_h − i S_h) X (C_w − i S_w)`; both maps are self-adjoint, which the tape uses for backward.
pub(crate) fn dft2_planes(input: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let (ch, sh) = dft_basis(h);
    let (cw, sw) = dft_basis(w);
    let plane = h * w;
    let mut re = vec![0.0; input.len()];
    let mut im = vec![0.0; input.len()];
    let mut cx = vec![0.0; plane];
    let mut sx = vec![0.0; plane];
    for (p, x) in input.chunks(plane).enumerate() {
        let xv = MatView::new(x, h, w);
        cx.fill(0.0);
        sx.fill(0.0);
        gemm(MatView::new(&ch, h, h), xv, &mut cx, 0.0);
        gemm(MatView::new(&sh, h, h), xv, &mut sx, 0.0);
        let re_p = &mut re[p * plane..(p + 1) * plane];
        gemm(MatView::new(&cx, h, w), MatView::new(&cw, w, w), re_p, 0.0);
        let mut tmp = vec![0.0; plane];
        gemm(
            MatView::new(&sx, h, w),
            MatView::new(&sw, w, w),
            &mut tmp,
            0.0,
        );
        for (r, t) in re_p.iter_mut().zip(&tmp) {
            *r -= t;
        }
        let im_p = &mut im[p * plane..(p + 1) * plane];
        gemm(MatView::new(&sx, h, w), MatView::new(&cw, w, w), im_p, 0.0);
        gemm(
            MatView::new(&cx, h, w),
            MatView::new(&sw, w, w),
            &mut tmp,
            0.0,
        );
        for (r, t) in im_p.iter_mut().zip(&tmp) {
            *r = -(*r + t);
        }
    }
    (re, im)
}
