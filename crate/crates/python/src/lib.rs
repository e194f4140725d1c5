//! Python bindings: load a checkpoint, send images through the link and run sweeps.
//!
//! Images cross the boundary as flat lists of floats in `[0, 1]`, channel-major (3×H×W).

use hda_core::harness::{self, held_out_images, run_security_eval, run_snr_sweep, SweepSettings};
use hda_core::nn::Tensor;
use hda_core::pipeline::{infer, load_checkpoint, DenoiserMode, HdaModel, InferOptions, Receiver};
use hda_core::semantic::ImageSample;
use hda_core::HdaError;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: HdaError) -> PyErr {
    match e {
        HdaError::Io(_) | HdaError::Checkpoint(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn image(pixels: Vec<f64>, size: usize) -> PyResult<Tensor> {
    Tensor::new(&[3, size, size], pixels).map_err(py_err)
}

/// PSNR in dB between two square RGB images of side `size`.
#[pyfunction]
fn psnr(original: Vec<f64>, recon: Vec<f64>, size: usize) -> PyResult<f64> {
    harness::psnr(&image(original, size)?, &image(recon, size)?).map_err(py_err)
}

/// MS-SSIM between two square RGB images of side `size`.
#[pyfunction]
fn ms_ssim(original: Vec<f64>, recon: Vec<f64>, size: usize) -> PyResult<f64> {
    harness::ms_ssim(&image(original, size)?, &image(recon, size)?).map_err(py_err)
}

/// A trained link loaded from a checkpoint.
#[pyclass]
struct Model {
    inner: HdaModel,
}

fn csv(write: impl FnOnce(&mut Vec<u8>) -> hda_core::Result<()>) -> PyResult<String> {
    let mut out = Vec::new();
    write(&mut out).map_err(py_err)?;
    String::from_utf8(out).map_err(|e| PyValueError::new_err(e.to_string()))
}

impl Model {
    fn settings(&self, trials: Option<usize>) -> PyResult<SweepSettings> {
        let mut s = SweepSettings::from_model(&self.inner).map_err(py_err)?;
        if let Some(t) = trials {
            s.trials = t;
        }
        Ok(s)
    }
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model {
            inner: load_checkpoint(std::path::Path::new(path)).map_err(py_err)?,
        })
    }

    #[getter]
    fn image_size(&self) -> usize {
        self.inner.config.model.image_size
    }

    /// Held-out texture images as flat pixel lists.
    fn held_out(&self, count: usize) -> Vec<Vec<f64>> {
        held_out_images(&self.inner, count)
            .into_iter()
            .map(|s| s.pixels.data().to_vec())
            .collect()
    }

    /// Sends one image; returns the reconstruction and its PSNR. `snr_db=None` is noiseless.
    #[pyo3(signature = (pixels, snr_db=None, denoiser="off", seed=0))]
    fn transmit(
        &self,
        pixels: Vec<f64>,
        snr_db: Option<f64>,
        denoiser: &str,
        seed: u64,
    ) -> PyResult<(Vec<f64>, f64)> {
        let sample =
            ImageSample::new(image(pixels, self.image_size())?, "python").map_err(py_err)?;
        let opts = InferOptions {
            channel: self.inner.config.eval_channel().map_err(py_err)?,
            snr_db,
            denoiser: DenoiserMode::parse(denoiser).map_err(py_err)?,
            encrypt: false,
            receiver: Receiver::Legitimate,
            seed,
        };
        let out = infer(&self.inner, &sample, &opts).map_err(py_err)?;
        Ok((out.image.pixels.data().to_vec(), out.metrics.psnr_db))
    }

    /// Metrics CSV over `snrs` on the checkpoint's held-out images.
    #[pyo3(signature = (snrs, trials=None))]
    fn sweep_snr(&self, snrs: Vec<f64>, trials: Option<usize>) -> PyResult<String> {
        let m = &self.inner;
        let images = held_out_images(m, m.config.eval.images);
        let rows = run_snr_sweep(m, &images, &snrs, &self.settings(trials)?).map_err(py_err)?;
        csv(|out| harness::write_metrics_csv(out, &rows))
    }

    /// Security CSV at `snr_db`; needs a cipher key in the checkpoint's config.
    #[pyo3(signature = (snr_db, trials=None))]
    fn security(&self, snr_db: f64, trials: Option<usize>) -> PyResult<String> {
        let m = &self.inner;
        let images = held_out_images(m, m.config.eval.images);
        let rows =
            run_security_eval(m, &images, snr_db, &self.settings(trials)?).map_err(py_err)?;
        csv(|out| harness::write_security_csv(out, &rows))
    }
}

#[pymodule]
fn hda_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ms_ssim, m)?)?;
    m.add_class::<Model>()?;
    Ok(())
}
