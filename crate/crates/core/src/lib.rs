//! Hybrid digital-analog (HDA) semantic image transmission.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`] – dense tensors, a reverse-mode gradient tape, layers and Adam.
//! * [`semantic`] – convolutional semantic encoder/decoder and the pixel+Fourier distortion loss.
//! * [`hda`] – hyper codec, analog/digital allocation, analog channel codec and fusion.
//! * [`entropy`] – quantization, factorized density model, range coding and the rate loss.
//! * [`phy`] – 802.11ad LDPC codes, Gray-mapped modulation and adaptive modulation/coding.
//! * [`channel`] – block-fading channels, SNR control and LS detection.
//! * [`diffusion`] – schedule, noise predictor, dynamic sampling and a one-step baseline.
//! * [`pipeline`] – configuration, three-stage training, inference, checkpoints and datasets.
//! * [`harness`] – metrics, keystream cipher and experiment sweeps.

pub mod channel;
pub mod diffusion;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod hda;
pub mod nn;
pub mod phy;
pub mod pipeline;
pub mod rng;
pub mod semantic;

pub use error::{HdaError, Result};
