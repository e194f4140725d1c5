//! End-to-end transmission of one image through the trained HDA link.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{parse_key, DigitalMode, EavesdropperMode};
use super::model::HdaModel;
use crate::channel::{apply_channel, ls_detect, sample_channel, ChannelKind};
use crate::diffusion::{
    dynamic_sample, from_diffusion_domain, one_step_denoise, rescale_detected, to_diffusion_domain,
};
use crate::entropy::{dequantize, quantize, range_decode, range_encode, Bitstream, SUPPORT_BOUND};
use crate::error::{HdaError, Result};
use crate::harness::{decrypt_bits, encrypt_bits, ms_ssim, psnr, KeystreamCipher, MetricsRecord};
use crate::hda::{analog_decode, analog_encode};
use crate::nn::{Tape, Tensor};
use crate::phy::{bits_to_bytes, bytes_to_bits, receive_blocks, transmit_bits, AmcEntry};
use crate::rng::{seeded, SimRng};
use crate::semantic::{batch_images, ImageSample};

/// Floor on the demapper noise variance so a noiseless link still yields finite LLRs.
const MIN_DEMAP_NOISE_VAR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiserMode {
    #[default]
    Off,
    #[serde(rename = "diff")]
    Diffusion,
    OneStep,
}

impl DenoiserMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Self::Off),
            "diff" => Ok(Self::Diffusion),
            "onestep" => Ok(Self::OneStep),
            _ => Err(HdaError::Config(format!(
                "unknown denoiser '{s}' (off, diff, onestep)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Off => "off",
            Self::Diffusion => "diff",
            Self::OneStep => "onestep",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Receiver {
    #[default]
    Legitimate,
    /// Holds no key; behaviour set by [`EavesdropperMode`].
    Eavesdropper,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InferOptions {
    pub channel: ChannelKind,
    /// `None` transmits without noise.
    pub snr_db: Option<f64>,
    pub denoiser: DenoiserMode,
    pub encrypt: bool,
    pub receiver: Receiver,
    pub seed: u64,
}

impl Default for InferOptions {
    fn default() -> Self {
        InferOptions {
            channel: ChannelKind::Awgn,
            snr_db: None,
            denoiser: DenoiserMode::Off,
            encrypt: false,
            receiver: Receiver::Legitimate,
            seed: 0,
        }
    }
}

/// What happened to one frame on the way through the link.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameReport {
    /// `|h|²` of the block-fading coefficient.
    pub channel_gain: f64,
    /// Post-detection noise variance per complex symbol.
    pub detected_noise_var: f64,
    pub amc_index: usize,
    /// Serialized bitstream size in bits.
    pub digital_bits: usize,
    /// Digital symbols occupied by coded data (the rest of `L_D` is padding).
    pub digital_symbols_used: usize,
    pub blocks_failed: usize,
    /// Deep fade: nothing could be detected.
    pub dropped: bool,
    /// The digital branch was unusable and the coarse part was replaced by zeros.
    pub digital_failed: bool,
    pub z_d_sent: Vec<i32>,
    pub z_d_received: Option<Vec<i32>>,
    /// Analog symbols before and after refinement, for diagnostics.
    pub analog_sent: Vec<Complex64>,
    pub analog_received: Vec<Complex64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub image: ImageSample,
    pub report: FrameReport,
    pub metrics: MetricsRecord,
}

fn tensor4(t: &Tensor) -> Result<Tensor> {
    let mut shape = vec![1];
    shape.extend_from_slice(t.shape());
    t.reshape(&shape)
}

fn qpsk_padding(n: usize, rng: &mut SimRng) -> Vec<Complex64> {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let (i, q): (bool, bool) = (rng.random(), rng.random());
            Complex64::new(if i { a } else { -a }, if q { a } else { -a })
        })
        .collect()
}

fn cipher(model: &HdaModel) -> Result<KeystreamCipher> {
    let key = model.config.link.cipher_key.as_deref().ok_or_else(|| {
        HdaError::Config("encryption requested but no cipher_key is configured".into())
    })?;
    Ok(KeystreamCipher::new(
        parse_key(key)?,
        model.config.link.cipher_nonce,
    ))
}

/// Whether the ideal digital link delivers: coded bits fit the budget and the AMC spectral
/// efficiency is below capacity at the effective SNR.
fn ideal_delivers(entry: &AmcEntry, bits: usize, budget: usize, eff_snr_db: f64) -> bool {
    let capacity = (1.0 + 10f64.powf(eff_snr_db / 10.0)).log2();
    entry.efficiency() <= capacity && (bits as f64) <= entry.efficiency() * budget as f64
}

/// Sends `image` through the full link and reconstructs it.
pub fn infer(model: &HdaModel, image: &ImageSample, options: &InferOptions) -> Result<Inference> {
    model.require_trained()?;
    let cfg = &model.config;
    let size = cfg.model.image_size;
    if image.height() != size || image.width() != size {
        return Err(HdaError::Dimension(format!(
            "model expects {size}×{size} images, got {}×{}",
            image.height(),
            image.width()
        )));
    }
    let mut rng = seeded(options.seed);
    let semantic = model.semantic();
    let hyper = model.hyper();
    let analog = model.analog();
    let l_a = analog.symbols;
    let l_d = cfg.model.digital_symbols;

    // transmitter: features, rounded digital part, residual
    let mut tape = Tape::new();
    let bind = model.params.bind(&mut tape, |_| false);
    let x = tape.constant(batch_images(&[image])?);
    let z = semantic.encode(&mut tape, &bind, x)?;
    let z_d = hyper.encode(&mut tape, &bind, z)?;
    let d_shape = tape.shape(z_d).to_vec();
    let q = quantize(tape.value(z_d).data(), SUPPORT_BOUND);
    let z_d_tilde = tape.constant(Tensor::new(&d_shape, dequantize(&q.symbols))?);
    let coarse = hyper.decode(&mut tape, &bind, z_d_tilde)?;
    let z_a = tape.sub(z, coarse)?;
    let layout = tape.shape(z)[1..].to_vec();
    let z_a_value = tape.value(z_a).reshape(&layout)?;
    let per_channel = d_shape[2] * d_shape[3];
    let channels: Vec<Vec<i32>> = q.symbols.chunks(per_channel).map(<[i32]>::to_vec).collect();

    let tables = model.density_evaluator()?.tables()?;
    let mut stream = range_encode(&channels, &tables)?;
    let key = if options.encrypt {
        Some(cipher(model)?)
    } else {
        None
    };
    if let Some(c) = &key {
        stream = encrypt_bits(&stream, c);
    }
    let bits = bytes_to_bits(&stream.to_bytes());
    let frame_a = analog_encode(&analog, &model.params, &z_a_value)?;

    // channel draw first, so AMC can see the effective SNR
    let mut realization = sample_channel(options.channel, &mut rng);
    let gain = realization.h.norm_sqr();
    let eff_snr = options
        .snr_db
        .map_or(f64::INFINITY, |s| s + 10.0 * gain.log10());
    let table = cfg.link.amc_table()?;
    let (amc_index, entry) = table.select(eff_snr);

    let mut report = FrameReport {
        channel_gain: gain,
        amc_index,
        digital_bits: bits.len(),
        z_d_sent: q.symbols.clone(),
        analog_sent: frame_a.symbols.clone(),
        ..FrameReport::default()
    };

    let mut digital = Vec::with_capacity(l_d);
    let mut header = None;
    match cfg.link.digital_mode {
        DigitalMode::Ldpc => {
            let (h, syms) = transmit_bits(&bits, &entry, amc_index as u8)?;
            if syms.len() <= l_d {
                report.digital_symbols_used = syms.len();
                digital.extend(syms);
                header = Some(h);
            } else {
                log::warn!(
                    "bitstream needs {} symbols, budget is {l_d}; digital part dropped",
                    syms.len()
                );
            }
        }
        DigitalMode::Ideal => {}
    }
    let pad = l_d - digital.len();
    digital.extend(qpsk_padding(pad, &mut rng));

    let mut frame = frame_a.symbols.clone();
    frame.extend_from_slice(&digital);
    let y = apply_channel(&frame, &mut realization, options.snr_db, &mut rng);

    let (x_hat, noise_var) = match ls_detect(&y, &realization) {
        Ok(d) => d,
        Err(HdaError::DeepFade(g)) => {
            log::warn!("deep fade (|h|² = {g:e}); frame dropped");
            report.dropped = true;
            report.digital_failed = true;
            let gray = ImageSample::new(Tensor::full(image.pixels.shape(), 0.5), "dropped")?;
            let metrics = record(model, image, &gray, options, &report)?;
            return Ok(Inference {
                image: gray,
                report,
                metrics,
            });
        }
        Err(e) => return Err(e),
    };
    report.detected_noise_var = noise_var;

    // analog branch with optional refinement
    let analog_hat = &x_hat[..l_a];
    let refined = match options.denoiser {
        DenoiserMode::Off => analog_hat.to_vec(),
        DenoiserMode::Diffusion => {
            let net = model.denoiser();
            let schedule = model.schedule()?;
            let x_tilde = rescale_detected(&to_diffusion_domain(analog_hat), noise_var)?;
            from_diffusion_domain(&dynamic_sample(
                &x_tilde,
                noise_var,
                &model.trained_denoiser(&net),
                &schedule,
            )?)
        }
        DenoiserMode::OneStep => {
            let net = model.one_step();
            let x_tilde = rescale_detected(&to_diffusion_domain(analog_hat), noise_var)?;
            from_diffusion_domain(&one_step_denoise(
                &x_tilde,
                noise_var,
                &model.trained_denoiser(&net),
            )?)
        }
    };
    report.analog_received = refined.clone();
    let z_a_hat = analog_decode(&analog, &model.params, &refined, &layout)?;

    // digital branch
    let received: Option<Bitstream> = match cfg.link.digital_mode {
        DigitalMode::Ldpc => match header {
            Some(h) => {
                let rx = receive_blocks(
                    &x_hat[l_a..],
                    noise_var.max(MIN_DEMAP_NOISE_VAR),
                    &h,
                    &entry,
                    cfg.link.demapper,
                    cfg.link.ldpc_iterations,
                )?;
                report.blocks_failed = rx.blocks_failed;
                Bitstream::from_bytes(&bits_to_bytes(&rx.bits)).ok()
            }
            None => None,
        },
        DigitalMode::Ideal => {
            if ideal_delivers(&entry, bits.len(), l_d, eff_snr) {
                Some(Bitstream::from_bytes(&bits_to_bytes(&bits))?)
            } else {
                None
            }
        }
    };
    let received = received.and_then(|s| {
        if !s.encrypted {
            return Some(s);
        }
        match (options.receiver, &key) {
            (Receiver::Legitimate, Some(c)) => Some(decrypt_bits(&s, c)),
            (Receiver::Legitimate, None) => None,
            (Receiver::Eavesdropper, Some(c)) => match cfg.link.eavesdropper {
                EavesdropperMode::Garbage => Some(decrypt_bits(&s, &c.wrong_key())),
                EavesdropperMode::Zero => None,
            },
            (Receiver::Eavesdropper, None) => None,
        }
    });
    let decoded = received.and_then(|s| {
        let expected = vec![per_channel as u32; d_shape[1]];
        if s.symbol_counts != expected {
            return None;
        }
        range_decode(&s, &tables).ok().map(|c| c.concat())
    });
    report.digital_failed = decoded.is_none();
    report.z_d_received = decoded.clone();

    let mut tape = Tape::new();
    let bind = model.params.bind(&mut tape, |_| false);
    let z_a_hat = tape.constant(tensor4(&z_a_hat)?);
    let z_hat = match &decoded {
        Some(sym) => {
            let z_d_hat = tape.constant(Tensor::new(&d_shape, dequantize(sym))?);
            hyper.fuse(&mut tape, &bind, z_a_hat, z_d_hat)?
        }
        None => z_a_hat,
    };
    let out = semantic.decode(&mut tape, &bind, z_hat)?;
    let v = tape.value(out);
    let recon = ImageSample::new(
        v.reshape(&v.shape()[1..])?,
        format!("{} (received)", image.source),
    )?;
    let metrics = record(model, image, &recon, options, &report)?;
    Ok(Inference {
        image: recon,
        report,
        metrics,
    })
}

fn record(
    model: &HdaModel,
    original: &ImageSample,
    recon: &ImageSample,
    options: &InferOptions,
    report: &FrameReport,
) -> Result<MetricsRecord> {
    let m = &model.config.model;
    Ok(MetricsRecord {
        snr_db: options.snr_db.unwrap_or(f64::INFINITY),
        channel: options.channel.name().to_string(),
        eta: m.bandwidth_ratio(),
        da_ratio: m.da_ratio(),
        bpp: report.digital_bits as f64 / (original.height() * original.width()) as f64,
        psnr_db: psnr(&original.pixels, &recon.pixels)?,
        ms_ssim: ms_ssim(&original.pixels, &recon.pixels)?,
        frames_dropped: usize::from(report.dropped),
        denoiser: options.denoiser.name().to_string(),
        encrypted: options.encrypt,
    })
}
