//! Experiment sweeps. Every (SNR, trial, image) job draws from its own derived seed and jobs run in
//! parallel; rows are assembled in a fixed order, so reruns reproduce bitwise.

use rayon::prelude::*;

use super::record::{MetricsRecord, SecurityRecord};
use crate::channel::ChannelKind;
use crate::error::{HdaError, Result};
use crate::pipeline::{generate_textures, infer, DenoiserMode, HdaModel, InferOptions, Receiver};
use crate::rng::derive_seed;
use crate::semantic::ImageSample;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepSettings {
    pub channel: ChannelKind,
    pub trials: usize,
    pub seed: u64,
    pub denoiser: DenoiserMode,
    pub encrypt: bool,
}

impl SweepSettings {
    /// Settings from the model's `[eval]` section.
    pub fn from_model(model: &HdaModel) -> Result<Self> {
        let e = &model.config.eval;
        Ok(SweepSettings {
            channel: model.config.eval_channel()?,
            trials: e.trials,
            seed: e.seed,
            denoiser: e.denoiser,
            encrypt: e.encrypt,
        })
    }

    /// Seed of one (SNR, trial, image) job; a noiseless point has its own tag. Denoiser mode,
    /// encryption and the model do not enter, so those comparisons are paired.
    fn job_seed(&self, snr_db: Option<f64>, trial: usize, image: usize) -> u64 {
        let snr = snr_db.map_or(u64::MAX, f64::to_bits);
        derive_seed(self.seed, &[snr, trial as u64, image as u64])
    }
}

/// Procedural textures from a stream disjoint from the training textures.
pub fn held_out_images(model: &HdaModel, count: usize) -> Vec<ImageSample> {
    let c = &model.config;
    generate_textures(
        derive_seed(c.train.seed, &[0x4e1d]),
        0,
        count,
        c.model.image_size,
    )
}

fn check_ready(model: &HdaModel, settings: &SweepSettings) -> Result<()> {
    model.require_trained()?;
    let s = &model.status;
    match settings.denoiser {
        DenoiserMode::Diffusion if !s.denoiser => {
            Err(HdaError::Refused("diffusion denoiser is untrained".into()))
        }
        DenoiserMode::OneStep if !s.onestep => {
            Err(HdaError::Refused("one-step denoiser is untrained".into()))
        }
        _ => Ok(()),
    }
}

fn jobs(trials: usize, images: usize) -> Vec<(usize, usize)> {
    (0..trials)
        .flat_map(|t| (0..images).map(move |i| (t, i)))
        .collect()
}

/// Mean metrics over every (trial, image) at one SNR; `None` when there are no trials.
pub fn evaluate_point(
    model: &HdaModel,
    images: &[ImageSample],
    snr_db: Option<f64>,
    settings: &SweepSettings,
) -> Result<Option<MetricsRecord>> {
    check_ready(model, settings)?;
    if settings.trials == 0 || images.is_empty() {
        return Ok(None);
    }
    let records = jobs(settings.trials, images.len())
        .into_par_iter()
        .map(|(t, i)| {
            let opts = InferOptions {
                channel: settings.channel,
                snr_db,
                denoiser: settings.denoiser,
                encrypt: settings.encrypt,
                receiver: Receiver::Legitimate,
                seed: settings.job_seed(snr_db, t, i),
            };
            infer(model, &images[i], &opts).map(|r| r.metrics)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = records.len() as f64;
    let mean = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    let dropped: usize = records.iter().map(|r| r.frames_dropped).sum();
    let mut row = records[0].clone();
    row.bpp = mean(|r| r.bpp);
    row.psnr_db = mean(|r| r.psnr_db);
    row.ms_ssim = mean(|r| r.ms_ssim);
    row.frames_dropped = dropped;
    if dropped > 0 {
        let kept: Vec<f64> = records
            .iter()
            .filter(|r| r.frames_dropped == 0)
            .map(|r| r.psnr_db)
            .collect();
        let excl = kept.iter().sum::<f64>() / kept.len().max(1) as f64;
        log::info!(
            "snr {:?}: {dropped} of {} frames dropped; PSNR {:.3} dB including, {excl:.3} dB excluding them",
            snr_db,
            records.len(),
            row.psnr_db
        );
    }
    Ok(Some(row))
}

/// One row per SNR, in the given order.
pub fn run_snr_sweep(
    model: &HdaModel,
    images: &[ImageSample],
    snrs: &[f64],
    settings: &SweepSettings,
) -> Result<Vec<MetricsRecord>> {
    check_ready(model, settings)?;
    let mut rows = Vec::new();
    for &snr in snrs {
        rows.extend(evaluate_point(model, images, Some(snr), settings)?);
    }
    Ok(rows)
}

/// One row per model at a fixed SNR; all models must share the total symbol budget `L`.
pub fn run_da_ratio_sweep(
    models: &[HdaModel],
    images: &[ImageSample],
    snr_db: f64,
    settings: &SweepSettings,
) -> Result<Vec<MetricsRecord>> {
    if let Some(first) = models.first() {
        let l = first.config.model.total_symbols();
        if let Some(m) = models.iter().find(|m| m.config.model.total_symbols() != l) {
            return Err(HdaError::Config(format!(
                "DA-ratio sweep needs one symbol budget; found {l} and {}",
                m.config.model.total_symbols()
            )));
        }
    }
    per_model(models, images, snr_db, settings)
}

/// One row per model at a fixed SNR, for models differing in `η`.
pub fn run_bandwidth_sweep(
    models: &[HdaModel],
    images: &[ImageSample],
    snr_db: f64,
    settings: &SweepSettings,
) -> Result<Vec<MetricsRecord>> {
    per_model(models, images, snr_db, settings)
}

fn per_model(
    models: &[HdaModel],
    images: &[ImageSample],
    snr_db: f64,
    settings: &SweepSettings,
) -> Result<Vec<MetricsRecord>> {
    for m in models {
        check_ready(m, settings)?;
        if let Some(img) = images.first() {
            if img.height() != m.config.model.image_size {
                return Err(HdaError::Config(
                    "all models must share the evaluation image size".into(),
                ));
            }
        }
    }
    let mut rows = Vec::new();
    for m in models {
        rows.extend(evaluate_point(m, images, Some(snr_db), settings)?);
    }
    Ok(rows)
}

/// Per trial: the unencrypted link, the keyed receiver and the eavesdropper, each averaged
/// over the images.
pub fn run_security_eval(
    model: &HdaModel,
    images: &[ImageSample],
    snr_db: f64,
    settings: &SweepSettings,
) -> Result<Vec<SecurityRecord>> {
    check_ready(model, settings)?;
    if model.config.link.cipher_key.is_none() {
        return Err(HdaError::Config(
            "security evaluation needs link.cipher_key".into(),
        ));
    }
    let conditions = [
        (false, Receiver::Legitimate),
        (true, Receiver::Legitimate),
        (true, Receiver::Eavesdropper),
    ];
    let mut rows = Vec::with_capacity(settings.trials);
    for trial in 0..settings.trials {
        let mut means = [0.0; 3];
        for (k, &(encrypt, receiver)) in conditions.iter().enumerate() {
            let psnrs = (0..images.len())
                .into_par_iter()
                .map(|i| {
                    let opts = InferOptions {
                        channel: settings.channel,
                        snr_db: Some(snr_db),
                        denoiser: settings.denoiser,
                        encrypt,
                        receiver,
                        seed: settings.job_seed(Some(snr_db), trial, i),
                    };
                    infer(model, &images[i], &opts).map(|r| r.metrics.psnr_db)
                })
                .collect::<Result<Vec<_>>>()?;
            means[k] = psnrs.iter().sum::<f64>() / psnrs.len().max(1) as f64;
        }
        rows.push(SecurityRecord {
            snr_db,
            channel: settings.channel.name().to_string(),
            da_ratio: model.config.model.da_ratio(),
            trial,
            eavesdropper: format!("{:?}", model.config.link.eavesdropper).to_lowercase(),
            psnr_plain_db: means[0],
            psnr_legitimate_db: means[1],
            psnr_eavesdropper_db: means[2],
            gap_db: means[1] - means[2],
        });
    }
    Ok(rows)
}
