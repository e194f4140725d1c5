//! Three-stage transceiver training followed by denoiser training.
//!
//! Each stage owns a fresh Adam state and a seeded stream derived from the config seed, so a
//! stage re-run from the same starting parameters reproduces bitwise. A non-finite loss aborts
//! the stage before the offending update, leaving the model at its last good parameters.

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{generate_texture, generate_textures, load_dataset};
use super::model::HdaModel;
use crate::channel::{noise_variance, sample_channel, ChannelKind};
use crate::diffusion::{
    diffusion_loss_at, map_noise_to_step, one_step_loss, to_diffusion_domain, DenoiserNet,
};
use crate::entropy::loss_rate;
use crate::error::{dim_err, HdaError, Result};
use crate::hda::{loss_channel_distortion, to_complex, QuantMode};
use crate::nn::{adam_update, AdamConfig, Binding, OptimizerState, Tape, Tensor, Var};
use crate::rng::{derive_seed, seeded, SimRng};
use crate::semantic::{batch_images, semantic_loss, ImageSample};

/// Upper bound on the post-detection noise variance seen in training, so deep fades do not
/// swamp the gradient.
const MAX_TRAIN_NOISE_VAR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Mean estimated digital rate in bits per pixel, for stages that code `z_D`.
    pub rate_bpp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageLog {
    pub stage: String,
    pub epochs: Vec<EpochLog>,
}

/// Training images: the configured directory, or procedural textures.
pub fn training_images(model: &HdaModel) -> Result<Vec<ImageSample>> {
    let c = &model.config;
    match &c.train.dataset_dir {
        Some(dir) => load_dataset(std::path::Path::new(dir), c.model.image_size),
        None => {
            if c.train.textures == 0 {
                return Err(HdaError::Config(
                    "textures must be positive without a dataset_dir".into(),
                ));
            }
            Ok(generate_textures(
                c.train.seed,
                0,
                c.train.textures,
                c.model.image_size,
            ))
        }
    }
}

struct BatchOutput {
    loss: Var,
    /// Rate term and the quantized latent it was taken over.
    rate: Option<(Var, Var)>,
}

/// Shared loop: shuffled mini-batches, one Adam step per batch on the `trainable` parameters.
fn run_stage(
    model: &mut HdaModel,
    stage: &str,
    stage_id: u64,
    epochs: usize,
    items: usize,
    trainable: impl Fn(&str) -> bool,
    mut step: impl FnMut(&HdaModel, &mut Tape, &Binding, &[usize], &mut SimRng) -> Result<BatchOutput>,
) -> Result<StageLog> {
    if items == 0 {
        return Err(HdaError::Config(format!("{stage}: empty training set")));
    }
    let mut rng = seeded(derive_seed(model.config.train.seed, &[stage_id]));
    let mut opt = OptimizerState::new(AdamConfig::with_lr(model.config.train.learning_rate))?;
    let batch = model.config.train.batch_size;
    let pixels = (model.config.model.image_size * model.config.model.image_size) as f64;
    let mut log = StageLog {
        stage: stage.to_string(),
        epochs: Vec::with_capacity(epochs),
    };
    let mut order: Vec<usize> = (0..items).collect();
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let (mut total, mut rate_total, mut batches) = (0.0, 0.0, 0usize);
        let mut has_rate = false;
        for idx in order.chunks(batch) {
            let mut tape = Tape::new();
            let bind = model.params.bind(&mut tape, &trainable);
            let out = step(model, &mut tape, &bind, idx, &mut rng)?;
            let loss = tape.value(out.loss).item();
            if !loss.is_finite() {
                return Err(HdaError::Divergence {
                    stage: stage.to_string(),
                    epoch,
                    what: format!("loss {loss}"),
                });
            }
            if let Some((r, z_d)) = out.rate {
                let s = tape.shape(z_d);
                let per_image = s[1..].iter().product::<usize>() as f64;
                rate_total += tape.value(r).item() * per_image / std::f64::consts::LN_2 / pixels;
                has_rate = true;
            }
            let mut grads = tape.backward(out.loss)?;
            let grads = bind.collect_grads(&tape, &mut grads);
            // release the tape's references so the update writes parameters in place
            drop(tape);
            adam_update(&mut model.params, &grads, &mut opt).map_err(|e| match e {
                HdaError::Divergence { what, .. } => HdaError::Divergence {
                    stage: stage.to_string(),
                    epoch,
                    what,
                },
                e => e,
            })?;
            total += loss;
            batches += 1;
        }
        let entry = EpochLog {
            epoch,
            loss: total / batches as f64,
            rate_bpp: has_rate.then(|| rate_total / batches as f64),
        };
        log::info!(
            "{stage} epoch {epoch}: loss {:.6}{}",
            entry.loss,
            entry
                .rate_bpp
                .map(|r| format!(" rate {r:.4} bpp"))
                .unwrap_or_default()
        );
        log.epochs.push(entry);
    }
    Ok(log)
}

fn image_batch(tape: &mut Tape, images: &[ImageSample], idx: &[usize]) -> Result<Var> {
    let refs: Vec<&ImageSample> = idx.iter().map(|&i| &images[i]).collect();
    Ok(tape.constant(batch_images(&refs)?))
}

/// Post-detection noise for one training batch: SNR uniform over the configured range, one
/// block-fading coefficient per image, variance `σ_n²/|h|²` per complex symbol.
fn channel_noise(
    model: &HdaModel,
    kind: ChannelKind,
    shape: &[usize],
    rng: &mut SimRng,
) -> Result<Tensor> {
    let t = &model.config.train;
    let snr = if t.snr_max_db > t.snr_min_db {
        rng.random_range(t.snr_min_db..=t.snr_max_db)
    } else {
        t.snr_min_db
    };
    let (b, d) = (shape[0], shape[1]);
    let mut data = Vec::with_capacity(b * d);
    for _ in 0..b {
        let h = sample_channel(kind, rng).h.norm_sqr();
        let var = (noise_variance(snr) / h).min(MAX_TRAIN_NOISE_VAR);
        let sd = (var / 2.0).sqrt();
        data.extend((0..d).map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            sd * e
        }));
    }
    Tensor::new(&[b, d], data)
}

/// Tape handles of one pass through the training link.
#[derive(Clone, Copy, Debug)]
pub struct LinkTrace {
    pub z_hat: Var,
    pub coarse: Var,
    pub z_d: Var,
    pub z_d_tilde: Var,
    /// Power-normalized analog frame and what the receiver sees of it.
    pub analog_tx: Var,
    pub analog_rx: Var,
    /// `z̃_D` as handed to the receiver-side hyper decoder.
    pub z_d_rx: Var,
}

/// Analog link in training: allocation with the uniform-noise proxy, analog codec through the
/// noisy channel, error-free `z̃_D`, fusion.
pub fn training_link(
    model: &HdaModel,
    tape: &mut Tape,
    bind: &Binding,
    z: Var,
    kind: ChannelKind,
    rng: &mut SimRng,
) -> Result<LinkTrace> {
    let hyper = model.hyper();
    let analog = model.analog();
    let alloc = hyper.allocate(tape, bind, z, QuantMode::Train, rng)?;
    let x = analog.encode(tape, bind, alloc.z_a)?;
    let noise = channel_noise(model, kind, tape.shape(x), rng)?;
    let noise = tape.constant(noise);
    let y = tape.add(x, noise)?;
    let layout = tape.shape(z)[1..].to_vec();
    let z_a_hat = analog.decode(tape, bind, y, &layout)?;
    let z_hat = hyper.fuse(tape, bind, z_a_hat, alloc.z_d_tilde)?;
    Ok(LinkTrace {
        z_hat,
        coarse: alloc.coarse,
        z_d: alloc.z_d,
        z_d_tilde: alloc.z_d_tilde,
        analog_tx: x,
        analog_rx: y,
        z_d_rx: alloc.z_d_tilde,
    })
}

fn is_semantic(name: &str) -> bool {
    name.starts_with("sem_enc.") || name.starts_with("sem_dec.")
}

fn is_transceiver(name: &str) -> bool {
    [
        "hyper_enc.",
        "hyper_dec.",
        "analog_enc.",
        "analog_dec.",
        "density.",
    ]
    .iter()
    .any(|p| name.starts_with(p))
}

/// Semantic encoder/decoder on the pixel + Fourier distortion.
pub fn train_stage1(model: &mut HdaModel, images: &[ImageSample]) -> Result<StageLog> {
    let epochs = model.config.train.stage1_epochs;
    let log = run_stage(
        model,
        "stage1",
        1,
        epochs,
        images.len(),
        is_semantic,
        |m, tape, bind, idx, _| {
            let t = &m.config.train;
            let codec = m.semantic();
            let x = image_batch(tape, images, idx)?;
            let z = codec.encode(tape, bind, x)?;
            let r = codec.decode(tape, bind, z)?;
            let loss = semantic_loss(tape, x, r, t.lambda_f, t.per_channel_fourier)?;
            Ok(BatchOutput { loss, rate: None })
        },
    )?;
    model.status.stage1 = true;
    Ok(log)
}

/// Hyper codec, analog codec and density model on `L_CD + λ_r·L_rate`, semantic codec frozen.
pub fn train_stage2(model: &mut HdaModel, images: &[ImageSample]) -> Result<StageLog> {
    if !model.status.stage1 {
        return Err(HdaError::Refused(
            "stage 2 needs a trained semantic codec".into(),
        ));
    }
    let kind = model.config.channel_kind()?;
    let epochs = model.config.train.stage2_epochs;
    let log = run_stage(
        model,
        "stage2",
        2,
        epochs,
        images.len(),
        is_transceiver,
        |m, tape, bind, idx, rng| {
            let t = &m.config.train;
            let x = image_batch(tape, images, idx)?;
            let z = m.semantic().encode(tape, bind, x)?;
            // the frozen encoder output enters as data
            let z = tape.constant(tape.value(z).clone());
            let link = training_link(m, tape, bind, z, kind, rng)?;
            let cd = loss_channel_distortion(
                tape,
                z,
                link.z_hat,
                link.coarse,
                t.lambda_z,
                t.squared_channel_loss,
            )?;
            let rate = loss_rate(tape, bind, &m.density(), link.z_d_tilde)?;
            let weighted = tape.scale(rate, t.lambda_r);
            let loss = tape.add(cd, weighted)?;
            Ok(BatchOutput {
                loss,
                rate: Some((rate, link.z_d_tilde)),
            })
        },
    )?;
    model.status.stage2 = true;
    Ok(log)
}

/// Every transceiver parameter jointly on `L_SD + λ_r·L_rate` through the noisy link.
pub fn train_stage3(model: &mut HdaModel, images: &[ImageSample]) -> Result<StageLog> {
    if !model.status.stage2 {
        return Err(HdaError::Refused(
            "stage 3 needs a trained hybrid transceiver".into(),
        ));
    }
    let kind = model.config.channel_kind()?;
    let epochs = model.config.train.stage3_epochs;
    let trainable = |n: &str| is_semantic(n) || is_transceiver(n);
    let log = run_stage(
        model,
        "stage3",
        3,
        epochs,
        images.len(),
        trainable,
        |m, tape, bind, idx, rng| {
            let t = &m.config.train;
            let codec = m.semantic();
            let x = image_batch(tape, images, idx)?;
            let z = codec.encode(tape, bind, x)?;
            let link = training_link(m, tape, bind, z, kind, rng)?;
            let r = codec.decode(tape, bind, link.z_hat)?;
            let sd = semantic_loss(tape, x, r, t.lambda_f, t.per_channel_fourier)?;
            let rate = loss_rate(tape, bind, &m.density(), link.z_d_tilde)?;
            let weighted = tape.scale(rate, t.lambda_r);
            let loss = tape.add(sd, weighted)?;
            Ok(BatchOutput {
                loss,
                rate: Some((rate, link.z_d_tilde)),
            })
        },
    )?;
    model.status.stage3 = true;
    Ok(log)
}

/// Clean analog frames (diffusion domain, one row each) from the trained transmitter.
pub fn analog_frames(model: &HdaModel, images: &[ImageSample]) -> Result<Tensor> {
    let semantic = model.semantic();
    let hyper = model.hyper();
    let analog = model.analog();
    let dim = 2 * analog.symbols;
    let mut data = Vec::with_capacity(images.len() * dim);
    let mut rng = seeded(0);
    for chunk in images.chunks(model.config.train.batch_size.max(1)) {
        let mut tape = Tape::new();
        let bind = model.params.bind(&mut tape, |_| false);
        let refs: Vec<&ImageSample> = chunk.iter().collect();
        let x = tape.constant(batch_images(&refs)?);
        let z = semantic.encode(&mut tape, &bind, x)?;
        let alloc = hyper.allocate(&mut tape, &bind, z, QuantMode::Infer, &mut rng)?;
        let frames = analog.encode(&mut tape, &bind, alloc.z_a)?;
        for row in tape.value(frames).data().chunks(dim) {
            let symbols: Vec<Complex64> = to_complex(row);
            data.extend(to_diffusion_domain(&symbols));
        }
    }
    if data.is_empty() {
        return dim_err("no frames to train the denoisers on");
    }
    Tensor::new(&[images.len(), dim], data)
}

/// Images used for denoiser training: fresh textures, or the configured dataset cycled.
fn denoiser_images(model: &HdaModel, training: &[ImageSample]) -> Vec<ImageSample> {
    let c = &model.config;
    let n = c.train.denoiser_frames;
    if c.train.dataset_dir.is_some() && !training.is_empty() {
        (0..n)
            .map(|i| training[i % training.len()].clone())
            .collect()
    } else {
        let seed = derive_seed(c.train.seed, &[0xd1f]);
        (0..n)
            .map(|i| generate_texture(seed, i, c.model.image_size))
            .collect()
    }
}

/// Noise predictor (diffusion) and the blind one-step baseline on frames from the trained
/// transmitter.
pub fn train_denoisers(model: &mut HdaModel, training: &[ImageSample]) -> Result<Vec<StageLog>> {
    if !model.status.link_trained() {
        return Err(HdaError::Refused(
            "denoisers need a trained transceiver".into(),
        ));
    }
    let frames = analog_frames(model, &denoiser_images(model, training))?;
    let rows = frames.shape()[0];
    let dim = frames.shape()[1];
    let epochs = model.config.train.denoiser_epochs;
    let kind = model.config.channel_kind()?;
    let schedule = model.schedule()?;
    let gather = |idx: &[usize]| {
        let mut d = Vec::with_capacity(idx.len() * dim);
        for &i in idx {
            d.extend_from_slice(&frames.data()[i * dim..(i + 1) * dim]);
        }
        Tensor::new(&[idx.len(), dim], d)
    };
    let net = model.denoiser();
    // steps follow the detection noise levels met in training; the sampler walks every step
    // below its starting point, so the row step is drawn uniformly under the matched one
    let diff = run_stage(
        model,
        "denoiser",
        4,
        epochs,
        rows,
        owned_by(&net),
        |m, tape, bind, idx, rng| {
            let steps: Vec<usize> = idx
                .iter()
                .map(|_| {
                    let top = map_noise_to_step(detection_noise(m, kind, rng), &schedule).max(1);
                    rng.random_range(1..=top)
                })
                .collect();
            let loss = diffusion_loss_at(tape, bind, &net, &gather(idx)?, &steps, &schedule, rng)?;
            Ok(BatchOutput { loss, rate: None })
        },
    )?;
    model.status.denoiser = true;
    let net = model.one_step();
    let one = run_stage(
        model,
        "onestep",
        5,
        epochs,
        rows,
        owned_by(&net),
        |m, tape, bind, idx, rng| {
            let vars: Vec<f64> = idx.iter().map(|_| detection_noise(m, kind, rng)).collect();
            let loss = one_step_loss(tape, bind, &net, &gather(idx)?, &vars, rng)?;
            Ok(BatchOutput { loss, rate: None })
        },
    )?;
    model.status.onestep = true;
    Ok(vec![diff, one])
}

/// Post-detection noise variance of one frame: training SNR range and one fading draw.
fn detection_noise(model: &HdaModel, kind: ChannelKind, rng: &mut SimRng) -> f64 {
    let t = &model.config.train;
    let snr = if t.snr_max_db > t.snr_min_db {
        rng.random_range(t.snr_min_db..=t.snr_max_db)
    } else {
        t.snr_min_db
    };
    (noise_variance(snr) / sample_channel(kind, rng).h.norm_sqr()).min(MAX_TRAIN_NOISE_VAR)
}

fn owned_by(net: &DenoiserNet) -> impl Fn(&str) -> bool + '_ {
    move |n: &str| {
        n.strip_prefix(net.prefix.as_str())
            .is_some_and(|r| r.starts_with('.'))
    }
}

/// Stages 1–3 and both denoisers in order.
pub fn train_all(model: &mut HdaModel, images: &[ImageSample]) -> Result<Vec<StageLog>> {
    let mut logs = vec![
        train_stage1(model, images)?,
        train_stage2(model, images)?,
        train_stage3(model, images)?,
    ];
    logs.extend(train_denoisers(model, images)?);
    Ok(logs)
}
