//! Trains a small model on procedural textures and prints its sweeps.
//!
//! `cargo run --release -p hda-core --example desk_run -- [config.toml]`
//!
//! With `DESK_LINK=path` the trained link (stages 1–3) is saved there, or loaded from there
//! when the file exists, so only the denoisers are retrained.

use std::path::{Path, PathBuf};
use std::time::Instant;

use hda_core::diffusion::{dynamic_sample, one_step_denoise, rescale_detected};
use hda_core::harness::{
    held_out_images, run_security_eval, run_snr_sweep, write_metrics_csv, write_security_csv,
    SweepSettings,
};
use hda_core::pipeline::{
    analog_frames, infer, load_checkpoint, save_checkpoint, train_denoisers, train_stage1,
    train_stage2, train_stage3, training_images, Config, DenoiserMode, HdaModel, InferOptions,
    StageLog,
};
use hda_core::rng::seeded;
use rand_distr::{Distribution, StandardNormal};

fn report(log: &StageLog, start: &Instant) {
    let first = log.epochs.first().map_or(f64::NAN, |e| e.loss);
    let last = log.epochs.last().map_or(f64::NAN, |e| e.loss);
    let rate = log
        .epochs
        .last()
        .and_then(|e| e.rate_bpp)
        .map(|r| format!(", rate {r:.4} bpp"))
        .unwrap_or_default();
    println!(
        "{}: loss {first:.5} -> {last:.5}{rate} [{:.0}s]",
        log.stage,
        start.elapsed().as_secs_f64()
    );
}

/// Copies the link parameters and status from a saved model.
fn load_link(model: &mut HdaModel, path: &Path) -> hda_core::Result<()> {
    let old = load_checkpoint(path)?;
    for (name, t) in old.params.iter() {
        if !name.starts_with("denoiser.") && !name.starts_with("onestep.") {
            model.params.insert(name, t.clone());
        }
    }
    model.status = old.status;
    model.status.denoiser = false;
    model.status.onestep = false;
    Ok(())
}

fn main() -> hda_core::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(p) => Config::load(Path::new(&p))?,
        None => Config::default(),
    };
    let mut model = HdaModel::new(config)?;
    let images = training_images(&model)?;
    let start = Instant::now();
    let cached = std::env::var_os("DESK_LINK").map(PathBuf::from);
    match cached.as_deref().filter(|p| p.exists()) {
        Some(p) => load_link(&mut model, p)?,
        None => {
            report(&train_stage1(&mut model, &images)?, &start);
            report(&train_stage2(&mut model, &images)?, &start);
            report(&train_stage3(&mut model, &images)?, &start);
            if let Some(p) = &cached {
                save_checkpoint(&model, p)?;
            }
        }
    }
    for log in train_denoisers(&mut model, &images)? {
        report(&log, &start);
    }

    let eval = held_out_images(&model, model.config.eval.images);
    let mut clean = 0.0;
    for img in &eval {
        clean += infer(&model, img, &InferOptions::default())?
            .metrics
            .psnr_db;
    }
    println!("noiseless link {:.2} dB", clean / eval.len() as f64);

    let mut settings = SweepSettings::from_model(&model)?;
    let snrs = model.config.eval.snr_db.clone();
    for mode in [
        DenoiserMode::Off,
        DenoiserMode::Diffusion,
        DenoiserMode::OneStep,
    ] {
        settings.denoiser = mode;
        write_metrics_csv(
            std::io::stdout(),
            &run_snr_sweep(&model, &eval, &snrs, &settings)?,
        )?;
    }
    symbol_mse(&model)?;
    if model.config.link.cipher_key.is_some() {
        settings.denoiser = DenoiserMode::Off;
        let rows = run_security_eval(&model, &eval, model.config.eval.fixed_snr_db, &settings)?;
        write_security_csv(std::io::stdout(), &rows)?;
    }
    Ok(())
}

/// Analog symbol MSE of the raw, diffusion-refined and one-step outputs on held-out frames.
fn symbol_mse(model: &HdaModel) -> hda_core::Result<()> {
    let frames = analog_frames(model, &held_out_images(model, 200))?;
    let d = frames.shape()[1];
    let net = model.denoiser();
    let base = model.one_step();
    let schedule = model.schedule()?;
    let mut rng = seeded(3);
    let mse = |x0: &[f64], y: &[f64]| {
        x0.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / d as f64
    };
    for snr_db in [0.0, 5.0, 10.0] {
        let var = 10f64.powf(-snr_db / 10.0);
        let (mut raw, mut diff, mut one) = (0.0, 0.0, 0.0);
        for x0 in frames.data().chunks(d) {
            let noisy: Vec<f64> = x0
                .iter()
                .map(|v| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + var.sqrt() * e
                })
                .collect();
            let xt = rescale_detected(&noisy, var)?;
            raw += mse(x0, &noisy);
            diff += mse(
                x0,
                &dynamic_sample(&xt, var, &model.trained_denoiser(&net), &schedule)?,
            );
            one += mse(
                x0,
                &one_step_denoise(&xt, var, &model.trained_denoiser(&base))?,
            );
        }
        let n = (frames.len() / d) as f64;
        println!(
            "symbol mse at {snr_db} dB: raw {:.4}, diffusion {:.4}, one-step {:.4}",
            raw / n,
            diff / n,
            one / n
        );
    }
    Ok(())
}
