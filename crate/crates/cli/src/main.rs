//! `hda`: train, evaluate and sweep hybrid digital-analog image links.

mod selftest;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hda_core::harness::{
    held_out_images, run_bandwidth_sweep, run_da_ratio_sweep, run_security_eval, run_snr_sweep,
    write_metrics_csv, write_security_csv, SweepSettings,
};
use hda_core::pipeline::{
    infer, load_checkpoint, load_image, save_checkpoint, train_all, training_images, Config,
    DenoiserMode, HdaModel, InferOptions, Receiver, StageLog,
};
use hda_core::rng::derive_seed;
use hda_core::HdaError;

#[derive(Parser)]
#[command(
    name = "hda",
    version,
    about = "Hybrid digital-analog semantic image transmission"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every stage and both denoisers, then write the checkpoint.
    Train(Opts),
    /// Send images (held-out textures when none are given) once each and print their metrics.
    Infer {
        #[command(flatten)]
        opts: Opts,
        /// PNG or PNM images; resized to the model's image size.
        images: Vec<PathBuf>,
    },
    /// Metrics over a list of SNRs.
    SweepSnr(Opts),
    /// One row per checkpoint (DA ratios at a common symbol budget) at a fixed SNR.
    SweepDa(Opts),
    /// One row per checkpoint (bandwidth ratios) at a fixed SNR.
    SweepBw(Opts),
    /// Plain, keyed and eavesdropping receivers per trial.
    Security(Opts),
    /// Fast internal consistency checks; no checkpoint needed.
    Selftest(Opts),
}

#[derive(Args, Clone, Default)]
struct Opts {
    /// TOML configuration; for evaluation commands only its [eval] and [link] sections apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint to write (train) or read; sweep-da and sweep-bw take it repeatedly.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
    /// Comma-separated SNRs in dB; `inf` means noiseless.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    channel: Option<ChannelArg>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    denoiser: Option<DenoiserArg>,
    #[arg(long)]
    encrypt: Option<Switch>,
    /// Output CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Awgn,
    Rayleigh,
    Rician,
}

impl ChannelArg {
    fn name(self) -> &'static str {
        match self {
            ChannelArg::Awgn => "awgn",
            ChannelArg::Rayleigh => "rayleigh",
            ChannelArg::Rician => "rician",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DenoiserArg {
    Off,
    Diff,
    Onestep,
}

impl From<DenoiserArg> for DenoiserMode {
    fn from(d: DenoiserArg) -> Self {
        match d {
            DenoiserArg::Off => DenoiserMode::Off,
            DenoiserArg::Diff => DenoiserMode::Diffusion,
            DenoiserArg::Onestep => DenoiserMode::OneStep,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &HdaError) -> u8 {
    match e {
        HdaError::Config(_) => 2,
        HdaError::Checkpoint(_) => 3,
        _ => 4,
    }
}

fn run(command: Command) -> hda_core::Result<()> {
    match command {
        Command::Train(o) => train(&o),
        Command::Infer { opts, images } => infer_images(&opts, &images),
        Command::SweepSnr(o) => {
            let model = single_model(&o)?;
            let snrs = o
                .snr
                .clone()
                .unwrap_or_else(|| model.config.eval.snr_db.clone());
            let images = held_out_images(&model, model.config.eval.images);
            let rows = run_snr_sweep(&model, &images, &snrs, &SweepSettings::from_model(&model)?)?;
            write_metrics_csv(output(&o)?, &rows)
        }
        Command::SweepDa(o) | Command::SweepBw(o) if o.checkpoint.is_empty() => Err(
            HdaError::Config("at least one --checkpoint is required".into()),
        ),
        Command::SweepDa(o) => {
            let models = models(&o)?;
            let (images, snr, settings) = sweep_inputs(&o, &models)?;
            write_metrics_csv(
                output(&o)?,
                &run_da_ratio_sweep(&models, &images, snr, &settings)?,
            )
        }
        Command::SweepBw(o) => {
            let models = models(&o)?;
            let (images, snr, settings) = sweep_inputs(&o, &models)?;
            write_metrics_csv(
                output(&o)?,
                &run_bandwidth_sweep(&models, &images, snr, &settings)?,
            )
        }
        Command::Security(o) => {
            let model = single_model(&o)?;
            let snr = fixed_snr(&o, &model)?;
            let images = held_out_images(&model, model.config.eval.images);
            let rows =
                run_security_eval(&model, &images, snr, &SweepSettings::from_model(&model)?)?;
            write_security_csv(output(&o)?, &rows)
        }
        Command::Selftest(o) => {
            let failures = selftest::run(o.seed.unwrap_or(1), &mut output(&o)?)?;
            if failures > 0 {
                return Err(HdaError::Refused(format!(
                    "{failures} self-test check(s) failed"
                )));
            }
            Ok(())
        }
    }
}

fn output(o: &Opts) -> hda_core::Result<Box<dyn Write>> {
    Ok(match &o.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn train(o: &Opts) -> hda_core::Result<()> {
    let [path] = o.checkpoint.as_slice() else {
        return Err(HdaError::Config(
            "train needs exactly one --checkpoint to write".into(),
        ));
    };
    let mut config = match &o.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = o.seed {
        config.train.seed = s;
    }
    if let Some(c) = o.channel {
        config.train.channel = c.name().into();
    }
    if let Some(snr) = &o.snr {
        let finite: Vec<f64> = snr.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return Err(HdaError::Config(
                "--snr needs at least one finite value for training".into(),
            ));
        }
        config.train.snr_min_db = finite.iter().copied().fold(f64::INFINITY, f64::min);
        config.train.snr_max_db = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    apply_eval_flags(&mut config, o);
    config.validate()?;
    let mut model = HdaModel::new(config)?;
    let images = training_images(&model)?;
    let logs = train_all(&mut model, &images)?;
    save_checkpoint(&model, path)?;
    write_training_log(output(o)?, &logs)
}

fn write_training_log(mut out: impl Write, logs: &[StageLog]) -> hda_core::Result<()> {
    writeln!(out, "stage,epoch,loss,rate_bpp")?;
    for log in logs {
        for e in &log.epochs {
            let rate = e.rate_bpp.map(|r| r.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{rate}", log.stage, e.epoch, e.loss)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Flags that land in the `[eval]` section.
fn apply_eval_flags(config: &mut Config, o: &Opts) {
    let e = &mut config.eval;
    if let Some(c) = o.channel {
        e.channel = Some(c.name().into());
    }
    if let Some(t) = o.trials {
        e.trials = t;
    }
    if let Some(s) = o.seed {
        e.seed = s;
    }
    if let Some(d) = o.denoiser {
        e.denoiser = d.into();
    }
    if let Some(s) = o.encrypt {
        e.encrypt = matches!(s, Switch::On);
    }
}

/// A checkpoint with the file's `[eval]`/`[link]` sections and the flags applied on top.
fn load_model(path: &Path, o: &Opts) -> hda_core::Result<HdaModel> {
    let mut model = load_checkpoint(path)?;
    if let Some(p) = &o.config {
        let file = Config::load(p)?;
        model.config.eval = file.eval;
        model.config.link = file.link;
    }
    apply_eval_flags(&mut model.config, o);
    model.config.validate()?;
    Ok(model)
}

fn models(o: &Opts) -> hda_core::Result<Vec<HdaModel>> {
    o.checkpoint.iter().map(|p| load_model(p, o)).collect()
}

fn single_model(o: &Opts) -> hda_core::Result<HdaModel> {
    match o.checkpoint.as_slice() {
        [p] => load_model(p, o),
        _ => Err(HdaError::Config(
            "exactly one --checkpoint is required".into(),
        )),
    }
}

fn fixed_snr(o: &Opts, model: &HdaModel) -> hda_core::Result<f64> {
    match o.snr.as_deref() {
        None => Ok(model.config.eval.fixed_snr_db),
        Some([s]) if s.is_finite() => Ok(*s),
        Some(_) => Err(HdaError::Config(
            "this command takes a single finite --snr".into(),
        )),
    }
}

fn sweep_inputs(
    o: &Opts,
    models: &[HdaModel],
) -> hda_core::Result<(Vec<hda_core::semantic::ImageSample>, f64, SweepSettings)> {
    let first = &models[0];
    let snr = fixed_snr(o, first)?;
    Ok((
        held_out_images(first, first.config.eval.images),
        snr,
        SweepSettings::from_model(first)?,
    ))
}

fn infer_images(o: &Opts, paths: &[PathBuf]) -> hda_core::Result<()> {
    let model = single_model(o)?;
    let size = model.config.model.image_size;
    let images = if paths.is_empty() {
        held_out_images(&model, model.config.eval.images)
    } else {
        paths
            .iter()
            .map(|p| load_image(p, size))
            .collect::<hda_core::Result<Vec<_>>>()?
    };
    let snr_db = match o.snr.as_deref() {
        None => Some(model.config.eval.fixed_snr_db),
        Some([s]) if s.is_infinite() && *s > 0.0 => None,
        Some([s]) if s.is_finite() => Some(*s),
        Some(_) => Err(HdaError::Config("infer takes a single --snr".into()))?,
    };
    let e = &model.config.eval;
    let mut rows = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let opts = InferOptions {
            channel: model.config.eval_channel()?,
            snr_db,
            denoiser: e.denoiser,
            encrypt: e.encrypt,
            receiver: Receiver::Legitimate,
            seed: derive_seed(e.seed, &[i as u64]),
        };
        rows.push(infer(&model, img, &opts)?.metrics);
    }
    write_metrics_csv(output(o)?, &rows)
}
