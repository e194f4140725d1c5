use std::path::Path;

use serde::{Deserialize, Serialize};

use super::infer::DenoiserMode;
use crate::channel::ChannelKind;
use crate::error::{HdaError, Result};
use crate::hda::HYPER_DOWNSAMPLE;
use crate::phy::{AmcTable, Demapper, DEFAULT_THRESHOLDS_DB};
use crate::semantic::SEMANTIC_DOWNSAMPLE;

/// Everything a run needs, stored as TOML and embedded in checkpoints.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub train: TrainingConfig,
    pub link: LinkConfig,
    pub eval: EvalConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Square image side in pixels.
    pub image_size: usize,
    pub semantic_hidden: [usize; 2],
    pub latent_channels: usize,
    pub hyper_hidden: usize,
    /// Channels of `z_D`; sets the digital share of the features.
    pub digital_channels: usize,
    pub analog_hidden: usize,
    /// `L_A`, complex analog symbols per image.
    pub analog_symbols: usize,
    /// `L_D`, complex digital symbols reserved per image.
    pub digital_symbols: usize,
    pub denoiser_width: usize,
    pub diffusion_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 64,
            semantic_hidden: [32, 64],
            latent_channels: 16,
            hyper_hidden: 32,
            digital_channels: 4,
            analog_hidden: 512,
            analog_symbols: 1344,
            digital_symbols: 1344,
            denoiser_width: 256,
            diffusion_steps: 50,
        }
    }
}

impl ModelConfig {
    pub fn feature_shape(&self) -> [usize; 3] {
        let g = self.image_size / SEMANTIC_DOWNSAMPLE;
        [self.latent_channels, g, g]
    }

    pub fn feature_len(&self) -> usize {
        self.feature_shape().iter().product()
    }

    pub fn digital_shape(&self) -> [usize; 3] {
        let g = self.image_size / SEMANTIC_DOWNSAMPLE / HYPER_DOWNSAMPLE;
        [self.digital_channels, g, g]
    }

    /// Symbols per image `L = L_A + L_D`.
    pub fn total_symbols(&self) -> usize {
        self.analog_symbols + self.digital_symbols
    }

    /// `L_D / L_A`.
    pub fn da_ratio(&self) -> f64 {
        self.digital_symbols as f64 / self.analog_symbols as f64
    }

    /// `η = L / (3·H·W)`.
    pub fn bandwidth_ratio(&self) -> f64 {
        self.total_symbols() as f64 / (3 * self.image_size * self.image_size) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub lambda_f: f64,
    pub lambda_z: f64,
    pub lambda_r: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub stage1_epochs: usize,
    pub stage2_epochs: usize,
    pub stage3_epochs: usize,
    pub denoiser_epochs: usize,
    /// Clean analog frames generated for denoiser training.
    pub denoiser_frames: usize,
    pub seed: u64,
    pub channel: String,
    pub rician_k: f64,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    /// Use `‖z − ẑ‖²` instead of `‖z − ẑ‖` in the channel distortion.
    pub squared_channel_loss: bool,
    /// Fourier term per colour channel (otherwise on luminance only).
    pub per_channel_fourier: bool,
    /// Optional image directory; procedural textures are used when absent.
    pub dataset_dir: Option<String>,
    pub textures: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lambda_f: 0.1,
            lambda_z: 0.1,
            lambda_r: 0.0005,
            learning_rate: 2e-4,
            batch_size: 8,
            stage1_epochs: 30,
            stage2_epochs: 30,
            stage3_epochs: 10,
            denoiser_epochs: 30,
            denoiser_frames: 4000,
            seed: 1,
            channel: "rician".into(),
            rician_k: 1.0,
            snr_min_db: 0.0,
            snr_max_db: 18.0,
            squared_channel_loss: false,
            per_channel_fourier: true,
            dataset_dir: None,
            textures: 400,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DigitalMode {
    /// LDPC + QAM over the simulated channel.
    #[default]
    Ldpc,
    /// Error-free whenever the AMC efficiency fits the channel capacity, else erased.
    Ideal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EavesdropperMode {
    /// Decrypts with a wrong key and decodes whatever comes out.
    #[default]
    Garbage,
    /// Ignores the digital branch entirely.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub amc_thresholds_db: Vec<f64>,
    pub demapper: Demapper,
    pub ldpc_iterations: usize,
    pub digital_mode: DigitalMode,
    /// 64 hex digits; required by the security experiment.
    pub cipher_key: Option<String>,
    pub cipher_nonce: u64,
    pub eavesdropper: EavesdropperMode,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            amc_thresholds_db: DEFAULT_THRESHOLDS_DB.to_vec(),
            demapper: Demapper::Exact,
            ldpc_iterations: crate::phy::DEFAULT_MAX_ITERS,
            digital_mode: DigitalMode::Ldpc,
            cipher_key: None,
            cipher_nonce: 0,
            eavesdropper: EavesdropperMode::Garbage,
        }
    }
}

/// Defaults for the experiment sweeps; command-line flags override them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub snr_db: Vec<f64>,
    /// SNR for the bandwidth, DA-ratio and security experiments.
    pub fixed_snr_db: f64,
    /// Channel for evaluation; the training channel when absent.
    pub channel: Option<String>,
    pub trials: usize,
    /// Held-out procedural textures per trial.
    pub images: usize,
    pub seed: u64,
    pub denoiser: DenoiserMode,
    pub encrypt: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            snr_db: vec![0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0],
            fixed_snr_db: 10.0,
            channel: None,
            trials: 4,
            images: 8,
            seed: 7,
            denoiser: DenoiserMode::Off,
            encrypt: false,
        }
    }
}

impl LinkConfig {
    pub fn amc_table(&self) -> Result<AmcTable> {
        AmcTable::with_thresholds(&self.amc_thresholds_db)
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| HdaError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HdaError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn channel_kind(&self) -> Result<ChannelKind> {
        ChannelKind::parse(&self.train.channel, self.train.rician_k)
    }

    pub fn eval_channel(&self) -> Result<ChannelKind> {
        match &self.eval.channel {
            Some(c) => ChannelKind::parse(c, self.train.rician_k),
            None => self.channel_kind(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        let t = &self.train;
        let bad = |msg: String| Err(HdaError::Config(msg));
        let step = SEMANTIC_DOWNSAMPLE * HYPER_DOWNSAMPLE;
        if m.image_size < 8 || !m.image_size.is_multiple_of(step) {
            return bad(format!("image_size must be a multiple of {step}"));
        }
        if [
            m.latent_channels,
            m.hyper_hidden,
            m.digital_channels,
            m.analog_hidden,
            m.analog_symbols,
        ]
        .contains(&0)
            || m.semantic_hidden.contains(&0)
        {
            return bad("layer sizes must be positive".into());
        }
        if m.diffusion_steps == 0 || m.denoiser_width == 0 {
            return bad("denoiser sizes must be positive".into());
        }
        if [t.lambda_f, t.lambda_z, t.lambda_r]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return bad("loss weights must be non-negative".into());
        }
        if !(t.learning_rate > 0.0) {
            return bad("learning_rate must be positive".into());
        }
        if t.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if t.snr_min_db > t.snr_max_db {
            return bad("snr_min_db exceeds snr_max_db".into());
        }
        self.channel_kind()?;
        self.eval_channel()?;
        self.link.amc_table()?;
        if let Some(k) = &self.link.cipher_key {
            parse_key(k)?;
        }
        Ok(())
    }
}

/// Parses a 256-bit key written as 64 hex digits.
pub fn parse_key(hex: &str) -> Result<[u8; 32]> {
    let hex = hex.trim();
    if hex.len() != 64 || !hex.is_ascii() {
        return Err(HdaError::Config("cipher key must be 64 hex digits".into()));
    }
    let mut key = [0u8; 32];
    for (i, k) in key.iter_mut().enumerate() {
        *k = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
            .map_err(|_| HdaError::Config("cipher key must be 64 hex digits".into()))?;
    }
    Ok(key)
}
