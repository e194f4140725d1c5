use std::io::Write;

use serde::Serialize;

use crate::error::{HdaError, Result};

/// One CSV row: a single frame, or the mean over a sweep point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub snr_db: f64,
    pub channel: String,
    /// Bandwidth ratio `L / (3·H·W)`.
    pub eta: f64,
    /// `L_D / L_A`.
    pub da_ratio: f64,
    /// Digital bits per pixel.
    pub bpp: f64,
    pub psnr_db: f64,
    pub ms_ssim: f64,
    pub frames_dropped: usize,
    pub denoiser: String,
    pub encrypted: bool,
}

pub const METRICS_COLUMNS: [&str; 10] = [
    "snr_db",
    "channel",
    "eta",
    "da_ratio",
    "bpp",
    "psnr_db",
    "ms_ssim",
    "frames_dropped",
    "denoiser",
    "encrypted",
];

/// Paired legitimate/eavesdropper result for one trial.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecurityRecord {
    pub snr_db: f64,
    pub channel: String,
    pub da_ratio: f64,
    pub trial: usize,
    pub eavesdropper: String,
    pub psnr_plain_db: f64,
    pub psnr_legitimate_db: f64,
    pub psnr_eavesdropper_db: f64,
    pub gap_db: f64,
}

pub const SECURITY_COLUMNS: [&str; 9] = [
    "snr_db",
    "channel",
    "da_ratio",
    "trial",
    "eavesdropper",
    "psnr_plain_db",
    "psnr_legitimate_db",
    "psnr_eavesdropper_db",
    "gap_db",
];

fn write_rows<R: Serialize>(out: impl Write, header: &[&str], rows: &[R]) -> Result<()> {
    let err = |e: csv::Error| HdaError::Io(std::io::Error::other(e));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Header row followed by one row per record (header only when `rows` is empty).
pub fn write_metrics_csv(out: impl Write, rows: &[MetricsRecord]) -> Result<()> {
    write_rows(out, &METRICS_COLUMNS, rows)
}

pub fn write_security_csv(out: impl Write, rows: &[SecurityRecord]) -> Result<()> {
    write_rows(out, &SECURITY_COLUMNS, rows)
}
