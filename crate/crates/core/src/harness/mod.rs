//! Quality metrics, the bitstream cipher, experiment sweeps and CSV output.

mod cipher;
mod metrics;
mod record;
mod sweeps;

pub use cipher::{decrypt_bits, encrypt_bits, KeystreamCipher};
pub use metrics::{
    ms_ssim, ms_ssim_scales, psnr, MS_SSIM_WEIGHTS, PSNR_CAP_DB, SSIM_SIGMA, SSIM_WINDOW,
};
pub use record::{
    write_metrics_csv, write_security_csv, MetricsRecord, SecurityRecord, METRICS_COLUMNS,
    SECURITY_COLUMNS,
};
pub use sweeps::{
    evaluate_point, held_out_images, run_bandwidth_sweep, run_da_ratio_sweep, run_security_eval,
    run_snr_sweep, SweepSettings,
};
