//! Quantization, the learned factorized density, range coding and the rate loss.

mod bitstream;
mod density;
mod quantize;
mod range_coder;
mod rate;

pub use bitstream::{
    range_decode, range_encode, Bitstream, BITSTREAM_MAGIC, BITSTREAM_VERSION, FLAG_ENCRYPTED,
};
pub use density::{DensityEvaluator, FactorizedDensity, DENSITY_FILTERS};
pub use quantize::{dequantize, quantize, Quantized};
pub use range_coder::{FrequencyTable, RangeDecoder, RangeEncoder, TABLE_BITS, TABLE_TOTAL};
pub use rate::{loss_rate, rate_from_likelihoods};

/// Largest representable symbol magnitude.
pub const SUPPORT_BOUND: i32 = 255;
/// Lower bound applied to every bin probability.
pub const PROB_FLOOR: f64 = 1.0 / 65536.0;
