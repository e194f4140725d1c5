//! Digital physical layer: LDPC coding, modulation, framing and AMC.

mod amc;
mod frame;
mod ldpc;
mod modulation;

pub use amc::{
    calibrate_threshold, calibration_bler, simulate_bler, AmcEntry, AmcTable, CALIBRATION_BLOCKS,
    CALIBRATION_SEED, DEFAULT_THRESHOLDS_DB, LADDER,
};
pub use frame::{
    bits_to_bytes, bytes_to_bits, receive_blocks, symbols_for_blocks, transmit_bits, PhyHeader,
    ReceivedBits,
};
pub use ldpc::{
    parse_sparse, CodeRate, DecodeOutput, LdpcCode, BLOCK_LEN, DEFAULT_MAX_ITERS, LLR_CLIP,
    MIN_SUM_SCALE,
};
pub use modulation::{demodulate_soft, hard_decision, modulate, Demapper, Modulation};
