//! Configuration, three-stage training, end-to-end inference, datasets and checkpoints.

mod checkpoint;
mod config;
mod dataset;
mod infer;
mod model;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{
    parse_key, Config, DigitalMode, EavesdropperMode, EvalConfig, LinkConfig, ModelConfig,
    TrainingConfig,
};
pub use dataset::{generate_texture, generate_textures, load_dataset, load_image, save_png};
pub use infer::{infer, DenoiserMode, FrameReport, InferOptions, Inference, Receiver};
pub use model::{HdaModel, TrainingStatus, PARAM_GROUPS};
pub use train::{
    analog_frames, train_all, train_denoisers, train_stage1, train_stage2, train_stage3,
    training_images, training_link, EpochLog, LinkTrace, StageLog,
};
