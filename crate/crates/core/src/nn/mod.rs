//! Dense tensors with reverse-mode differentiation, the layer set used by the codecs,
//! and the Adam optimizer.

mod adam;
mod dft;
mod gradcheck;
mod kernels;
mod layers;
mod params;
mod tape;
mod tensor;

pub use adam::{adam_update, AdamConfig, OptimizerState};
pub use dft::{dft2d, idft2d, ComplexGrid};
pub use gradcheck::finite_difference_check;
pub use layers::{
    conv2d_forward, dense_forward, pixel_shuffle_forward, pixel_unshuffle_forward, Conv2d, Linear,
};
pub use params::{Binding, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::{sigmoid, softplus};

/// Leaky-ReLU slope used by the hyper and analog codecs.
pub const LEAKY_SLOPE: f64 = 0.2;
