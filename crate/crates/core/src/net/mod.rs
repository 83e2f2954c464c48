//! A minimal trainable classifier whose first layer is a transpose
//! convolution, in a conventional (upsample + convolve) and a segregated
//! variant, plus finite-difference gradient checks for every layer.

pub mod data;
pub mod gradcheck;
pub mod layers;
pub mod model;
pub mod train;

pub use layers::{Conv2d, Dense, FusedTransposeConv, Layer, MaxPool2, Relu, Upsample2x};
pub use model::{build_conventional_model, build_proposed_model, Model, ModelVariant};
pub use train::{train, TrainConfig, TrainReport};
