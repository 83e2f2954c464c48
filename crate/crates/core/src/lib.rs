//! Transpose convolution by kernel segregation.
//!
//! A 2× transpose convolution is normally computed by inserting zeros
//! between input samples, padding, and running an ordinary convolution. Most
//! of those multiplications hit inserted zeros. Splitting the kernel by tap
//! parity into four sub-kernels lets each output parity class be computed
//! as a small dense convolution over the original input instead.
//!
//! * [`tensor`]: HWC tensors, padding, zero-insertion upsampling.
//! * [`reference`]: valid convolution and the naive transpose convolution.
//! * [`segregation`]: the four parity sub-kernels.
//! * [`fused`]: the optimized transpose convolution.
//! * [`analysis`]: analytical multiply/add/memory accounting.
//! * [`net`]: a small trainable network using either layer variant.
//! * [`verify`] and [`timing`]: the equivalence fuzzer and benchmark harness.
//! * [`io`]: tensor files, PGM/PPM images and IDX datasets.

pub mod analysis;
pub mod error;
pub mod fused;
pub mod io;
pub mod net;
pub mod reference;
pub mod segregation;
pub mod tensor;
pub mod timing;
pub mod verify;

pub use error::{Error, Result};
pub use fused::{transpose_conv, transpose_conv_fused, transpose_conv_fused_parallel};
pub use reference::{conv2d_valid, geometry, transpose_conv_naive, TConvGeometry};
pub use segregation::{segregate, SubKernelSet};
pub use tensor::{
    pad, tensors_equal_approx, tensors_equal_exact, upsample2x, Element, Kernel, Precision, Tensor,
};
