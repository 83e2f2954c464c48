//! File formats: the SGC1 tensor format, Netpbm images and IDX datasets.

pub mod idx;
pub mod pnm;
pub mod tensor_file;

pub use tensor_file::{read_tensor, read_tensor_file, write_tensor, write_tensor_file, AnyTensor};
