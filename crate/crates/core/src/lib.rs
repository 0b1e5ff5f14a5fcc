//! Weight quantization by `l1` (median) and `l2` (mean) projections, and
//! BinaryConnect-style training of small networks with them.

pub mod cli;
pub mod data;
pub mod error;
pub mod io;
pub mod model;
pub mod oracle;
pub mod quantize;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor;
