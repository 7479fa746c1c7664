//! Tensor robust PCA with total-variation regularized foreground for
//! background subtraction from compressive video measurements.

pub mod admm;
pub mod cli;
pub mod compressive;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod patch;
pub mod synth;
pub mod tensor;
pub mod tv;

pub use error::{Error, Result};
pub use tensor::{DenseTensor, Matrix};
