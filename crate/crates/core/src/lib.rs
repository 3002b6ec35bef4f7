//! Residual Fourier-convolution super-resolution GAN.

pub mod error;
pub mod gradcheck;
pub mod imaging;
pub mod nets;
pub mod objectives;
pub mod optimization;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Element, Tensor};
