//! Fourier-convolution generator, residual discriminator, and noise injection.

mod discriminator;
mod ffc;
mod generator;
mod noise;
mod params;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use ffc::{ffc_block_forward, spectral_transform, FfcBlock, FfcBlockConfig, SpectralParams};
pub use generator::{Generator, GeneratorConfig};
pub use noise::{inject_noise, NoiseState};
pub use params::{ParamId, ParamSet};

use crate::tensor::BnMode;

/// Forward-pass mode shared by both networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    pub(crate) fn bn(self) -> BnMode {
        match self {
            Mode::Train => BnMode::Train,
            Mode::Eval => BnMode::Eval,
        }
    }
}

/// Trainable scalars of a `cin -> cout` conv with a `k x k` kernel.
pub fn conv_param_count(cin: usize, cout: usize, k: usize, bias: bool) -> usize {
    cin * cout * k * k + if bias { cout } else { 0 }
}

#[cfg(test)]
mod tests;
