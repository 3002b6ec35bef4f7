use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::tensor::{Element, Tensor};

/// Gaussian noise injected between generator blocks during training.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseState {
    pub sigma0: f64,
    /// In `[0, 1]`; driven by the trainer's generator-loss ratio.
    pub multiplier: f64,
    pub rng: ChaCha8Rng,
}

impl NoiseState {
    pub fn new(sigma0: f64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { sigma0, multiplier: 1.0, rng }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma0 * self.multiplier
    }
}

/// `x + sigma0 * multiplier * eps` in training, identity otherwise. Nothing is
/// drawn when the effective sigma is zero.
pub fn inject_noise<T: Element>(x: &Tensor<T>, ns: &mut NoiseState, training: bool) -> Tensor<T> {
    let sigma = ns.sigma();
    if !training || sigma == 0.0 {
        return x.clone();
    }
    let eps: Vec<T> = (0..x.numel())
        .map(|_| T::c(sigma * ns.rng.sample::<f64, _>(StandardNormal)))
        .collect();
    let noise = Tensor::from_vec(x.shape(), eps).expect("same shape");
    x.add(&noise).expect("same shape")
}
