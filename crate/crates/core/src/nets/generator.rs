use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{conv_param_count, inject_noise, FfcBlock, FfcBlockConfig, Mode, NoiseState, ParamId, ParamSet};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{conv2d, Conv2dOpts, Element, PadMode, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneratorConfig {
    pub blocks: usize,
    pub width: usize,
    pub global_fraction: f64,
    pub kernel: usize,
    pub spectral_hidden: usize,
    /// Base standard deviation of the inter-block noise.
    pub noise_sigma: f64,
    /// Initialize the output conv to zero so the predicted residual starts at 0.
    pub zero_tail: bool,
    /// Standard deviation of the output conv weights when not zeroed.
    pub tail_init_std: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            blocks: 4,
            width: 32,
            global_fraction: 0.5,
            kernel: 3,
            spectral_hidden: 16,
            noise_sigma: 0.02,
            zero_tail: false,
            tail_init_std: 1e-3,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.width == 0 {
            return Err(Error::Config("generator needs at least one block and one channel".into()));
        }
        if !(self.noise_sigma >= 0.0) || !(self.tail_init_std >= 0.0) {
            return Err(Error::Config("generator noise and init scales must be >= 0".into()));
        }
        self.block_config().validate()
    }

    pub fn block_config(&self) -> FfcBlockConfig {
        FfcBlockConfig {
            in_channels: self.width,
            out_channels: self.width,
            global_fraction: self.global_fraction,
            kernel: self.kernel,
            spectral_hidden: self.spectral_hidden,
        }
    }

    pub fn param_count(&self) -> usize {
        conv_param_count(3, self.width, self.kernel, true)
            + self.blocks * self.block_config().param_count()
            + conv_param_count(self.width, 3, self.kernel, true)
    }
}

/// Head conv, a stack of FFC blocks with noise between them, and a tail conv
/// followed by tanh. Maps a bicubic upscale to a residual in `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct Generator<T: Element = f32> {
    pub cfg: GeneratorConfig,
    pub params: ParamSet<T>,
    pub blocks: Vec<FfcBlock<T>>,
    head: (ParamId, ParamId),
    tail: (ParamId, ParamId),
}

impl<T: Element> Generator<T> {
    pub fn new(cfg: GeneratorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let k = cfg.kernel;
        let head = (
            params.add_conv_kernel("head.weight", [cfg.width, 3, k, k], 1.0, &mut rng),
            params.add("head.bias", Tensor::zeros(&[cfg.width])),
        );
        let mut blocks = Vec::with_capacity(cfg.blocks);
        for i in 0..cfg.blocks {
            blocks.push(FfcBlock::new(cfg.block_config(), &format!("block{i}"), &mut params, &mut rng)?);
        }
        let n = 3 * cfg.width * k * k;
        let tail_w: Vec<T> = (0..n)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                if cfg.zero_tail { T::zero() } else { T::c(cfg.tail_init_std * z) }
            })
            .collect();
        let tail = (
            params.add("tail.weight", Tensor::from_vec(&[3, cfg.width, k, k], tail_w)?),
            params.add("tail.bias", Tensor::zeros(&[3])),
        );
        Ok(Self { cfg, params, blocks, head, tail })
    }

    /// Sets the output conv to zero, making the residual identically 0.
    pub fn zero_tail(&mut self) {
        for id in [self.tail.0, self.tail.1] {
            let zeros = Tensor::zeros(self.params.get(id).shape());
            self.params.set(id, zeros);
        }
    }

    /// Predicted residual for a batch of bicubic upscales `[N, 3, H, W]`.
    /// Noise is injected after every block but the last when `noise` is given
    /// and `mode` is training.
    pub fn forward(&mut self, up: &Tensor<T>, mode: Mode, mut noise: Option<&mut NoiseState>) -> Result<Tensor<T>> {
        if up.rank() != 4 || up.shape()[1] != 3 {
            return shape_err(format!("generator expects [N, 3, H, W], got {:?}", up.shape()));
        }
        let pad = Conv2dOpts::same(self.cfg.kernel / 2, PadMode::Reflect);
        let p = &self.params;
        let mut h = conv2d(up, p.get(self.head.0), Some(p.get(self.head.1)), pad)?.relu();
        let last = self.blocks.len() - 1;
        for (i, block) in self.blocks.iter_mut().enumerate() {
            h = block.forward(&h, p, mode)?;
            if i < last {
                if let Some(ns) = noise.as_deref_mut() {
                    h = inject_noise(&h, ns, mode == Mode::Train);
                }
            }
        }
        Ok(conv2d(&h, p.get(self.tail.0), Some(p.get(self.tail.1)), pad)?.tanh())
    }

    /// `clamp(up + residual, 0, 1)`.
    pub fn super_resolve(&mut self, up: &Tensor<T>) -> Result<Tensor<T>> {
        let r = self.forward(up, Mode::Eval, None)?;
        Ok(up.add(&r)?.clamp(T::zero(), T::one()))
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }
}
