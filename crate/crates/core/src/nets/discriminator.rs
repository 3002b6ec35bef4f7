use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{conv_param_count, ParamId, ParamSet};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{conv2d, Conv2dOpts, Element, PadMode, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorConfig {
    /// Output width of each strided conv.
    pub widths: Vec<usize>,
    pub stride: usize,
    pub kernel: usize,
    pub leaky_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self { widths: vec![16, 32, 32], stride: 2, kernel: 3, leaky_slope: 0.2 }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("discriminator widths must be non-empty and positive".into()));
        }
        if self.stride == 0 || self.kernel % 2 == 0 {
            return Err(Error::Config("discriminator needs stride >= 1 and an odd kernel".into()));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        let mut cin = 3;
        let mut n = 0;
        for &w in &self.widths {
            n += conv_param_count(cin, w, self.kernel, true);
            cin = w;
        }
        n + cin + 1
    }
}

/// Strided conv stack with LeakyReLU, global average pool, affine, sigmoid.
/// One probability per batch item.
#[derive(Clone, Debug)]
pub struct Discriminator<T: Element = f32> {
    pub cfg: DiscriminatorConfig,
    pub params: ParamSet<T>,
    convs: Vec<(ParamId, ParamId)>,
    head: (ParamId, ParamId),
}

impl<T: Element> Discriminator<T> {
    pub fn new(cfg: DiscriminatorConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let k = cfg.kernel;
        let mut cin = 3;
        let mut convs = Vec::with_capacity(cfg.widths.len());
        for (i, &w) in cfg.widths.iter().enumerate() {
            convs.push((
                params.add_conv_kernel(format!("conv{i}.weight"), [w, cin, k, k], 1.0, &mut rng),
                params.add(format!("conv{i}.bias"), Tensor::zeros(&[w])),
            ));
            cin = w;
        }
        let head = (
            params.add_conv_kernel("head.weight", [1, cin, 1, 1], 0.5, &mut rng),
            params.add("head.bias", Tensor::zeros(&[1])),
        );
        Ok(Self { cfg, params, convs, head })
    }

    /// `D(r)` in `(0, 1)` for each item of `[N, 3, H, W]`; shape `[N]`.
    pub fn forward(&self, r: &Tensor<T>) -> Result<Tensor<T>> {
        let &[n, 3, _, _] = r.shape() else {
            return shape_err(format!("discriminator expects [N, 3, H, W], got {:?}", r.shape()));
        };
        let p = &self.params;
        let opts = Conv2dOpts::same(self.cfg.kernel / 2, PadMode::Reflect).with_stride(self.cfg.stride);
        let slope = T::c(self.cfg.leaky_slope);
        let mut h = r.clone();
        for &(w, b) in &self.convs {
            h = conv2d(&h, p.get(w), Some(p.get(b)), opts)?.leaky_relu(slope);
        }
        let pooled = h.mean_axes(&[2, 3], true)?;
        let logit = conv2d(&pooled, p.get(self.head.0), Some(p.get(self.head.1)), Conv2dOpts::default())?;
        Ok(logit.reshape(&[n])?.sigmoid())
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }
}
