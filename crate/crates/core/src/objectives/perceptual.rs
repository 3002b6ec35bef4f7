use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Result};
use crate::nets::ParamSet;
use crate::tensor::{conv2d, Conv2dOpts, Element, PadMode, Tensor};

/// A frozen feature network producing one activation map per stage.
pub trait FeatureExtractor<T: Element> {
    fn features(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>>;
}

/// Three stride-2 conv + ReLU stages (widths 8, 16, 32) with weights drawn
/// once from a fixed seed. Bias-free, so scaling the weights scales each
/// stage's features by a constant.
#[derive(Clone, Debug)]
pub struct RandomConvExtractor<T: Element> {
    params: ParamSet<T>,
}

pub const EXTRACTOR_WIDTHS: [usize; 3] = [8, 16, 32];
pub const EXTRACTOR_SEED: u64 = 0x5eed_fea7;

impl<T: Element> RandomConvExtractor<T> {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let mut c_in = 3;
        for (i, &c_out) in EXTRACTOR_WIDTHS.iter().enumerate() {
            params.add_conv_kernel(format!("stage{i}.weight"), [c_out, c_in, 3, 3], 1.0, &mut rng);
            c_in = c_out;
        }
        Self { params }
    }

    /// Multiplies every weight by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut params = self.params.clone();
        for i in 0..params.len() {
            let data = params.tensors()[i].data().iter().map(|&v| v * T::c(factor)).collect();
            params.set_values(i, data).expect("same shape");
        }
        Self { params }
    }
}

impl<T: Element> Default for RandomConvExtractor<T> {
    fn default() -> Self {
        Self::new(EXTRACTOR_SEED)
    }
}

impl<T: Element> FeatureExtractor<T> for RandomConvExtractor<T> {
    fn features(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let opts = Conv2dOpts::same(1, PadMode::Reflect).with_stride(2);
        let mut h = x.clone();
        let mut out = Vec::with_capacity(EXTRACTOR_WIDTHS.len());
        for w in self.params.tensors() {
            h = conv2d(&h, w, None, opts)?.relu();
            out.push(h.clone());
        }
        Ok(out)
    }
}

/// Mean absolute feature difference per stage, divided by the standard
/// deviation of the target's features at that stage, averaged over stages.
pub fn perceptual_loss<T: Element>(
    x: &Tensor<T>,
    y: &Tensor<T>,
    extractor: &dyn FeatureExtractor<T>,
) -> Result<Tensor<T>> {
    if x.shape() != y.shape() {
        return shape_err(format!("perceptual loss of {:?} and {:?}", x.shape(), y.shape()));
    }
    let fx = extractor.features(x)?;
    let fy = extractor.features(y)?;
    let stages = fx.len();
    let mut total = Tensor::scalar(T::zero());
    for (a, b) in fx.iter().zip(&fy) {
        let centered = b.sub(&b.mean())?;
        let std = centered.square().mean().add_scalar(T::c(1e-12)).sqrt();
        let dist = a.sub(b)?.abs().mean();
        total = total.add(&dist.div(&std.add_scalar(T::c(1e-8)))?)?;
    }
    Ok(total.mul_scalar(T::one() / T::c(stages as f64)))
}
