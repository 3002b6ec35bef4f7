use crate::error::{shape_err, Error, Result};
use crate::tensor::{conv2d, Conv2dOpts, Element, PadMode, Tensor};

/// Charbonnier penalty `mean(sqrt((x - y)^2 + eps))`. Note `eps`, not `eps^2`,
/// sits under the root.
pub fn charbonnier<T: Element>(x: &Tensor<T>, y: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("charbonnier eps must be > 0, got {eps}")));
    }
    if x.shape() != y.shape() {
        return shape_err(format!("charbonnier of {:?} and {:?}", x.shape(), y.shape()));
    }
    Ok(x.sub(y)?.square().add_scalar(T::c(eps)).sqrt().mean())
}

/// Added under the Sobel magnitude root so it stays differentiable at zero.
pub const SOBEL_EPS: f64 = 1e-12;

/// Per-pixel Sobel gradient magnitude `sqrt(gx^2 + gy^2 + SOBEL_EPS)` of
/// every channel, with reflect padding. Same shape as the input.
pub fn sobel_gradients<T: Element>(img: &Tensor<T>) -> Result<Tensor<T>> {
    let &[n, c, h, w] = img.shape() else {
        return shape_err(format!("sobel expects NCHW, got {:?}", img.shape()));
    };
    if h < 3 || w < 3 {
        return shape_err(format!("sobel needs at least 3x3 pixels, got {h}x{w}"));
    }
    #[rustfmt::skip]
    let kernels = [
        -1.0, 0.0, 1.0,
        -2.0, 0.0, 2.0,
        -1.0, 0.0, 1.0,

        -1.0, -2.0, -1.0,
         0.0,  0.0,  0.0,
         1.0,  2.0,  1.0,
    ];
    let k = Tensor::from_f64(&[2, 1, 3, 3], &kernels)?;
    let planes = img.reshape(&[n * c, 1, h, w])?;
    let g = conv2d(&planes, &k, None, Conv2dOpts::same(1, PadMode::Reflect))?;
    let gx = g.narrow(1, 0, 1)?;
    let gy = g.narrow(1, 1, 1)?;
    gx.square()
        .add(&gy.square())?
        .add_scalar(T::c(SOBEL_EPS))
        .sqrt()
        .reshape(&[n, c, h, w])
}

/// Mean squared difference of Sobel magnitudes.
pub fn mge_loss<T: Element>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != y.shape() {
        return shape_err(format!("mge of {:?} and {:?}", x.shape(), y.shape()));
    }
    Ok(sobel_gradients(x)?.sub(&sobel_gradients(y)?)?.square().mean())
}

/// Discriminator outputs are clamped to `[ADV_CLAMP, 1 - ADV_CLAMP]` before
/// taking logs.
pub const ADV_CLAMP: f64 = 1e-7;

fn clamp_prob<T: Element>(d: &Tensor<T>) -> Tensor<T> {
    d.clamp(T::c(ADV_CLAMP), T::c(1.0 - ADV_CLAMP))
}

/// Non-saturating generator loss `-mean(log D(fake))`.
pub fn adversarial_gen_loss<T: Element>(d_fake: &Tensor<T>) -> Tensor<T> {
    clamp_prob(d_fake).log().mean().neg()
}

/// `-mean(log D(real)) - mean(log(1 - D(fake)))`.
pub fn adversarial_disc_loss<T: Element>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<Tensor<T>> {
    let real = clamp_prob(d_real).log().mean();
    let fake = clamp_prob(d_fake).neg().add_scalar(T::one()).log().mean();
    Ok(real.add(&fake)?.neg())
}

/// Scaling of the five generator loss terms plus per-loss constants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub adversarial: f64,
    pub perceptual: f64,
    pub mge: f64,
    pub ssim: f64,
    pub charbonnier: f64,
    pub charbonnier_eps: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adversarial: 1.0,
            perceptual: 1.0,
            mge: 1.0,
            ssim: 1.0,
            charbonnier: 1.0,
            charbonnier_eps: 1e-6,
        }
    }
}

/// The five raw generator loss terms of one batch. `ssim` holds the loss
/// form, i.e. `-SSIM`.
#[derive(Clone, Debug)]
pub struct LossTerms<T: Element> {
    pub adversarial: Tensor<T>,
    pub perceptual: Tensor<T>,
    pub mge: Tensor<T>,
    pub ssim: Tensor<T>,
    pub charbonnier: Tensor<T>,
}

impl<T: Element> LossTerms<T> {
    /// Raw values in the order adversarial, perceptual, mge, ssim, charbonnier.
    pub fn values(&self) -> [f64; 5] {
        [
            self.adversarial.item().f64(),
            self.perceptual.item().f64(),
            self.mge.item().f64(),
            self.ssim.item().f64(),
            self.charbonnier.item().f64(),
        ]
    }
}

/// Weighted sum of the five terms. `adv_scale` multiplies the adversarial
/// weight (used while the discriminator is being boosted).
pub fn total_generator_loss<T: Element>(terms: &LossTerms<T>, w: &LossWeights, adv_scale: f64) -> Result<Tensor<T>> {
    let parts = [
        (&terms.adversarial, w.adversarial * adv_scale),
        (&terms.perceptual, w.perceptual),
        (&terms.mge, w.mge),
        (&terms.ssim, w.ssim),
        (&terms.charbonnier, w.charbonnier),
    ];
    let mut total = Tensor::scalar(T::zero());
    for (t, lambda) in parts {
        total = total.add(&t.mul_scalar(T::c(lambda)))?;
    }
    Ok(total)
}
