use crate::error::{shape_err, Result};
use crate::tensor::{conv2d, Conv2dOpts, Element, PadMode, Tensor};

/// Windowed SSIM settings. Defaults: 11×11 Gaussian, σ = 1.5, data range 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl SsimParams {
    pub fn for_range(range: f64) -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            c1: (0.01 * range).powi(2),
            c2: (0.03 * range).powi(2),
        }
    }
}

impl Default for SsimParams {
    fn default() -> Self {
        Self::for_range(1.0)
    }
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - center).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Separable Gaussian filter of a `[M, 1, H, W]` tensor, reflect-padded to
/// preserve size.
fn blur<T: Element>(x: &Tensor<T>, taps: &[f64]) -> Result<Tensor<T>> {
    let k = taps.len();
    let pad = k / 2;
    let row = Tensor::from_f64(&[1, 1, 1, k], taps)?;
    let col = Tensor::from_f64(&[1, 1, k, 1], taps)?;
    let opts_w = Conv2dOpts { stride: 1, pad_h: 0, pad_w: pad, mode: PadMode::Reflect };
    let opts_h = Conv2dOpts { stride: 1, pad_h: pad, pad_w: 0, mode: PadMode::Reflect };
    conv2d(&conv2d(x, &row, None, opts_w)?, &col, None, opts_h)
}

/// Mean SSIM over all windows and channels of two `[N, C, H, W]` tensors.
///
/// Local statistics come from Gaussian filtering with reflect padding, so the
/// SSIM map has the input's size and small images are supported.
pub fn ssim<T: Element>(x: &Tensor<T>, y: &Tensor<T>, p: &SsimParams) -> Result<Tensor<T>> {
    if x.shape() != y.shape() {
        return shape_err(format!("ssim of {:?} and {:?}", x.shape(), y.shape()));
    }
    let &[n, c, h, w] = x.shape() else {
        return shape_err(format!("ssim expects NCHW, got {:?}", x.shape()));
    };
    let planes = [n * c, 1, h, w];
    let (x, y) = (x.reshape(&planes)?, y.reshape(&planes)?);
    let taps = gaussian_window(p.window, p.sigma);
    let (c1, c2) = (T::c(p.c1), T::c(p.c2));
    let two = T::c(2.0);

    let mu_x = blur(&x, &taps)?;
    let mu_y = blur(&y, &taps)?;
    let mu_xx = mu_x.mul(&mu_x)?;
    let mu_yy = mu_y.mul(&mu_y)?;
    let mu_xy = mu_x.mul(&mu_y)?;
    let var_x = blur(&x.mul(&x)?, &taps)?.sub(&mu_xx)?;
    let var_y = blur(&y.mul(&y)?, &taps)?.sub(&mu_yy)?;
    let cov = blur(&x.mul(&y)?, &taps)?.sub(&mu_xy)?;

    let num = mu_xy.mul_scalar(two).add_scalar(c1).mul(&cov.mul_scalar(two).add_scalar(c2))?;
    let den = mu_xx.add(&mu_yy)?.add_scalar(c1).mul(&var_x.add(&var_y)?.add_scalar(c2))?;
    Ok(num.div(&den)?.mean())
}

/// `-ssim(x, y)`.
pub fn ssim_loss<T: Element>(x: &Tensor<T>, y: &Tensor<T>, p: &SsimParams) -> Result<Tensor<T>> {
    Ok(ssim(x, y, p)?.neg())
}
