//! Training losses and image quality metrics.

mod losses;
mod metrics;
mod perceptual;
mod ssim;

pub use losses::{
    adversarial_disc_loss, adversarial_gen_loss, charbonnier, mge_loss, sobel_gradients, total_generator_loss,
    LossTerms, LossWeights, ADV_CLAMP, SOBEL_EPS,
};
pub use metrics::{format_db, psnr, psnr_images, ssim_images, ImageMetrics};
pub use perceptual::{perceptual_loss, FeatureExtractor, RandomConvExtractor};
pub use ssim::{gaussian_window, ssim, ssim_loss, SsimParams};
