use std::f64::consts::PI;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{make_lr_hr_pair, resample_bicubic, Image};
use crate::tensor::Tensor;

/// An aligned low/high resolution image pair.
#[derive(Clone, Debug)]
pub struct Pair {
    pub lr: Image,
    pub hr: Image,
}

/// Training pairs that are large enough for the configured patch size.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub pairs: Vec<Pair>,
    pub scale: usize,
}

impl Dataset {
    /// Keeps pairs whose HR side is at least `patch` in both dimensions and
    /// whose LR image matches `hr / scale`; others are skipped with a warning.
    pub fn new(pairs: Vec<Pair>, scale: usize, patch: usize) -> Result<Self> {
        let total = pairs.len();
        let pairs: Vec<Pair> = pairs
            .into_iter()
            .enumerate()
            .filter(|(i, p)| {
                let fits = p.hr.height() >= patch && p.hr.width() >= patch;
                let aligned = p.lr.height() * scale == p.hr.height() && p.lr.width() * scale == p.hr.width();
                if !fits || !aligned {
                    warn!("skipping pair {i}: {}x{} hr, {}x{} lr", p.hr.height(), p.hr.width(), p.lr.height(), p.lr.width());
                }
                fits && aligned
            })
            .map(|(_, p)| p)
            .collect();
        if pairs.is_empty() {
            return Err(Error::TooSmall(format!("none of {total} pairs can hold a {patch}px patch at scale {scale}")));
        }
        Ok(Self { pairs, scale })
    }

    /// Builds pairs by bicubic downscaling each image.
    pub fn from_images(images: &[Image], scale: usize, patch: usize) -> Result<Self> {
        let mut pairs = Vec::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            match make_lr_hr_pair(img, scale) {
                Ok((lr, hr)) => pairs.push(Pair { lr, hr }),
                Err(e) => warn!("skipping image {i}: {e}"),
            }
        }
        Self::new(pairs, scale, patch)
    }
}

/// A batch of aligned patches as `[N, 3, H, W]` tensors. `up` is the bicubic
/// upscale of `lr` to the HR patch size.
#[derive(Clone, Debug)]
pub struct Batch {
    pub lr: Tensor<f32>,
    pub hr: Tensor<f32>,
    pub up: Tensor<f32>,
}

/// One aligned crop: HR offsets are multiples of the scale, the LR crop
/// covers the same region.
pub fn crop_pair(pair: &Pair, y0: usize, x0: usize, patch: usize, scale: usize) -> Result<(Image, Image)> {
    let hr = pair.hr.crop(y0, x0, patch, patch)?;
    let lr = pair.lr.crop(y0 / scale, x0 / scale, patch / scale, patch / scale)?;
    Ok((lr, hr))
}

/// Draws `n` uniformly placed aligned crops.
pub fn sample_patches(ds: &Dataset, patch: usize, rng: &mut ChaCha8Rng, n: usize) -> Result<Batch> {
    let scale = ds.scale;
    let mut lrs = Vec::with_capacity(n);
    let mut hrs = Vec::with_capacity(n);
    for _ in 0..n {
        let pair = &ds.pairs[rng.gen_range(0..ds.pairs.len())];
        let y0 = scale * rng.gen_range(0..=(pair.hr.height() - patch) / scale);
        let x0 = scale * rng.gen_range(0..=(pair.hr.width() - patch) / scale);
        let (lr, hr) = crop_pair(pair, y0, x0, patch, scale)?;
        lrs.push(lr);
        hrs.push(hr);
    }
    batch_from(&lrs, &hrs)
}

pub fn batch_from(lrs: &[Image], hrs: &[Image]) -> Result<Batch> {
    let ups = lrs
        .iter()
        .zip(hrs)
        .map(|(lr, hr)| resample_bicubic(lr, hr.height(), hr.width()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Batch { lr: Image::batch(lrs)?, hr: Image::batch(hrs)?, up: Image::batch(&ups)? })
}

/// Deterministic synthetic textures: oriented gratings, soft-edged shapes,
/// and checkerboards at frequencies a bicubic upscale blurs.
pub fn procedural_textures(count: usize, size: usize, seed: u64) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let kind = rng.gen_range(0..3);
            let base: [f64; 3] = [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)];
            let tint: [f64; 3] = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
            let field: Box<dyn Fn(f64, f64) -> f64> = match kind {
                0 => {
                    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
                        .map(|_| {
                            let angle = rng.gen_range(0.0..PI);
                            let period = rng.gen_range(4.0..14.0);
                            let amp = rng.gen_range(0.3..1.0);
                            (angle.cos() / period, angle.sin() / period, rng.gen_range(0.0..2.0 * PI), amp)
                        })
                        .collect();
                    Box::new(move |y, x| {
                        let s: f64 = waves.iter().map(|&(fx, fy, ph, a)| a * (2.0 * PI * (fx * x + fy * y) + ph).sin()).sum();
                        (s / 2.0).tanh()
                    })
                }
                1 => {
                    let discs: Vec<(f64, f64, f64)> = (0..6)
                        .map(|_| {
                            (rng.gen_range(0.0..size as f64), rng.gen_range(0.0..size as f64), rng.gen_range(5.0..size as f64 / 3.0))
                        })
                        .collect();
                    Box::new(move |y, x| {
                        let mut v = 0.0;
                        for (i, &(cy, cx, r)) in discs.iter().enumerate() {
                            let d = ((y - cy).powi(2) + (x - cx).powi(2)).sqrt();
                            let inside = 0.5 + 0.5 * (r - d).clamp(-1.0, 1.0);
                            v += if i % 2 == 0 { inside } else { -inside };
                        }
                        f64::clamp(2.0 * v - 0.5, -1.0, 1.0)
                    })
                }
                _ => {
                    let cell = rng.gen_range(3.0..9.0);
                    let angle: f64 = rng.gen_range(0.0..PI / 2.0);
                    let (c, s) = (angle.cos(), angle.sin());
                    Box::new(move |y, x| {
                        let u = (c * x + s * y) / cell;
                        let v = (-s * x + c * y) / cell;
                        ((PI * u).sin() * (PI * v).sin() * 3.0).tanh()
                    })
                }
            };
            Image::from_fn(size, size, |y, x, ch| {
                let f = field(y as f64 + 0.5, x as f64 + 0.5);
                (base[ch] + 0.35 * f + 0.15 * tint[ch] * f) as f32
            })
            .expect("valid size")
        })
        .collect()
}
