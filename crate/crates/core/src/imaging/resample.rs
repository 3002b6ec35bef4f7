//! Separable bicubic (Keys) and bilinear resampling.
//!
//! Output coordinate `x` maps to source coordinate `(x + 0.5) * in/out - 0.5`.
//! Taps outside the image are clamped to the nearest edge pixel. When
//! shrinking, the kernel is widened by the scale factor so every source pixel
//! contributes (area-aware downsampling); taps are always renormalized to sum
//! to one.

use super::{Image, Provenance};
use crate::error::{Error, Result};

pub const KEYS_A: f64 = -0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    Bicubic,
    Bilinear,
}

impl Filter {
    fn support(self) -> f64 {
        match self {
            Filter::Bicubic => 2.0,
            Filter::Bilinear => 1.0,
        }
    }

    fn weight(self, t: f64) -> f64 {
        match self {
            Filter::Bicubic => cubic_weight(t),
            Filter::Bilinear => linear_weight(t),
        }
    }
}

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn cubic_weight(t: f64) -> f64 {
    let a = KEYS_A;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

pub fn linear_weight(t: f64) -> f64 {
    (1.0 - t.abs()).max(0.0)
}

/// Per-output-sample source taps `(index, weight)`.
fn taps(in_len: usize, out_len: usize, filter: Filter) -> Vec<Vec<(usize, f64)>> {
    let scale = in_len as f64 / out_len as f64;
    let stretch = scale.max(1.0);
    let radius = filter.support() * stretch;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale - 0.5;
            let lo = (center - radius).floor() as isize + 1;
            let hi = (center + radius).ceil() as isize - 1;
            let mut ws: Vec<(usize, f64)> = Vec::with_capacity((hi - lo + 1).max(1) as usize);
            for i in lo..=hi {
                let w = filter.weight((center - i as f64) / stretch);
                if w != 0.0 {
                    let idx = i.clamp(0, in_len as isize - 1) as usize;
                    ws.push((idx, w));
                }
            }
            let total: f64 = ws.iter().map(|(_, w)| w).sum();
            ws.iter_mut().for_each(|(_, w)| *w /= total);
            ws
        })
        .collect()
}

/// Evaluates the interpolant through `samples` at fractional position `x`
/// (unit spacing, edge-clamped).
pub fn sample_1d(samples: &[f64], x: f64, filter: Filter) -> f64 {
    let base = x.floor() as isize;
    let r = filter.support() as isize;
    let mut acc = 0.0;
    for i in base - r + 1..=base + r {
        let idx = i.clamp(0, samples.len() as isize - 1) as usize;
        acc += samples[idx] * filter.weight(x - i as f64);
    }
    acc
}

pub fn resample(img: &Image, out_h: usize, out_w: usize, filter: Filter) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(format!("resample target {out_h}x{out_w}")));
    }
    let (h, w) = (img.height(), img.width());
    let src = img.data();

    // horizontal pass: [h, out_w, 3]
    let col_taps = taps(w, out_w, filter);
    let mut tmp = vec![0.0f64; h * out_w * 3];
    for y in 0..h {
        for (x, ws) in col_taps.iter().enumerate() {
            let mut acc = [0.0f64; 3];
            for &(i, wt) in ws {
                let p = (y * w + i) * 3;
                for c in 0..3 {
                    acc[c] += src[p + c] as f64 * wt;
                }
            }
            tmp[(y * out_w + x) * 3..][..3].copy_from_slice(&acc);
        }
    }

    // vertical pass
    let row_taps = taps(h, out_h, filter);
    let mut out = vec![0.0f32; out_h * out_w * 3];
    for (y, ws) in row_taps.iter().enumerate() {
        for x in 0..out_w {
            let mut acc = [0.0f64; 3];
            for &(i, wt) in ws {
                let p = (i * out_w + x) * 3;
                for c in 0..3 {
                    acc[c] += tmp[p + c] * wt;
                }
            }
            for c in 0..3 {
                out[(y * out_w + x) * 3 + c] = acc[c].clamp(0.0, 1.0) as f32;
            }
        }
    }
    Image::new(out_h, out_w, out, Provenance::Resampled)
}

pub fn resample_bicubic(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    resample(img, out_h, out_w, Filter::Bicubic)
}

pub fn resample_bilinear(img: &Image, out_h: usize, out_w: usize) -> Result<Image> {
    resample(img, out_h, out_w, Filter::Bilinear)
}

/// Crops `img` to multiples of `scale` (top-left anchored) and bicubically
/// shrinks it by exactly `scale`. Returns `(lr, hr)`.
pub fn make_lr_hr_pair(img: &Image, scale: usize) -> Result<(Image, Image)> {
    if scale < 2 {
        return Err(Error::InvalidArgument(format!("scale must be >= 2, got {scale}")));
    }
    if img.height() < scale || img.width() < scale {
        return Err(Error::TooSmall(format!(
            "{}x{} image cannot be reduced by {scale}",
            img.height(),
            img.width()
        )));
    }
    let (h, w) = (img.height() / scale * scale, img.width() / scale * scale);
    let hr = img.crop(0, 0, h, w)?;
    let lr = resample_bicubic(&hr, h / scale, w / scale)?;
    Ok((lr, hr))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_weights_at_half_offset() {
        let w: Vec<f64> = [1.5, 0.5, -0.5, -1.5].iter().map(|&t| cubic_weight(t)).collect();
        assert_eq!(w, vec![-1.0 / 16.0, 9.0 / 16.0, 9.0 / 16.0, -1.0 / 16.0]);
        assert_eq!(sample_1d(&[0.0, 1.0, 2.0, 3.0], 1.5, Filter::Bicubic), 1.5);
        assert_eq!(sample_1d(&[0.0, 1.0], 0.5, Filter::Bilinear), 0.5);
    }

    #[test]
    fn weights_sum_to_one() {
        for (i, o) in [(4, 8), (8, 4), (9, 3), (7, 13), (1, 5)] {
            for f in [Filter::Bicubic, Filter::Bilinear] {
                for ws in taps(i, o, f) {
                    let s: f64 = ws.iter().map(|(_, w)| w).sum();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_images_stay_constant() {
        let img = Image::filled(7, 5, [0.2, 0.5, 0.9]).unwrap();
        for (h, w) in [(21, 15), (3, 2), (7, 5), (10, 1)] {
            for f in [Filter::Bicubic, Filter::Bilinear] {
                let out = resample(&img, h, w, f).unwrap();
                for px in out.data().chunks(3) {
                    assert!((px[0] - 0.2).abs() < 1e-6 && (px[1] - 0.5).abs() < 1e-6 && (px[2] - 0.9).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn same_size_is_identity() {
        let img = Image::from_fn(6, 9, |y, x, c| ((y * 7 + x * 3 + c) % 11) as f32 / 10.0).unwrap();
        for f in [Filter::Bicubic, Filter::Bilinear] {
            assert_eq!(resample(&img, 6, 9, f).unwrap().data(), img.data());
        }
    }

    #[test]
    fn bicubic_reproduces_ramp_interior() {
        let w = 16;
        let img = Image::from_fn(4, w, |_, x, _| 0.1 + 0.05 * x as f32).unwrap();
        let out = resample_bicubic(&img, 12, 3 * w).unwrap();
        for x in 6..3 * w - 6 {
            let src = (x as f64 + 0.5) / 3.0 - 0.5;
            let expect = 0.1 + 0.05 * src;
            assert!((out.get(5, x, 1) as f64 - expect).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn bilinear_agrees_with_bicubic_on_smooth_ramp() {
        let img = Image::from_fn(8, 8, |y, x, _| (x + y) as f32 / 16.0).unwrap();
        let a = resample_bicubic(&img, 24, 24).unwrap();
        let b = resample_bilinear(&img, 24, 24).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| (p - q).abs() < 0.1));
    }

    #[test]
    fn outputs_are_clamped() {
        let img = Image::from_fn(6, 6, |_, x, _| if x % 2 == 0 { 0.0 } else { 1.0 }).unwrap();
        let out = resample_bicubic(&img, 18, 18).unwrap();
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn lr_hr_pairs() {
        let img = Image::filled(6, 6, [0.3, 0.3, 0.3]).unwrap();
        let (lr, hr) = make_lr_hr_pair(&img, 3).unwrap();
        assert_eq!((lr.height(), lr.width(), hr.height()), (2, 2, 6));
        assert!(lr.data().iter().all(|v| (v - 0.3).abs() < 1e-6));

        let img = Image::filled(7, 7, [0.1, 0.2, 0.3]).unwrap();
        let (lr, hr) = make_lr_hr_pair(&img, 3).unwrap();
        assert_eq!((hr.height(), hr.width(), lr.height(), lr.width()), (6, 6, 2, 2));

        let img = Image::filled(1080, 1920, [0.5; 3]).unwrap();
        let (lr, _) = make_lr_hr_pair(&img, 3).unwrap();
        assert_eq!((lr.width(), lr.height()), (640, 360));

        assert!(matches!(
            make_lr_hr_pair(&Image::filled(2, 2, [0.0; 3]).unwrap(), 3),
            Err(Error::TooSmall(_))
        ));
    }
}
