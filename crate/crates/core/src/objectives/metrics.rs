use std::fmt::Write;

use super::ssim::{ssim, SsimParams};
use crate::error::{shape_err, Result};
use crate::imaging::Image;
use crate::tensor::{Element, Tensor};

/// `10·log10(peak² / MSE)` in dB; `f64::INFINITY` when the inputs are equal.
pub fn psnr<T: Element>(x: &Tensor<T>, y: &Tensor<T>, peak: f64) -> Result<f64> {
    if x.shape() != y.shape() {
        return shape_err(format!("psnr of {:?} and {:?}", x.shape(), y.shape()));
    }
    let n = x.numel().max(1) as f64;
    let mse = x.data().iter().zip(y.data()).map(|(a, b)| (a.f64() - b.f64()).powi(2)).sum::<f64>() / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn image_tensors(x: &Image, y: &Image, luma: bool) -> Result<(Tensor<f64>, Tensor<f64>)> {
    if (x.height(), x.width()) != (y.height(), y.width()) {
        return shape_err(format!(
            "cannot compare {}x{} with {}x{} images",
            x.height(),
            x.width(),
            y.height(),
            y.width()
        ));
    }
    Ok(if luma {
        (x.luma_tensor(), y.luma_tensor())
    } else {
        (x.to_tensor(), y.to_tensor())
    })
}

/// PSNR of two images with peak 1, on RGB or on BT.601 luma.
pub fn psnr_images(x: &Image, y: &Image, luma: bool) -> Result<f64> {
    let (a, b) = image_tensors(x, y, luma)?;
    psnr(&a, &b, 1.0)
}

/// Windowed SSIM of two images, computed in 64-bit.
pub fn ssim_images(x: &Image, y: &Image, luma: bool) -> Result<f64> {
    let (a, b) = image_tensors(x, y, luma)?;
    Ok(ssim(&a, &b, &SsimParams::default())?.item())
}

/// Formats a dB value, writing `inf` for the identical-input sentinel.
pub fn format_db(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImageMetrics {
    pub ssim: f64,
    pub psnr: f64,
}

impl ImageMetrics {
    pub fn compute(x: &Image, reference: &Image, luma: bool) -> Result<Self> {
        Ok(Self { ssim: ssim_images(x, reference, luma)?, psnr: psnr_images(x, reference, luma)? })
    }

    /// Arithmetic mean; an infinite PSNR makes the mean infinite.
    pub fn mean(items: &[ImageMetrics]) -> Self {
        let n = items.len().max(1) as f64;
        Self {
            ssim: items.iter().map(|m| m.ssim).sum::<f64>() / n,
            psnr: items.iter().map(|m| m.psnr).sum::<f64>() / n,
        }
    }

    /// Fixed-width table with one row per named entry and a closing mean row.
    pub fn table(rows: &[(String, ImageMetrics)]) -> String {
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>8}  {:>10}", "image", "ssim", "psnr_db");
        for (name, m) in rows {
            let _ = writeln!(out, "{name:<width$}  {:>8.5}  {:>10}", m.ssim, format_db(m.psnr));
        }
        let mean = Self::mean(&rows.iter().map(|(_, m)| *m).collect::<Vec<_>>());
        let _ = writeln!(out, "{:<width$}  {:>8.5}  {:>10}", "mean", mean.ssim, format_db(mean.psnr));
        out
    }

    /// `prefix.ssim=..` and `prefix.psnr=..` lines.
    pub fn key_values(&self, prefix: &str) -> String {
        format!("{prefix}.ssim={:.6}\n{prefix}.psnr={}\n", self.ssim, format_db(self.psnr))
    }
}
