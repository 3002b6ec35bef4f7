//! FFT primitives and differentiable real 2-D transforms.
//!
//! Conventions: forward transforms are unnormalized, inverse transforms scale
//! by `1/N`. A real `[N, C, H, W]` tensor maps to a half spectrum with
//! `W/2 + 1` columns, stored as a real `[N, 2C, H, W/2 + 1]` tensor whose
//! first `C` channels are the real parts and last `C` the imaginary parts.

mod fft;

use num_complex::Complex64;

use crate::error::{shape_err, Result};
use crate::tensor::{Element, Tensor};

pub use fft::{fft1d, plan, ComplexBuffer, Direction, FftPlan};

/// Half-spectrum tensor with real/imaginary parts as two channel groups.
#[derive(Clone, Debug)]
pub struct SpectrumTensor<T: Element = f32> {
    pub tensor: Tensor<T>,
    /// Width of the real signal the spectrum came from.
    pub width: usize,
}

impl<T: Element> SpectrumTensor<T> {
    pub fn channels(&self) -> usize {
        self.tensor.shape()[1] / 2
    }
}

pub fn half_width(w: usize) -> usize {
    w / 2 + 1
}

/// Multiplicity of half-spectrum column `k` in the full Hermitian spectrum.
fn column_weight(k: usize, w: usize) -> f64 {
    if k == 0 || (w % 2 == 0 && k == w / 2) {
        1.0
    } else {
        2.0
    }
}

/// Forward real 2-D DFT of each `h×w` plane, rows first.
fn rfft_plane(plane: &[f64], h: usize, w: usize) -> Vec<Complex64> {
    let wh = half_width(w);
    let mut rows: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(w).process(&mut rows, Direction::Forward);
    // Columns are transformed as contiguous signals of a transposed buffer.
    let mut cols = vec![Complex64::new(0.0, 0.0); wh * h];
    for y in 0..h {
        for k in 0..wh {
            cols[k * h + y] = rows[y * w + k];
        }
    }
    plan(h).process(&mut cols, Direction::Forward);
    let mut half = vec![Complex64::new(0.0, 0.0); h * wh];
    for k in 0..wh {
        for y in 0..h {
            half[y * wh + k] = cols[k * h + y];
        }
    }
    half
}

/// Inverse of [`rfft_plane`]: Hermitian extension along W, real part kept.
fn irfft_plane(half: &[Complex64], h: usize, w: usize) -> Vec<f64> {
    let wh = half_width(w);
    let mut cols = vec![Complex64::new(0.0, 0.0); wh * h];
    for y in 0..h {
        for k in 0..wh {
            cols[k * h + y] = half[y * wh + k];
        }
    }
    plan(h).process(&mut cols, Direction::Inverse);
    let mut rows = vec![Complex64::new(0.0, 0.0); h * w];
    for y in 0..h {
        let row = &mut rows[y * w..(y + 1) * w];
        for k in 0..wh {
            row[k] = cols[k * h + y];
        }
        for k in wh..w {
            row[k] = row[w - k].conj();
        }
    }
    plan(w).process(&mut rows, Direction::Inverse);
    rows.iter().map(|v| v.re).collect()
}

/// Transforms every (batch, channel) plane, packing the complex result into
/// separate real and imaginary channel groups.
fn forward_planes<T: Element>(x: &[T], n: usize, c: usize, h: usize, w: usize) -> Vec<T> {
    let wh = half_width(w);
    let mut out = vec![T::zero(); n * 2 * c * h * wh];
    let mut plane = vec![0.0; h * w];
    for b in 0..n {
        for ch in 0..c {
            for (dst, v) in plane.iter_mut().zip(&x[(b * c + ch) * h * w..][..h * w]) {
                *dst = v.f64();
            }
            let spec = rfft_plane(&plane, h, w);
            let re = (b * 2 * c + ch) * h * wh;
            let im = (b * 2 * c + c + ch) * h * wh;
            for (i, z) in spec.iter().enumerate() {
                out[re + i] = T::c(z.re);
                out[im + i] = T::c(z.im);
            }
        }
    }
    out
}

fn inverse_planes<T: Element>(s: &[T], n: usize, c: usize, h: usize, w: usize) -> Vec<T> {
    let wh = half_width(w);
    let mut out = vec![T::zero(); n * c * h * w];
    let mut half = vec![Complex64::new(0.0, 0.0); h * wh];
    for b in 0..n {
        for ch in 0..c {
            let re = (b * 2 * c + ch) * h * wh;
            let im = (b * 2 * c + c + ch) * h * wh;
            for (i, z) in half.iter_mut().enumerate() {
                *z = Complex64::new(s[re + i].f64(), s[im + i].f64());
            }
            let plane = irfft_plane(&half, h, w);
            for (dst, v) in out[(b * c + ch) * h * w..][..h * w].iter_mut().zip(plane) {
                *dst = T::c(v);
            }
        }
    }
    out
}

/// Scales each stored half-spectrum column by `f(column)`.
fn scale_columns<T: Element>(s: &mut [T], w: usize, f: impl Fn(usize) -> f64) {
    for row in s.chunks_mut(half_width(w)) {
        for (k, v) in row.iter_mut().enumerate() {
            *v = *v * T::c(f(k));
        }
    }
}

/// Real 2-D FFT of an NCHW tensor; differentiable.
///
/// The backward rule is the adjoint of the forward map, expressed through
/// the inverse transform: `dx = H·W · irfft2d(g / m)` with `m` the column
/// multiplicity of the half spectrum.
pub fn rfft2d<T: Element>(x: &Tensor<T>) -> Result<SpectrumTensor<T>> {
    let &[n, c, h, w] = x.shape() else {
        return shape_err(format!("rfft2d expects NCHW, got {:?}", x.shape()));
    };
    if h < 2 || w < 2 {
        return shape_err(format!("rfft2d needs H, W >= 2, got {h}x{w}"));
    }
    let wh = half_width(w);
    let out = forward_planes(x.data(), n, c, h, w);
    let tensor = Tensor::from_op("rfft2d", vec![n, 2 * c, h, wh], out, vec![x.clone()], move |g| {
        let mut g = g.to_vec();
        scale_columns(&mut g, w, |k| 1.0 / column_weight(k, w));
        let mut gx = inverse_planes(&g, n, c, h, w);
        let hw = T::c((h * w) as f64);
        gx.iter_mut().for_each(|v| *v = *v * hw);
        vec![Some(gx)]
    });
    Ok(SpectrumTensor { tensor, width: w })
}

/// Inverse of [`rfft2d`] producing `out_w` columns; differentiable.
///
/// Columns other than DC (and Nyquist for even widths) stand for themselves
/// and their conjugate mirror, so they carry weight 2 in the backward rule.
pub fn irfft2d<T: Element>(s: &Tensor<T>, out_w: usize) -> Result<Tensor<T>> {
    let &[n, c2, h, wh] = s.shape() else {
        return shape_err(format!("irfft2d expects [N, 2C, H, W/2+1], got {:?}", s.shape()));
    };
    if c2 % 2 != 0 {
        return shape_err(format!("irfft2d needs an even channel count, got {c2}"));
    }
    if out_w < 1 || half_width(out_w) != wh {
        return shape_err(format!("irfft2d width {out_w} inconsistent with {wh} spectrum columns"));
    }
    let c = c2 / 2;
    let out = inverse_planes(s.data(), n, c, h, out_w);
    Ok(Tensor::from_op("irfft2d", vec![n, c, h, out_w], out, vec![s.clone()], move |g| {
        let mut gs = forward_planes(g, n, c, h, out_w);
        let hw = (h * out_w) as f64;
        scale_columns(&mut gs, out_w, |k| column_weight(k, out_w) / hw);
        vec![Some(gs)]
    }))
}

impl<T: Element> SpectrumTensor<T> {
    pub fn inverse(&self) -> Result<Tensor<T>> {
        irfft2d(&self.tensor, self.width)
    }
}
