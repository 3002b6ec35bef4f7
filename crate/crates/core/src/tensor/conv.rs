//! 2-D convolution over NCHW tensors via tiled im2col + GEMM.

use super::{gemm, Element, Tensor};
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    Reflect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dOpts {
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub mode: PadMode,
}

impl Conv2dOpts {
    /// Stride 1, symmetric padding `pad`.
    pub fn same(pad: usize, mode: PadMode) -> Self {
        Self { stride: 1, pad_h: pad, pad_w: pad, mode }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }
}

impl Default for Conv2dOpts {
    fn default() -> Self {
        Self::same(0, PadMode::Zero)
    }
}

/// Reflection without edge repeat (`-1 -> 1`, `n -> n-2`), folded so any
/// padding width is valid.
fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= n as isize {
        j = period - j;
    }
    j as usize
}

/// For each kernel tap and output coordinate, the source coordinate or `None`
/// when it falls in zero padding.
fn tap_map(in_len: usize, out_len: usize, k: usize, pad: usize, stride: usize, mode: PadMode) -> Vec<Vec<Option<usize>>> {
    (0..k)
        .map(|t| {
            (0..out_len)
                .map(|o| {
                    let i = (o * stride + t) as isize - pad as isize;
                    if i >= 0 && (i as usize) < in_len {
                        Some(i as usize)
                    } else {
                        match mode {
                            PadMode::Zero => None,
                            PadMode::Reflect => Some(reflect_index(i, in_len)),
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Largest `lo..hi` over which `map[o] == o*stride + shift` holds with unit
/// stride, so the gather is a plain slice copy. Empty for strided maps.
fn contiguous_run(map: &[Option<usize>], shift: isize, stride: usize) -> (usize, usize) {
    if stride != 1 {
        return (0, 0);
    }
    let ok = |o: usize| {
        let i = o as isize + shift;
        i >= 0 && map[o] == Some(i as usize)
    };
    let Some(lo) = (0..map.len()).find(|&o| ok(o)) else {
        return (0, 0);
    };
    let hi = (lo..map.len()).find(|&o| !ok(o)).unwrap_or(map.len());
    (lo, hi)
}

struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    rows: Vec<Vec<Option<usize>>>,
    cols: Vec<Vec<Option<usize>>>,
    // Per column tap: output range `lo..hi` reading `src[o + shift]` contiguously.
    runs: Vec<(usize, usize)>,
    shift: Vec<isize>,
}

// Bound on im2col buffer size, in elements.
const COL_BUDGET: usize = 1 << 22;

impl Geometry {
    fn k(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    /// 1x1 kernel, unit stride, no padding: the image already is its column matrix.
    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.oh == self.h && self.ow == self.w && self.rows[0][0] == Some(0) && self.cols[0][0] == Some(0)
    }

    fn row_chunk(&self) -> usize {
        (COL_BUDGET / (self.k() * self.ow).max(1)).clamp(1, self.oh)
    }

    /// Fills `col` ([K, rows*ow]) for output rows `oy0..oy0+rows` of one image.
    fn im2col<T: Element>(&self, img: &[T], oy0: usize, rows: usize, col: &mut [T]) {
        let p = rows * self.ow;
        let mut r = 0;
        for c in 0..self.c_in {
            let plane = &img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let dst = &mut col[r * p..(r + 1) * p];
                    let cmap = &self.cols[kx];
                    for dy in 0..rows {
                        let out = &mut dst[dy * self.ow..(dy + 1) * self.ow];
                        match self.rows[ky][oy0 + dy] {
                            None => out.fill(T::zero()),
                            Some(iy) => {
                                let src = &plane[iy * self.w..(iy + 1) * self.w];
                                let (lo, hi) = self.runs[kx];
                                let (head, tail) = out.split_at_mut(hi);
                                for (o, m) in head[..lo].iter_mut().zip(cmap).chain(tail.iter_mut().zip(&cmap[hi..])) {
                                    *o = m.map_or(T::zero(), |ix| src[ix]);
                                }
                                if hi > lo {
                                    let s0 = (lo as isize + self.shift[kx]) as usize;
                                    out[lo..hi].copy_from_slice(&src[s0..s0 + hi - lo]);
                                }
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }

    /// Scatter-adds `col` back onto the image gradient; adjoint of `im2col`.
    fn col2im<T: Element>(&self, col: &[T], oy0: usize, rows: usize, img: &mut [T]) {
        let p = rows * self.ow;
        let mut r = 0;
        for c in 0..self.c_in {
            let plane = &mut img[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let src = &col[r * p..(r + 1) * p];
                    let cmap = &self.cols[kx];
                    for dy in 0..rows {
                        if let Some(iy) = self.rows[ky][oy0 + dy] {
                            let dst = &mut plane[iy * self.w..(iy + 1) * self.w];
                            let srow = &src[dy * self.ow..(dy + 1) * self.ow];
                            let (lo, hi) = self.runs[kx];
                            for (v, m) in srow[..lo].iter().zip(cmap).chain(srow[hi..].iter().zip(&cmap[hi..])) {
                                if let Some(ix) = *m {
                                    dst[ix] = dst[ix] + *v;
                                }
                            }
                            if hi > lo {
                                let s0 = (lo as isize + self.shift[kx]) as usize;
                                for (d, v) in dst[s0..s0 + hi - lo].iter_mut().zip(&srow[lo..hi]) {
                                    *d = *d + *v;
                                }
                            }
                        }
                    }
                    r += 1;
                }
            }
        }
    }
}

/// Cross-correlation of `input` [N, I, H, W] with `kernel` [O, I, Kh, Kw],
/// plus an optional per-output-channel `bias` [O].
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    opts: Conv2dOpts,
) -> Result<Tensor<T>> {
    let (&[n, c_in, h, w], &[c_out, k_in, kh, kw]) = (input.shape(), kernel.shape()) else {
        return shape_err(format!(
            "conv2d expects NCHW input and OIHW kernel, got {:?} and {:?}",
            input.shape(),
            kernel.shape()
        ));
    };
    if c_in != k_in {
        return shape_err(format!("conv2d input has {c_in} channels, kernel expects {k_in}"));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return shape_err(format!("conv2d bias {:?} for {c_out} outputs", b.shape()));
        }
    }
    if opts.stride == 0 {
        return shape_err("conv2d stride must be >= 1");
    }
    let (hp, wp) = (h + 2 * opts.pad_h, w + 2 * opts.pad_w);
    if hp < kh || wp < kw {
        return shape_err(format!("conv2d kernel {kh}x{kw} larger than padded input {hp}x{wp}"));
    }
    let oh = (hp - kh) / opts.stride + 1;
    let ow = (wp - kw) / opts.stride + 1;
    let cols = tap_map(w, ow, kw, opts.pad_w, opts.stride, opts.mode);
    let shift: Vec<isize> = (0..kw).map(|t| t as isize - opts.pad_w as isize).collect();
    let runs = (0..kw).map(|t| contiguous_run(&cols[t], shift[t], opts.stride)).collect();
    let geo = Geometry {
        c_in,
        h,
        w,
        kh,
        kw,
        oh,
        ow,
        rows: tap_map(h, oh, kh, opts.pad_h, opts.stride, opts.mode),
        cols,
        runs,
        shift,
    };
    let pointwise = geo.is_pointwise();

    let k = geo.k();
    let chunk = geo.row_chunk();
    let in_plane = c_in * h * w;
    let out_plane = c_out * oh * ow;
    let wdata = kernel.data();
    let mut out = vec![T::zero(); n * out_plane];
    let mut col = vec![T::zero(); if pointwise { 0 } else { k * chunk * ow }];
    let mut tile = vec![T::zero(); if pointwise { 0 } else { c_out * chunk * ow }];
    for b in 0..n {
        let img = &input.data()[b * in_plane..(b + 1) * in_plane];
        let dst = &mut out[b * out_plane..(b + 1) * out_plane];
        let mut oy0 = 0;
        while oy0 < oh {
            let rows = chunk.min(oh - oy0);
            let p = rows * ow;
            if pointwise {
                gemm(c_out, k, p, wdata, false, img, false, dst, false);
                break;
            }
            geo.im2col(img, oy0, rows, &mut col[..k * p]);
            if rows == oh {
                gemm(c_out, k, p, wdata, false, &col[..k * p], false, dst, false);
            } else {
                gemm(c_out, k, p, wdata, false, &col[..k * p], false, &mut tile[..c_out * p], false);
                for o in 0..c_out {
                    dst[o * oh * ow + oy0 * ow..][..p].copy_from_slice(&tile[o * p..(o + 1) * p]);
                }
            }
            oy0 += rows;
        }
        if let Some(bias) = bias {
            for (o, &bv) in bias.data().iter().enumerate() {
                dst[o * oh * ow..(o + 1) * oh * ow].iter_mut().for_each(|v| *v = *v + bv);
            }
        }
    }

    let mut parents = vec![input.clone(), kernel.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let (x, wt) = (input.clone(), kernel.clone());
    let has_bias = bias.is_some();
    Ok(Tensor::from_op("conv2d", vec![n, c_out, oh, ow], out, parents, move |g| {
        let need_x = x.is_tracked();
        let need_w = wt.is_tracked();
        let mut gx = need_x.then(|| vec![T::zero(); x.numel()]);
        let mut gw = need_w.then(|| vec![T::zero(); wt.numel()]);
        let buf = if pointwise { 0 } else { k * chunk * ow };
        let mut col = vec![T::zero(); buf];
        let mut gcol = vec![T::zero(); buf];
        let mut gtile = vec![T::zero(); if pointwise { 0 } else { c_out * chunk * ow }];
        for b in 0..n {
            let img = &x.data()[b * in_plane..(b + 1) * in_plane];
            let gout = &g[b * out_plane..(b + 1) * out_plane];
            if pointwise {
                let p = oh * ow;
                if let Some(gw) = gw.as_mut() {
                    gemm(c_out, p, k, gout, false, img, true, gw, true);
                }
                if let Some(gx) = gx.as_mut() {
                    gemm(k, c_out, p, wt.data(), true, gout, false, &mut gx[b * in_plane..(b + 1) * in_plane], false);
                }
                continue;
            }
            let mut oy0 = 0;
            while oy0 < oh {
                let rows = chunk.min(oh - oy0);
                let p = rows * ow;
                let gslice: &[T] = if rows == oh {
                    gout
                } else {
                    for o in 0..c_out {
                        gtile[o * p..(o + 1) * p].copy_from_slice(&gout[o * oh * ow + oy0 * ow..][..p]);
                    }
                    &gtile[..c_out * p]
                };
                if let Some(gw) = gw.as_mut() {
                    geo.im2col(img, oy0, rows, &mut col[..k * p]);
                    gemm(c_out, p, k, gslice, false, &col[..k * p], true, gw, true);
                }
                if let Some(gx) = gx.as_mut() {
                    gemm(k, c_out, p, wt.data(), true, gslice, false, &mut gcol[..k * p], false);
                    geo.col2im(&gcol[..k * p], oy0, rows, &mut gx[b * in_plane..(b + 1) * in_plane]);
                }
                oy0 += rows;
            }
        }
        let mut grads = vec![gx, gw];
        if has_bias {
            let gb = (0..c_out)
                .map(|o| {
                    (0..n).fold(T::zero(), |acc, b| {
                        g[b * out_plane + o * oh * ow..][..oh * ow].iter().fold(acc, |a, &v| a + v)
                    })
                })
                .collect();
            grads.push(Some(gb));
        }
        grads
    }))
}
