//! Elementwise arithmetic, reductions, and shape manipulation.

use super::{Element, Tensor};
use crate::error::{shape_err, Error, Result};

/// Right-aligned (numpy-style) broadcast of two shapes.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return shape_err(format!("cannot broadcast {:?} with {:?}", a, b)),
        };
    }
    Ok(out)
}

/// Strides of `shape` viewed inside `out` (zero along broadcast axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let offset = out.len() - shape.len();
    let mut strides = vec![0; out.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        if shape[i] != 1 {
            strides[i + offset] = acc;
        }
        acc *= shape[i];
    }
    strides
}

/// Source index into `a` and `b` for every element of the broadcast output.
fn for_each_broadcast(
    a: &[usize],
    b: &[usize],
    out: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    let n: usize = out.iter().product();
    if a == out && b == out {
        (0..n).for_each(|i| f(i, i, i));
        return;
    }
    let sa = broadcast_strides(a, out);
    let sb = broadcast_strides(b, out);
    let rank = out.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    // Walk the innermost axis as a run; carry only across outer axes.
    let inner = out[rank - 1];
    let (ia_step, ib_step) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank];
    let (mut ia, mut ib) = (0usize, 0usize);
    let mut i = 0;
    while i < n {
        for j in 0..inner {
            f(i + j, ia + j * ia_step, ib + j * ib_step);
        }
        i += inner;
        for d in (0..rank - 1).rev() {
            idx[d] += 1;
            ia += sa[d];
            ib += sb[d];
            if idx[d] < out[d] {
                break;
            }
            ia -= sa[d] * out[d];
            ib -= sb[d] * out[d];
            idx[d] = 0;
        }
    }
}

impl<T: Element> Tensor<T> {
    fn binary<F, Da, Db>(&self, other: &Tensor<T>, op: &'static str, f: F, dfa: Da, dfb: Db) -> Result<Tensor<T>>
    where
        F: Fn(T, T) -> T,
        Da: Fn(T, T, T) -> T + 'static,
        Db: Fn(T, T, T) -> T + 'static,
    {
        let out_shape = broadcast_shape(self.shape(), other.shape())?;
        let n: usize = out_shape.iter().product();
        let (ad, bd) = (self.data(), other.data());
        let mut out = vec![T::zero(); n];
        for_each_broadcast(self.shape(), other.shape(), &out_shape, |i, ia, ib| {
            out[i] = f(ad[ia], bd[ib]);
        });
        let (a, b) = (self.clone(), other.clone());
        let saved_out = if a.is_tracked() || b.is_tracked() { out.clone() } else { Vec::new() };
        let shape = out_shape.clone();
        Ok(Tensor::from_op(op, out_shape, out, vec![self.clone(), other.clone()], move |g| {
            let (ad, bd) = (a.data(), b.data());
            let mut ga = a.is_tracked().then(|| vec![T::zero(); ad.len()]);
            let mut gb = b.is_tracked().then(|| vec![T::zero(); bd.len()]);
            if let Some(ga) = ga.as_mut() {
                for_each_broadcast(a.shape(), b.shape(), &shape, |i, ia, ib| {
                    ga[ia] = ga[ia] + g[i] * dfa(ad[ia], bd[ib], saved_out[i]);
                });
            }
            if let Some(gb) = gb.as_mut() {
                for_each_broadcast(a.shape(), b.shape(), &shape, |i, ia, ib| {
                    gb[ib] = gb[ib] + g[i] * dfb(ad[ia], bd[ib], saved_out[i]);
                });
            }
            vec![ga, gb]
        }))
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "add", |a, b| a + b, |_, _, _| T::one(), |_, _, _| T::one())
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "sub", |a, b| a - b, |_, _, _| T::one(), |_, _, _| -T::one())
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "mul", |a, b| a * b, |_, b, _| b, |a, _, _| a)
    }

    pub fn div(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.binary(other, "div", |a, b| a / b, |_, b, _| T::one() / b, |_, b, o| -o / b)
    }

    fn unary(&self, op: &'static str, f: impl Fn(T) -> T, df: impl Fn(T, T) -> T + 'static) -> Tensor<T> {
        let out: Vec<T> = self.data().iter().map(|&x| f(x)).collect();
        let a = self.clone();
        let saved_out = if a.is_tracked() { out.clone() } else { Vec::new() };
        Tensor::from_op(op, self.shape().to_vec(), out, vec![self.clone()], move |g| {
            let gx = a
                .data()
                .iter()
                .zip(&saved_out)
                .zip(g)
                .map(|((&x, &y), &g)| g * df(x, y))
                .collect();
            vec![Some(gx)]
        })
    }

    pub fn neg(&self) -> Tensor<T> {
        self.unary("neg", |x| -x, |_, _| -T::one())
    }

    pub fn add_scalar(&self, s: T) -> Tensor<T> {
        self.unary("add_scalar", move |x| x + s, |_, _| T::one())
    }

    pub fn mul_scalar(&self, s: T) -> Tensor<T> {
        self.unary("mul_scalar", move |x| x * s, move |_, _| s)
    }

    /// `x^p` for a constant exponent.
    pub fn powf(&self, p: T) -> Tensor<T> {
        self.unary("pow", move |x| x.powf(p), move |x, _| p * x.powf(p - T::one()))
    }

    pub fn square(&self) -> Tensor<T> {
        self.unary("square", |x| x * x, |x, _| x + x)
    }

    /// Square root; negative inputs propagate NaN. See [`Tensor::sqrt_checked`].
    pub fn sqrt(&self) -> Tensor<T> {
        self.unary("sqrt", |x| x.sqrt(), |_, y| T::c(0.5) / y)
    }

    /// Natural log; negative inputs propagate NaN. See [`Tensor::log_checked`].
    pub fn log(&self) -> Tensor<T> {
        self.unary("log", |x| x.ln(), |x, _| T::one() / x)
    }

    pub fn sqrt_checked(&self) -> Result<Tensor<T>> {
        self.check_nonnegative("sqrt")?;
        Ok(self.sqrt())
    }

    pub fn log_checked(&self) -> Result<Tensor<T>> {
        self.check_nonnegative("log")?;
        Ok(self.log())
    }

    fn check_nonnegative(&self, op: &str) -> Result<()> {
        match self.data().iter().position(|&v| v < T::zero()) {
            Some(i) => Err(Error::Domain(format!(
                "{op} of negative value {} at index {i}",
                self.data()[i]
            ))),
            None => Ok(()),
        }
    }

    pub fn exp(&self) -> Tensor<T> {
        self.unary("exp", |x| x.exp(), |_, y| y)
    }

    pub fn abs(&self) -> Tensor<T> {
        self.unary("abs", |x| x.abs(), |x, _| if x < T::zero() { -T::one() } else { T::one() })
    }

    pub fn relu(&self) -> Tensor<T> {
        self.unary(
            "relu",
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu(&self, slope: T) -> Tensor<T> {
        self.unary(
            "leaky_relu",
            move |x| if x > T::zero() { x } else { x * slope },
            move |x, _| if x > T::zero() { T::one() } else { slope },
        )
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        self.unary(
            "sigmoid",
            |x| T::one() / (T::one() + (-x).exp()),
            |_, y| y * (T::one() - y),
        )
    }

    pub fn tanh(&self) -> Tensor<T> {
        self.unary("tanh", |x| x.tanh(), |_, y| T::one() - y * y)
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&self, lo: T, hi: T) -> Tensor<T> {
        self.unary(
            "clamp",
            move |x| x.max(lo).min(hi),
            move |x, _| if x >= lo && x <= hi { T::one() } else { T::zero() },
        )
    }

    // ---- reductions ----

    pub fn sum(&self) -> Tensor<T> {
        let total = self.data().iter().fold(T::zero(), |acc, &v| acc + v);
        let n = self.numel();
        Tensor::from_op("sum", vec![], vec![total], vec![self.clone()], move |g| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor<T> {
        let n = self.numel();
        let inv = T::one() / T::c(n as f64);
        let total = self.data().iter().fold(T::zero(), |acc, &v| acc + v);
        Tensor::from_op("mean", vec![], vec![total / T::c(n as f64)], vec![self.clone()], move |g| {
            vec![Some(vec![g[0] * inv; n])]
        })
    }

    fn check_axes(&self, axes: &[usize]) -> Result<Vec<bool>> {
        let mut reduce = vec![false; self.rank()];
        for &a in axes {
            if a >= self.rank() {
                return Err(Error::InvalidAxis { axis: a, rank: self.rank() });
            }
            reduce[a] = true;
        }
        Ok(reduce)
    }

    /// Maps each input flat index to its output flat index under reduction.
    fn reduction_map(&self, reduce: &[bool], keepdim: bool) -> (Vec<usize>, Vec<usize>, usize) {
        let kept: Vec<usize> = self
            .shape()
            .iter()
            .zip(reduce)
            .map(|(&d, &r)| if r { 1 } else { d })
            .collect();
        let out_n: usize = kept.iter().product();
        let mut map = Vec::with_capacity(self.numel());
        for_each_broadcast(&kept, &kept, self.shape(), |_, ia, _| map.push(ia));
        // `for_each_broadcast` with identical operands takes the fast path when
        // nothing is reduced, which already yields the identity map.
        let shape = if keepdim {
            kept
        } else {
            self.shape()
                .iter()
                .zip(reduce)
                .filter(|(_, &r)| !r)
                .map(|(&d, _)| d)
                .collect()
        };
        (map, shape, out_n)
    }

    /// Sum over `axes`. An empty axis list is the identity.
    pub fn sum_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        let reduce = self.check_axes(axes)?;
        if axes.is_empty() {
            return Ok(self.clone());
        }
        let (map, shape, out_n) = self.reduction_map(&reduce, keepdim);
        let mut out = vec![T::zero(); out_n];
        for (&v, &o) in self.data().iter().zip(&map) {
            out[o] = out[o] + v;
        }
        Ok(Tensor::from_op("sum_axes", shape, out, vec![self.clone()], move |g| {
            vec![Some(map.iter().map(|&o| g[o]).collect())]
        }))
    }

    pub fn mean_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        self.check_axes(axes)?;
        let count: usize = axes.iter().map(|&a| self.shape()[a]).product();
        Ok(self.sum_axes(axes, keepdim)?.mul_scalar(T::one() / T::c(count as f64)))
    }

    /// Maximum over `axes`; the gradient flows to the first maximal element.
    pub fn max_axes(&self, axes: &[usize], keepdim: bool) -> Result<Tensor<T>> {
        let reduce = self.check_axes(axes)?;
        if axes.is_empty() {
            return Ok(self.clone());
        }
        let (map, shape, out_n) = self.reduction_map(&reduce, keepdim);
        let mut out = vec![T::neg_infinity(); out_n];
        let mut arg = vec![usize::MAX; out_n];
        for (i, (&v, &o)) in self.data().iter().zip(&map).enumerate() {
            if arg[o] == usize::MAX || v > out[o] {
                out[o] = v;
                arg[o] = i;
            }
        }
        let n = self.numel();
        Ok(Tensor::from_op("max_axes", shape, out, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); n];
            for (o, &i) in arg.iter().enumerate() {
                gx[i] = gx[i] + g[o];
            }
            vec![Some(gx)]
        }))
    }

    // ---- shape manipulation ----

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<T>> {
        if shape.iter().product::<usize>() != self.numel() {
            return shape_err(format!("cannot reshape {:?} to {:?}", self.shape(), shape));
        }
        Ok(Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            |g| vec![Some(g.to_vec())],
        ))
    }

    /// `len` consecutive entries along `axis` starting at `start`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor<T>> {
        if axis >= self.rank() {
            return Err(Error::InvalidAxis { axis, rank: self.rank() });
        }
        let dim = self.shape()[axis];
        if start + len > dim {
            return shape_err(format!("narrow {start}..{} exceeds extent {dim}", start + len));
        }
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let src = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            out.extend_from_slice(&src[base..base + len * inner]);
        }
        let n = self.numel();
        Ok(Tensor::from_op("narrow", shape, out, vec![self.clone()], move |g| {
            let mut gx = vec![T::zero(); n];
            for o in 0..outer {
                let base = (o * dim + start) * inner;
                gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor<T>], axis: usize) -> Result<Tensor<T>> {
        let Some(first) = parts.first() else {
            return shape_err("concat of zero tensors");
        };
        if axis >= first.rank() {
            return Err(Error::InvalidAxis { axis, rank: first.rank() });
        }
        for p in parts {
            let same = p.rank() == first.rank()
                && p.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !same {
                return shape_err(format!("concat {:?} with {:?} along {axis}", first.shape(), p.shape()));
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let dims: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = dims.iter().sum();
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &d) in parts.iter().zip(&dims) {
                out.extend_from_slice(&p.data()[o * d * inner..(o + 1) * d * inner]);
            }
        }
        Ok(Tensor::from_op("concat", shape, out, parts.to_vec(), move |g| {
            let mut grads: Vec<Vec<T>> = dims.iter().map(|&d| Vec::with_capacity(outer * d * inner)).collect();
            let mut offset = 0;
            for _ in 0..outer {
                for (gp, &d) in grads.iter_mut().zip(&dims) {
                    gp.extend_from_slice(&g[offset..offset + d * inner]);
                    offset += d * inner;
                }
            }
            grads.into_iter().map(Some).collect()
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_shapes() {
        assert_eq!(broadcast_shape(&[2, 3, 4], &[3, 1]).unwrap(), vec![2, 3, 4]);
        assert_eq!(broadcast_shape(&[], &[5]).unwrap(), vec![5]);
        assert!(broadcast_shape(&[2, 3], &[4]).is_err());
    }

    #[test]
    fn bias_style_broadcast() {
        let x = Tensor::<f64>::from_f64(&[1, 2, 1, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::<f64>::from_f64(&[2, 1, 1], &[10.0, 20.0]).unwrap();
        assert_eq!(x.add(&b).unwrap().to_f64_vec(), vec![11.0, 12.0, 23.0, 24.0]);
    }

    #[test]
    fn narrow_and_concat_invert() {
        let x = Tensor::<f64>::from_f64(&[2, 3, 2], &(0..12).map(f64::from).collect::<Vec<_>>()).unwrap();
        let a = x.narrow(1, 0, 1).unwrap();
        let b = x.narrow(1, 1, 2).unwrap();
        let y = Tensor::concat(&[a, b], 1).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn max_and_mean_axes() {
        let x = Tensor::<f64>::from_f64(&[2, 3], &[1.0, 5.0, 2.0, 7.0, 0.0, 4.0]).unwrap();
        assert_eq!(x.max_axes(&[1], false).unwrap().to_f64_vec(), vec![5.0, 7.0]);
        assert_eq!(x.mean_axes(&[0], true).unwrap().shape(), &[1, 3]);
        assert_eq!(x.mean_axes(&[0], false).unwrap().to_f64_vec(), vec![4.0, 2.5, 3.0]);
    }

    #[test]
    fn checked_domain_errors() {
        let x = Tensor::<f64>::from_f64(&[2], &[1.0, -1.0]).unwrap();
        assert!(matches!(x.log_checked(), Err(Error::Domain(_))));
        assert!(matches!(x.sqrt_checked(), Err(Error::Domain(_))));
        assert!(x.sqrt().data()[1].is_nan());
    }
}
