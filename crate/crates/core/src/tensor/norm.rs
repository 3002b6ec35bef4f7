use super::{Element, Tensor};
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Per-channel running statistics, updated in training mode.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T: Element> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

impl<T: Element> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
            momentum: T::c(0.1),
            eps: T::c(1e-5),
        }
    }
}

/// Batch normalization over the N, H, W axes of an NCHW tensor.
///
/// Training mode normalizes with biased batch statistics and folds the
/// unbiased variance into `stats` with exponential momentum.
pub fn batch_norm2d<T: Element>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    stats: &mut RunningStats<T>,
    mode: BnMode,
) -> Result<Tensor<T>> {
    let &[n, c, h, w] = input.shape() else {
        return shape_err(format!("batch_norm2d expects NCHW, got {:?}", input.shape()));
    };
    if gamma.shape() != [c] || beta.shape() != [c] || stats.mean.len() != c {
        return shape_err(format!("batch_norm2d affine/stat size mismatch for {c} channels"));
    }
    let hw = h * w;
    let count = n * hw;
    let x = input.data();
    let at = move |b: usize, ch: usize| b * c * hw + ch * hw;

    let (mean, var): (Vec<T>, Vec<T>) = match mode {
        BnMode::Train => {
            let inv = T::one() / T::c(count as f64);
            let mut means = Vec::with_capacity(c);
            let mut vars = Vec::with_capacity(c);
            for ch in 0..c {
                let mut s = T::zero();
                for b in 0..n {
                    s = x[at(b, ch)..][..hw].iter().fold(s, |a, &v| a + v);
                }
                let m = s * inv;
                let mut ss = T::zero();
                for b in 0..n {
                    ss = x[at(b, ch)..][..hw].iter().fold(ss, |a, &v| a + (v - m) * (v - m));
                }
                means.push(m);
                vars.push(ss * inv);
            }
            let mo = stats.momentum;
            let unbias = if count > 1 { T::c(count as f64 / (count - 1) as f64) } else { T::one() };
            for ch in 0..c {
                stats.mean[ch] = (T::one() - mo) * stats.mean[ch] + mo * means[ch];
                stats.var[ch] = (T::one() - mo) * stats.var[ch] + mo * vars[ch] * unbias;
            }
            (means, vars)
        }
        BnMode::Eval => (stats.mean.clone(), stats.var.clone()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + stats.eps).sqrt()).collect();

    let (gd, bd) = (gamma.data(), beta.data());
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let base = at(b, ch);
            for i in base..base + hw {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                out[i] = xh * gd[ch] + bd[ch];
            }
        }
    }

    let (xin, g_t, b_t) = (input.clone(), gamma.clone(), beta.clone());
    Ok(Tensor::from_op(
        "batch_norm2d",
        input.shape().to_vec(),
        out,
        vec![input.clone(), gamma.clone(), beta.clone()],
        move |g| {
            let gd = g_t.data();
            let mut sum_g = vec![T::zero(); c];
            let mut sum_gx = vec![T::zero(); c];
            for b in 0..n {
                for ch in 0..c {
                    let base = at(b, ch);
                    for i in base..base + hw {
                        sum_g[ch] = sum_g[ch] + g[i];
                        sum_gx[ch] = sum_gx[ch] + g[i] * xhat[i];
                    }
                }
            }
            let gx = xin.is_tracked().then(|| {
                let mut gx = vec![T::zero(); xhat.len()];
                let inv = T::one() / T::c(count as f64);
                for b in 0..n {
                    for ch in 0..c {
                        let base = at(b, ch);
                        let scale = gd[ch] * inv_std[ch];
                        for i in base..base + hw {
                            gx[i] = match mode {
                                BnMode::Train => {
                                    scale * (g[i] - sum_g[ch] * inv - xhat[i] * sum_gx[ch] * inv)
                                }
                                BnMode::Eval => scale * g[i],
                            };
                        }
                    }
                }
                gx
            });
            vec![
                gx,
                g_t.is_tracked().then_some(sum_gx),
                b_t.is_tracked().then_some(sum_g),
            ]
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_standardizes_each_channel() {
        let (n, c, h, w) = (3, 2, 4, 5);
        let data: Vec<f64> = (0..n * c * h * w)
            .map(|i| ((i * 37) % 23) as f64 * 0.7 - 3.0 + if (i / (h * w)) % 2 == 0 { 5.0 } else { 0.0 })
            .collect();
        let x = Tensor::<f64>::from_vec(&[n, c, h, w], data).unwrap();
        let mut stats = RunningStats::new(c);
        let y = batch_norm2d(&x, &Tensor::ones(&[c]), &Tensor::zeros(&[c]), &mut stats, BnMode::Train).unwrap();
        for ch in 0..c {
            let vals: Vec<f64> = (0..n)
                .flat_map(|b| y.data()[(b * c + ch) * h * w..][..h * w].to_vec())
                .collect();
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-6, "mean {m}");
            assert!((v - 1.0).abs() < 1e-5, "var {v}");
        }
        assert!(stats.mean[0] > 0.0);
    }

    #[test]
    fn eval_with_unit_stats_is_identity() {
        let x = Tensor::<f64>::from_f64(&[1, 2, 2, 2], &[0.5, -1.0, 2.0, 3.0, 0.0, 1.0, -2.0, 4.0]).unwrap();
        let mut stats = RunningStats { eps: 0.0, ..RunningStats::new(2) };
        let y = batch_norm2d(&x, &Tensor::ones(&[2]), &Tensor::zeros(&[2]), &mut stats, BnMode::Eval).unwrap();
        assert_eq!(y.data(), x.data());
    }
}
