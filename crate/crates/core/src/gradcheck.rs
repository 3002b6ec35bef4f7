//! Central finite-difference gradient checking in 64-bit.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradReport {
    /// Worst relative error over all checked inputs.
    pub max_rel_err: f64,
    pub coords_checked: usize,
}

/// Compares reverse-mode gradients of the scalar `f(inputs)` against central
/// differences with step `h`.
///
/// The relative error for one input is `max|analytic - numeric|` divided by
/// the larger of the two gradients' max-abs (floored at `1e-8`). When
/// `max_coords` is set, only that many coordinates per input (chosen with
/// `seed`) are perturbed.
pub fn check<F>(inputs: &[Tensor<f64>], f: F, h: f64, max_coords: Option<usize>, seed: u64) -> Result<GradReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let tracked: Vec<Tensor<f64>> = inputs.iter().map(|t| t.requires_grad()).collect();
    f(&tracked)?.backward()?;
    let analytic: Vec<Vec<f64>> = tracked
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_err: f64 = 0.0;
    let mut coords_checked = 0;
    for (which, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        let mut worst_diff: f64 = 0.0;
        let mut scale: f64 = 1e-8;
        for &i in &coords {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = input.to_vec();
                data[i] += delta;
                let mut args = inputs.to_vec();
                args[which] = Tensor::from_vec(input.shape(), data)?;
                Ok(f(&args)?.item())
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            let a = analytic[which][i];
            worst_diff = worst_diff.max((a - numeric).abs());
            scale = scale.max(a.abs()).max(numeric.abs());
        }
        coords_checked += coords.len();
        max_rel_err = max_rel_err.max(worst_diff / scale);
    }
    Ok(GradReport { max_rel_err, coords_checked })
}

/// Checks the gradient of `f` along `directions` random unit-variance
/// directions spanning every input at once: the central difference of
/// `f(x + h·d)` against `<grad, d>`.
///
/// Suited to large parameter sets, where sampled coordinates would mostly
/// land on near-zero gradients. The error per direction is relative to the
/// larger of the two derivatives.
pub fn check_directional<F>(inputs: &[Tensor<f64>], f: F, h: f64, directions: usize, seed: u64) -> Result<GradReport>
where
    F: Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
{
    let tracked: Vec<Tensor<f64>> = inputs.iter().map(|t| t.requires_grad()).collect();
    f(&tracked)?.backward()?;
    let analytic: Vec<Vec<f64>> = tracked
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_err: f64 = 0.0;
    for _ in 0..directions {
        let dirs: Vec<Vec<f64>> = inputs.iter().map(|t| (0..t.numel()).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let shifted = |s: f64| -> Result<f64> {
            let args = inputs
                .iter()
                .zip(&dirs)
                .map(|(t, d)| Tensor::from_vec(t.shape(), t.data().iter().zip(d).map(|(v, d)| v + s * d).collect()))
                .collect::<Result<Vec<_>>>()?;
            Ok(f(&args)?.item())
        };
        let numeric = (shifted(h)? - shifted(-h)?) / (2.0 * h);
        let exact: f64 = analytic.iter().zip(&dirs).flat_map(|(g, d)| g.iter().zip(d).map(|(g, d)| g * d)).sum();
        let scale = exact.abs().max(numeric.abs()).max(1e-8);
        max_rel_err = max_rel_err.max((exact - numeric).abs() / scale);
    }
    Ok(GradReport { max_rel_err, coords_checked: directions })
}
