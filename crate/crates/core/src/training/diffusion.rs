use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionConfig {
    pub enabled: bool,
    pub t_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub r_target: f64,
    pub stride: usize,
    pub adapt_every: u64,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            t_max: 500,
            beta_start: 1e-4,
            beta_end: 0.02,
            r_target: 0.6,
            stride: 1,
            adapt_every: 4,
        }
    }
}

impl DiffusionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |b: f64| b > 0.0 && b < 1.0;
        if self.t_max > 0 && !(ok(self.beta_start) && ok(self.beta_end) && self.beta_start <= self.beta_end) {
            return Err(Error::Config("diffusion betas must satisfy 0 < start <= end < 1".into()));
        }
        if self.adapt_every == 0 {
            return Err(Error::Config("diffusion.adapt_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Adaptive forward-diffusion applied to discriminator inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionState {
    pub cfg: DiffusionConfig,
    /// `alpha_bar[t]` for `t` in `0..=t_max`; `alpha_bar[0] = 1`.
    pub alpha_bar: Vec<f64>,
    /// Current maximum timestep.
    pub t: usize,
    /// EMA of `sign(D(real) - 0.5)`.
    pub r_d: f64,
    pub ema_decay: f64,
}

impl DiffusionState {
    pub fn new(cfg: DiffusionConfig, ema_decay: f64) -> Self {
        let mut alpha_bar = Vec::with_capacity(cfg.t_max + 1);
        alpha_bar.push(1.0);
        let mut acc = 1.0;
        for s in 1..=cfg.t_max {
            let beta = if cfg.t_max == 1 {
                cfg.beta_start
            } else {
                cfg.beta_start + (cfg.beta_end - cfg.beta_start) * (s - 1) as f64 / (cfg.t_max - 1) as f64
            };
            acc *= 1.0 - beta;
            alpha_bar.push(acc);
        }
        Self { cfg, alpha_bar, t: 0, r_d: 0.0, ema_decay }
    }

    /// One adaptation from a batch of discriminator outputs on real inputs.
    pub fn adapt(&mut self, d_real: &[f64]) {
        let n = d_real.len().max(1) as f64;
        let sign = |v: f64| if v > 0.5 { 1.0 } else if v < 0.5 { -1.0 } else { 0.0 };
        let batch = d_real.iter().map(|&v| sign(v)).sum::<f64>() / n;
        self.r_d = self.ema_decay * self.r_d + (1.0 - self.ema_decay) * batch;
        let step = self.cfg.stride as i64;
        let t = self.t as i64
            + match self.r_d.partial_cmp(&self.cfg.r_target) {
                Some(std::cmp::Ordering::Greater) => step,
                Some(std::cmp::Ordering::Less) => -step,
                _ => 0,
            };
        self.t = t.clamp(0, self.cfg.t_max as i64) as usize;
    }

    /// Number of adaptations with every real output above 0.5 after which
    /// `t` first reaches `t_max`, starting from `t = 0` and `r_d = 0`.
    pub fn predicted_saturation(&self) -> Option<u64> {
        let target = self.cfg.r_target;
        if target >= 1.0 || self.ema_decay <= 0.0 {
            return None;
        }
        // r_d after k updates is 1 - decay^k; t grows from the first k with r_d > target.
        let k0 = ((1.0 - target).ln() / self.ema_decay.ln()).floor() as u64 + 1;
        let climbs = self.cfg.t_max.div_ceil(self.cfg.stride.max(1)) as u64;
        Some(k0 + climbs.max(1) - 1)
    }
}

/// `sqrt(abar_t) * r + sqrt(1 - abar_t) * eps` with `t` drawn uniformly from
/// `0..=ds.t` per batch item. Returns `r` itself, drawing nothing, when `t = 0`.
pub fn diffuse_residual<T: Element>(r: &Tensor<T>, ds: &DiffusionState, rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
    if ds.t == 0 {
        return Ok(r.clone());
    }
    let n = r.shape()[0];
    let ts: Vec<usize> = (0..n).map(|_| rng.gen_range(0..=ds.t)).collect();
    diffuse_at(r, &ds.alpha_bar, &ts, rng)
}

/// Forward diffusion with an explicit timestep per batch item.
pub fn diffuse_at<T: Element>(r: &Tensor<T>, alpha_bar: &[f64], ts: &[usize], rng: &mut ChaCha8Rng) -> Result<Tensor<T>> {
    let n = r.shape()[0];
    if ts.len() != n {
        return Err(Error::InvalidArgument(format!("{} timesteps for {n} items", ts.len())));
    }
    let per = r.numel() / n.max(1);
    let mut coef = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(r.numel());
    for &t in ts {
        let Some(&ab) = alpha_bar.get(t) else {
            return Err(Error::InvalidArgument(format!("timestep {t} beyond schedule of {}", alpha_bar.len() - 1)));
        };
        coef.push(T::c(ab.sqrt()));
        let s = (1.0 - ab).sqrt();
        noise.extend((0..per).map(|_| T::c(s * rng.sample::<f64, _>(StandardNormal))));
    }
    let mut cshape = vec![1; r.rank()];
    cshape[0] = n;
    let coef = Tensor::from_vec(&cshape, coef)?;
    r.mul(&coef)?.add(&Tensor::from_vec(r.shape(), noise)?)
}
