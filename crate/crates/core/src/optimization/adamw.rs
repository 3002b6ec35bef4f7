use crate::error::{Error, Result};
use crate::nets::ParamSet;
use crate::tensor::Element;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-4 }
    }
}

/// Adam with decoupled weight decay. Moments are stored in the parameter dtype.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW<T: Element = f32> {
    pub cfg: AdamWConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Element> AdamW<T> {
    pub fn new(cfg: AdamWConfig, params: &ParamSet<T>) -> Self {
        let zeros = |p: &ParamSet<T>| p.tensors().iter().map(|t| vec![T::zero(); t.numel()]).collect();
        Self { cfg, m: zeros(params), v: zeros(params), t: 0 }
    }

    /// Clears moments and the step counter.
    pub fn reset(&mut self) {
        self.m.iter_mut().chain(self.v.iter_mut()).for_each(|b| b.fill(T::zero()));
        self.t = 0;
    }

    /// One update with learning rate `lr`:
    /// `theta <- theta * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)`.
    ///
    /// Nothing changes when any gradient is non-finite; the error names the
    /// first offending parameter.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Vec<T>], lr: f64) -> Result<()> {
        if grads.len() != params.len() || grads.iter().zip(params.tensors()).any(|(g, p)| g.len() != p.numel()) {
            return Err(Error::InvalidArgument("gradient list does not match parameters".into()));
        }
        for (name, g) in params.names().iter().zip(grads) {
            if let Some(v) = g.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name} contains {v}")));
            }
        }
        self.t += 1;
        let (b1, b2) = (T::c(self.cfg.beta1), T::c(self.cfg.beta2));
        let one = T::one();
        let bc1 = T::c(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = T::c(1.0 - self.cfg.beta2.powi(self.t as i32));
        let eps = T::c(self.cfg.eps);
        let lr_t = T::c(lr);
        let decay = T::c(1.0 - lr * self.cfg.weight_decay);
        for (i, g) in grads.iter().enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let next: Vec<T> = params.tensors()[i]
                .data()
                .iter()
                .enumerate()
                .map(|(j, &theta)| {
                    m[j] = b1 * m[j] + (one - b1) * g[j];
                    v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
                    let m_hat = m[j] / bc1;
                    let v_hat = v[j] / bc2;
                    theta * decay - lr_t * (m_hat / (v_hat.sqrt() + eps))
                })
                .collect();
            params.set_values(i, next)?;
        }
        Ok(())
    }
}
