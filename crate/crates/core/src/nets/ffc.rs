use rand::Rng;

use super::{conv_param_count, Mode, ParamId, ParamSet};
use crate::error::{shape_err, Error, Result};
use crate::spectral::{irfft2d, rfft2d};
use crate::tensor::{batch_norm2d, conv2d, Conv2dOpts, Element, PadMode, RunningStats, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FfcBlockConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Share of channels routed through the spectral branch.
    pub global_fraction: f64,
    pub kernel: usize,
    pub spectral_hidden: usize,
}

impl FfcBlockConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.global_fraction) {
            return Err(Error::Config(format!("global fraction {} outside [0, 1]", self.global_fraction)));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {}", self.kernel)));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("FFC blocks need at least one channel".into()));
        }
        if self.global_out() > 0 && self.spectral_hidden == 0 {
            return Err(Error::Config("spectral hidden width must be >= 1".into()));
        }
        Ok(())
    }

    pub fn global_in(&self) -> usize {
        split(self.in_channels, self.global_fraction)
    }

    pub fn global_out(&self) -> usize {
        split(self.out_channels, self.global_fraction)
    }

    pub fn local_in(&self) -> usize {
        self.in_channels - self.global_in()
    }

    pub fn local_out(&self) -> usize {
        self.out_channels - self.global_out()
    }

    pub fn param_count(&self) -> usize {
        let (li, gi, lo, go) = (self.local_in(), self.global_in(), self.local_out(), self.global_out());
        let k = self.kernel;
        let h = self.spectral_hidden;
        let mut n = 0;
        if lo > 0 {
            n += conv_param_count(li + gi, lo, k, false) + 2 * lo;
        }
        if go > 0 {
            n += conv_param_count(li, go, k, false) + 2 * go;
            if gi > 0 {
                n += conv_param_count(gi, h, 1, false)
                    + conv_param_count(2 * h, 2 * h, 1, false)
                    + 2 * 2 * h
                    + conv_param_count(h, go, 1, false);
            }
        }
        n
    }
}

fn split(channels: usize, fraction: f64) -> usize {
    ((channels as f64 * fraction).round() as usize).min(channels)
}

/// Parameter handles of the global-to-global spectral path.
#[derive(Clone, Copy, Debug)]
pub struct SpectralParams {
    pub reduce: ParamId,
    pub freq: ParamId,
    pub freq_gamma: ParamId,
    pub freq_beta: ParamId,
    pub expand: ParamId,
}

/// Parameter handles and running statistics of one FFC block.
#[derive(Clone, Debug)]
pub struct FfcBlock<T: Element> {
    pub cfg: FfcBlockConfig,
    /// `[local_out, in, k, k]`: local-to-local and global-to-local kernels
    /// stacked along the input axis.
    to_local: Option<ParamId>,
    local_bn: Option<(ParamId, ParamId)>,
    local_to_global: Option<ParamId>,
    spectral: Option<SpectralParams>,
    global_bn: Option<(ParamId, ParamId)>,
    pub local_stats: RunningStats<T>,
    pub global_stats: RunningStats<T>,
    pub freq_stats: RunningStats<T>,
}

fn add_bn<T: Element>(params: &mut ParamSet<T>, prefix: &str, c: usize) -> (ParamId, ParamId) {
    (
        params.add(format!("{prefix}.gamma"), Tensor::ones(&[c])),
        params.add(format!("{prefix}.beta"), Tensor::zeros(&[c])),
    )
}

impl<T: Element> FfcBlock<T> {
    pub fn new(cfg: FfcBlockConfig, prefix: &str, params: &mut ParamSet<T>, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let (li, gi, lo, go) = (cfg.local_in(), cfg.global_in(), cfg.local_out(), cfg.global_out());
        let k = cfg.kernel;
        let h = cfg.spectral_hidden;
        let mut block = FfcBlock {
            cfg,
            to_local: None,
            local_bn: None,
            local_to_global: None,
            spectral: None,
            global_bn: None,
            local_stats: RunningStats::new(lo),
            global_stats: RunningStats::new(go),
            freq_stats: RunningStats::new(2 * h),
        };
        if lo > 0 {
            block.to_local = Some(params.add_conv_kernel(format!("{prefix}.to_local"), [lo, li + gi, k, k], 1.0, rng));
            block.local_bn = Some(add_bn(params, &format!("{prefix}.local_bn"), lo));
        }
        if go > 0 {
            if li > 0 {
                block.local_to_global =
                    Some(params.add_conv_kernel(format!("{prefix}.local_to_global"), [go, li, k, k], 1.0, rng));
            }
            if gi > 0 {
                let p = format!("{prefix}.spectral");
                let reduce = params.add_conv_kernel(format!("{p}.reduce"), [h, gi, 1, 1], 1.0, rng);
                let freq = params.add_conv_kernel(format!("{p}.freq"), [2 * h, 2 * h, 1, 1], 1.0, rng);
                let (freq_gamma, freq_beta) = add_bn(params, &format!("{p}.freq_bn"), 2 * h);
                let expand = params.add_conv_kernel(format!("{p}.expand"), [go, h, 1, 1], 1.0, rng);
                block.spectral = Some(SpectralParams { reduce, freq, freq_gamma, freq_beta, expand });
            }
            block.global_bn = Some(add_bn(params, &format!("{prefix}.global_bn"), go));
        }
        Ok(block)
    }

    pub fn forward(&mut self, x: &Tensor<T>, params: &ParamSet<T>, mode: Mode) -> Result<Tensor<T>> {
        ffc_block_forward(x, self, params, mode)
    }
}

/// Global-to-global path: 1×1 reduce, real FFT, 1×1 conv + norm + ReLU over
/// stacked real/imaginary channels, inverse FFT, 1×1 expand.
pub fn spectral_transform<T: Element>(
    x: &Tensor<T>,
    sp: &SpectralParams,
    params: &ParamSet<T>,
    stats: &mut RunningStats<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    let w = x.shape()[3];
    let one = Conv2dOpts::default();
    let reduced = conv2d(x, params.get(sp.reduce), None, one)?;
    let spec = rfft2d(&reduced)?;
    let mixed = conv2d(&spec.tensor, params.get(sp.freq), None, one)?;
    let mixed = batch_norm2d(&mixed, params.get(sp.freq_gamma), params.get(sp.freq_beta), stats, mode.bn())?.relu();
    let back = irfft2d(&mixed, w)?;
    conv2d(&back, params.get(sp.expand), None, one)
}

/// One FFC layer. Channels `[0, local_in)` form the local part of `x`, the
/// rest the global part. Each destination sums its two incoming paths, then
/// applies batch norm and ReLU; the output is `[local_out | global_out]`.
pub fn ffc_block_forward<T: Element>(
    x: &Tensor<T>,
    block: &mut FfcBlock<T>,
    params: &ParamSet<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    let cfg = block.cfg;
    if x.rank() != 4 || x.shape()[1] != cfg.in_channels {
        return shape_err(format!("FFC block expects {} input channels, got {:?}", cfg.in_channels, x.shape()));
    }
    let (li, gi) = (cfg.local_in(), cfg.global_in());
    let pad = cfg.kernel / 2;
    let spatial = Conv2dOpts::same(pad, PadMode::Reflect);
    let mut outputs = Vec::with_capacity(2);

    if let (Some(k), Some((g, b))) = (block.to_local, block.local_bn) {
        let y = conv2d(x, params.get(k), None, spatial)?;
        outputs.push(batch_norm2d(&y, params.get(g), params.get(b), &mut block.local_stats, mode.bn())?.relu());
    }
    if let Some((g, b)) = block.global_bn {
        let mut acc: Option<Tensor<T>> = None;
        if let Some(k) = block.local_to_global {
            let x_l = x.narrow(1, 0, li)?;
            acc = Some(conv2d(&x_l, params.get(k), None, spatial)?);
        }
        if let Some(sp) = &block.spectral {
            let x_g = x.narrow(1, li, gi)?;
            let s = spectral_transform(&x_g, sp, params, &mut block.freq_stats, mode)?;
            acc = Some(match acc {
                Some(a) => a.add(&s)?,
                None => s,
            });
        }
        let y = match acc {
            Some(a) => a,
            None => {
                let &[n, _, h, w] = x.shape() else { unreachable!() };
                Tensor::zeros(&[n, cfg.global_out(), h, w])
            }
        };
        outputs.push(batch_norm2d(&y, params.get(g), params.get(b), &mut block.global_stats, mode.bn())?.relu());
    }
    if outputs.len() == 1 {
        Ok(outputs.pop().expect("one output"))
    } else {
        Tensor::concat(&outputs, 1)
    }
}
