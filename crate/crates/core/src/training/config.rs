//! Run configuration and its `key = value` text format.

use std::fmt::Display;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nets::{DiscriminatorConfig, GeneratorConfig};
use crate::objectives::{LossWeights, SsimParams};
use crate::optimization::{AdamWConfig, RestartPolicyConfig};

use super::diffusion::DiffusionConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRunConfig {
    pub data_dir: String,
    pub seed: u64,
    pub steps: u64,
    pub scale: usize,
    pub patch: usize,
    pub batch: usize,
    pub checkpoint_every: u64,
    pub gen: GeneratorConfig,
    pub disc: DiscriminatorConfig,
    pub loss: LossWeights,
    pub ssim: SsimParams,
    pub lr_g: f64,
    pub lr_d: f64,
    pub adam: AdamWConfig,
    pub cycle_steps: u64,
    pub peak_decay: f64,
    pub floor_frac: f64,
    pub policy: RestartPolicyConfig,
    pub diffusion: DiffusionConfig,
    /// Steps over which the initial generator-loss EMA is captured.
    pub noise_warmup: u64,
    pub ema_decay: f64,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        Self {
            data_dir: String::new(),
            seed: 0,
            steps: 2000,
            scale: 3,
            patch: 48,
            batch: 8,
            checkpoint_every: 500,
            gen: GeneratorConfig::default(),
            disc: DiscriminatorConfig::default(),
            loss: LossWeights::default(),
            ssim: SsimParams::default(),
            lr_g: 2e-4,
            lr_d: 1e-4,
            adam: AdamWConfig::default(),
            cycle_steps: 2000,
            peak_decay: 0.95,
            floor_frac: 0.5,
            policy: RestartPolicyConfig::default(),
            diffusion: DiffusionConfig::default(),
            noise_warmup: 100,
            ema_decay: 0.99,
        }
    }
}

/// Every recognized key, in serialization order.
pub const KEYS: &[&str] = &[
    "data.dir",
    "run.seed",
    "run.steps",
    "run.scale",
    "run.patch",
    "run.batch",
    "run.checkpoint_every",
    "gen.blocks",
    "gen.width",
    "gen.alpha",
    "gen.kernel",
    "gen.spectral_hidden",
    "gen.noise_sigma",
    "gen.zero_tail",
    "gen.tail_init_std",
    "disc.widths",
    "disc.stride",
    "disc.kernel",
    "disc.leaky_slope",
    "loss.adversarial",
    "loss.perceptual",
    "loss.mge",
    "loss.ssim",
    "loss.charbonnier",
    "loss.charbonnier_eps",
    "loss.ssim_c1",
    "loss.ssim_c2",
    "opt.lr_g",
    "opt.lr_d",
    "opt.beta1",
    "opt.beta2",
    "opt.eps",
    "opt.weight_decay",
    "sched.cycle_steps",
    "sched.peak_decay",
    "sched.floor_frac",
    "policy.enabled",
    "policy.theta_low",
    "policy.theta_high",
    "policy.window",
    "policy.k_lr",
    "policy.k_adv",
    "policy.cooldown",
    "policy.exit_low",
    "policy.exit_high",
    "policy.reinit",
    "policy.restart_every",
    "diffusion.enabled",
    "diffusion.t_max",
    "diffusion.beta_start",
    "diffusion.beta_end",
    "diffusion.r_target",
    "diffusion.stride",
    "diffusion.adapt_every",
    "noise.warmup_steps",
    "ema.decay",
];

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn fmt_f(v: f64) -> String {
    format!("{v:?}")
}

impl TrainRunConfig {
    /// Value of `key` as written to a config file.
    pub fn get(&self, key: &str) -> Result<String> {
        fn s(v: impl Display) -> String {
            v.to_string()
        }
        Ok(match key {
            "data.dir" => self.data_dir.clone(),
            "run.seed" => s(self.seed),
            "run.steps" => s(self.steps),
            "run.scale" => s(self.scale),
            "run.patch" => s(self.patch),
            "run.batch" => s(self.batch),
            "run.checkpoint_every" => s(self.checkpoint_every),
            "gen.blocks" => s(self.gen.blocks),
            "gen.width" => s(self.gen.width),
            "gen.alpha" => fmt_f(self.gen.global_fraction),
            "gen.kernel" => s(self.gen.kernel),
            "gen.spectral_hidden" => s(self.gen.spectral_hidden),
            "gen.noise_sigma" => fmt_f(self.gen.noise_sigma),
            "gen.zero_tail" => s(self.gen.zero_tail),
            "gen.tail_init_std" => fmt_f(self.gen.tail_init_std),
            "disc.widths" => self.disc.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
            "disc.stride" => s(self.disc.stride),
            "disc.kernel" => s(self.disc.kernel),
            "disc.leaky_slope" => fmt_f(self.disc.leaky_slope),
            "loss.adversarial" => fmt_f(self.loss.adversarial),
            "loss.perceptual" => fmt_f(self.loss.perceptual),
            "loss.mge" => fmt_f(self.loss.mge),
            "loss.ssim" => fmt_f(self.loss.ssim),
            "loss.charbonnier" => fmt_f(self.loss.charbonnier),
            "loss.charbonnier_eps" => fmt_f(self.loss.charbonnier_eps),
            "loss.ssim_c1" => fmt_f(self.ssim.c1),
            "loss.ssim_c2" => fmt_f(self.ssim.c2),
            "opt.lr_g" => fmt_f(self.lr_g),
            "opt.lr_d" => fmt_f(self.lr_d),
            "opt.beta1" => fmt_f(self.adam.beta1),
            "opt.beta2" => fmt_f(self.adam.beta2),
            "opt.eps" => fmt_f(self.adam.eps),
            "opt.weight_decay" => fmt_f(self.adam.weight_decay),
            "sched.cycle_steps" => s(self.cycle_steps),
            "sched.peak_decay" => fmt_f(self.peak_decay),
            "sched.floor_frac" => fmt_f(self.floor_frac),
            "policy.enabled" => s(self.policy.enabled),
            "policy.theta_low" => fmt_f(self.policy.theta_low),
            "policy.theta_high" => fmt_f(self.policy.theta_high),
            "policy.window" => s(self.policy.window),
            "policy.k_lr" => fmt_f(self.policy.k_lr),
            "policy.k_adv" => fmt_f(self.policy.k_adv),
            "policy.cooldown" => s(self.policy.cooldown),
            "policy.exit_low" => fmt_f(self.policy.exit_low),
            "policy.exit_high" => fmt_f(self.policy.exit_high),
            "policy.reinit" => s(self.policy.reinit),
            "policy.restart_every" => s(self.policy.restart_every),
            "diffusion.enabled" => s(self.diffusion.enabled),
            "diffusion.t_max" => s(self.diffusion.t_max),
            "diffusion.beta_start" => fmt_f(self.diffusion.beta_start),
            "diffusion.beta_end" => fmt_f(self.diffusion.beta_end),
            "diffusion.r_target" => fmt_f(self.diffusion.r_target),
            "diffusion.stride" => s(self.diffusion.stride),
            "diffusion.adapt_every" => s(self.diffusion.adapt_every),
            "noise.warmup_steps" => s(self.noise_warmup),
            "ema.decay" => fmt_f(self.ema_decay),
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        })
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value;
        match key {
            "data.dir" => self.data_dir = v.to_string(),
            "run.seed" => self.seed = parse(key, v)?,
            "run.steps" => self.steps = parse(key, v)?,
            "run.scale" => self.scale = parse(key, v)?,
            "run.patch" => self.patch = parse(key, v)?,
            "run.batch" => self.batch = parse(key, v)?,
            "run.checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "gen.blocks" => self.gen.blocks = parse(key, v)?,
            "gen.width" => self.gen.width = parse(key, v)?,
            "gen.alpha" => self.gen.global_fraction = parse(key, v)?,
            "gen.kernel" => self.gen.kernel = parse(key, v)?,
            "gen.spectral_hidden" => self.gen.spectral_hidden = parse(key, v)?,
            "gen.noise_sigma" => self.gen.noise_sigma = parse(key, v)?,
            "gen.zero_tail" => self.gen.zero_tail = parse(key, v)?,
            "gen.tail_init_std" => self.gen.tail_init_std = parse(key, v)?,
            "disc.widths" => {
                self.disc.widths = v
                    .split(',')
                    .map(|p| parse(key, p.trim()))
                    .collect::<Result<Vec<usize>>>()?
            }
            "disc.stride" => self.disc.stride = parse(key, v)?,
            "disc.kernel" => self.disc.kernel = parse(key, v)?,
            "disc.leaky_slope" => self.disc.leaky_slope = parse(key, v)?,
            "loss.adversarial" => self.loss.adversarial = parse(key, v)?,
            "loss.perceptual" => self.loss.perceptual = parse(key, v)?,
            "loss.mge" => self.loss.mge = parse(key, v)?,
            "loss.ssim" => self.loss.ssim = parse(key, v)?,
            "loss.charbonnier" => self.loss.charbonnier = parse(key, v)?,
            "loss.charbonnier_eps" => self.loss.charbonnier_eps = parse(key, v)?,
            "loss.ssim_c1" => self.ssim.c1 = parse(key, v)?,
            "loss.ssim_c2" => self.ssim.c2 = parse(key, v)?,
            "opt.lr_g" => self.lr_g = parse(key, v)?,
            "opt.lr_d" => self.lr_d = parse(key, v)?,
            "opt.beta1" => self.adam.beta1 = parse(key, v)?,
            "opt.beta2" => self.adam.beta2 = parse(key, v)?,
            "opt.eps" => self.adam.eps = parse(key, v)?,
            "opt.weight_decay" => self.adam.weight_decay = parse(key, v)?,
            "sched.cycle_steps" => self.cycle_steps = parse(key, v)?,
            "sched.peak_decay" => self.peak_decay = parse(key, v)?,
            "sched.floor_frac" => self.floor_frac = parse(key, v)?,
            "policy.enabled" => self.policy.enabled = parse(key, v)?,
            "policy.theta_low" => self.policy.theta_low = parse(key, v)?,
            "policy.theta_high" => self.policy.theta_high = parse(key, v)?,
            "policy.window" => self.policy.window = parse(key, v)?,
            "policy.k_lr" => self.policy.k_lr = parse(key, v)?,
            "policy.k_adv" => self.policy.k_adv = parse(key, v)?,
            "policy.cooldown" => self.policy.cooldown = parse(key, v)?,
            "policy.exit_low" => self.policy.exit_low = parse(key, v)?,
            "policy.exit_high" => self.policy.exit_high = parse(key, v)?,
            "policy.reinit" => self.policy.reinit = parse(key, v)?,
            "policy.restart_every" => self.policy.restart_every = parse(key, v)?,
            "diffusion.enabled" => self.diffusion.enabled = parse(key, v)?,
            "diffusion.t_max" => self.diffusion.t_max = parse(key, v)?,
            "diffusion.beta_start" => self.diffusion.beta_start = parse(key, v)?,
            "diffusion.beta_end" => self.diffusion.beta_end = parse(key, v)?,
            "diffusion.r_target" => self.diffusion.r_target = parse(key, v)?,
            "diffusion.stride" => self.diffusion.stride = parse(key, v)?,
            "diffusion.adapt_every" => self.diffusion.adapt_every = parse(key, v)?,
            "noise.warmup_steps" => self.noise_warmup = parse(key, v)?,
            "ema.decay" => self.ema_decay = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// blank lines are ignored; unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", lineno + 1)));
            };
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key:?}", lineno + 1)));
            }
            cfg.set(key, value.trim())
                .map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("line {}: {m}", lineno + 1)),
                    other => other,
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key in canonical order, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).expect("known key"));
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale < 2 {
            return Err(Error::Config(format!("scale must be >= 2, got {}", self.scale)));
        }
        if self.patch == 0 || self.patch % self.scale != 0 {
            return Err(Error::Config(format!("patch {} must be a positive multiple of scale {}", self.patch, self.scale)));
        }
        if self.patch / self.scale < 2 {
            return Err(Error::Config("low-resolution patches need at least 2 pixels".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        if self.data_dir.contains('\n') {
            return Err(Error::Config("data.dir must be a single line".into()));
        }
        let weights = [
            self.loss.adversarial,
            self.loss.perceptual,
            self.loss.mge,
            self.loss.ssim,
            self.loss.charbonnier,
        ];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("loss weights must be finite and >= 0".into()));
        }
        if !(self.loss.charbonnier_eps > 0.0) {
            return Err(Error::Config("loss.charbonnier_eps must be > 0".into()));
        }
        if !(self.ema_decay >= 0.0 && self.ema_decay < 1.0) {
            return Err(Error::Config("ema.decay must be in [0, 1)".into()));
        }
        if !(self.lr_g >= 0.0 && self.lr_d >= 0.0) {
            return Err(Error::Config("learning rates must be >= 0".into()));
        }
        self.gen.validate()?;
        self.disc.validate()?;
        self.diffusion.validate()
    }
}
