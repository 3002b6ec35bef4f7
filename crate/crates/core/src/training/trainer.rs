use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, Payload, TensorTable};
use super::config::TrainRunConfig;
use super::data::Batch;
use super::diffusion::{diffuse_residual, DiffusionState};
use crate::error::{Error, Result};
use crate::nets::{Discriminator, Generator, Mode, NoiseState, ParamSet};
use crate::objectives::{
    adversarial_disc_loss, adversarial_gen_loss, charbonnier, mge_loss, perceptual_loss, ssim, ssim_loss,
    total_generator_loss, LossTerms, RandomConvExtractor,
};
use crate::optimization::{AdamW, CosineRestartSchedule, PolicyAction, PolicyMode, RestartPolicy};
use crate::tensor::{RunningStats, Tensor};

const STREAM_PATCHES: u64 = 1;
const STREAM_DIFFUSION: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// `clamp(ema / initial, 0, 1)`.
pub fn noise_multiplier(ema: f64, initial: f64) -> f64 {
    if initial > 0.0 {
        (ema / initial).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

/// Everything reported for one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub g_loss: f64,
    pub d_loss: f64,
    pub d_acc: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub t: usize,
    pub noise: f64,
    /// Raw terms: adversarial, perceptual, mge, ssim (as similarity), charbonnier.
    pub terms: [f64; 5],
    pub mode: PolicyMode,
}

impl StepMetrics {
    /// One `key=value` line; floats use shortest round-trip formatting.
    pub fn line(&self) -> String {
        let [adv, pl, mge, ssim, charb] = self.terms;
        let mode = match self.mode {
            PolicyMode::Normal => "normal",
            PolicyMode::DiscBoost => "boost",
        };
        format!(
            "step={} g_loss={} d_loss={} d_acc={} lr_g={} lr_d={} T={} noise={} adv={adv} pl={pl} mge={mge} ssim={ssim} charb={charb} mode={mode}",
            self.step, self.g_loss, self.d_loss, self.d_acc, self.lr_g, self.lr_d, self.t, self.noise
        )
    }
}

/// The full adversarial training state.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub cfg: TrainRunConfig,
    pub gen: Generator<f32>,
    pub disc: Discriminator<f32>,
    extractor: RandomConvExtractor<f32>,
    pub opt_g: AdamW<f32>,
    pub opt_d: AdamW<f32>,
    pub sched_g: CosineRestartSchedule,
    pub sched_d: CosineRestartSchedule,
    pub policy: RestartPolicy,
    pub diffusion: DiffusionState,
    pub noise: NoiseState,
    pub rng_patches: ChaCha8Rng,
    pub rng_diffusion: ChaCha8Rng,
    pub step: u64,
    pub signal_ema: Option<f64>,
    pub signal_initial: Option<f64>,
    pub disc_inits: u64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gen_seed(seed: u64) -> u64 {
    seed ^ 0x6e6e_0001
}

fn disc_seed(seed: u64, inits: u64) -> u64 {
    seed ^ 0xd15c_0000u64.wrapping_add(inits)
}

impl Trainer {
    pub fn new(cfg: TrainRunConfig) -> Result<Self> {
        cfg.validate()?;
        let gen = Generator::new(cfg.gen, gen_seed(cfg.seed))?;
        let disc = Discriminator::new(cfg.disc.clone(), disc_seed(cfg.seed, 0))?;
        let schedule = |lr0| CosineRestartSchedule {
            lr0,
            cycle_steps: cfg.cycle_steps.max(1),
            peak_decay: cfg.peak_decay,
            floor_frac: cfg.floor_frac,
        };
        Ok(Self {
            opt_g: AdamW::new(cfg.adam, &gen.params),
            opt_d: AdamW::new(cfg.adam, &disc.params),
            sched_g: schedule(cfg.lr_g),
            sched_d: schedule(cfg.lr_d),
            policy: RestartPolicy::new(cfg.policy),
            diffusion: DiffusionState::new(cfg.diffusion, cfg.ema_decay),
            noise: NoiseState::new(cfg.gen.noise_sigma, cfg.seed, STREAM_NOISE),
            rng_patches: stream(cfg.seed, STREAM_PATCHES),
            rng_diffusion: stream(cfg.seed, STREAM_DIFFUSION),
            extractor: RandomConvExtractor::default(),
            step: 0,
            signal_ema: None,
            signal_initial: None,
            disc_inits: 0,
            gen,
            disc,
            cfg,
        })
    }

    fn diffuse(&mut self, r: &Tensor<f32>) -> Result<Tensor<f32>> {
        if !self.cfg.diffusion.enabled {
            return Ok(r.clone());
        }
        diffuse_residual(r, &self.diffusion, &mut self.rng_diffusion)
    }

    /// One discriminator update on diffused real and (detached) fake
    /// residuals. Returns the loss, the accuracy, and `D(real)`.
    pub fn discriminator_update(&mut self, real_res: &Tensor<f32>, fake_res: &Tensor<f32>, lr: f64) -> Result<(f64, f64, Vec<f64>)> {
        let real_in = self.diffuse(real_res)?;
        let fake_in = self.diffuse(&fake_res.detach())?;
        self.disc.params.track();
        let d_real = self.disc.forward(&real_in)?;
        let d_fake = self.disc.forward(&fake_in)?;
        let loss = adversarial_disc_loss(&d_real, &d_fake)?;
        let value = loss.item() as f64;
        if !value.is_finite() {
            self.disc.params.untrack();
            return Err(Error::NonFinite(format!("discriminator loss = {value} at step {}", self.step)));
        }
        loss.backward()?;
        let grads = self.disc.params.grads();
        self.disc.params.untrack();
        self.opt_d.step(&mut self.disc.params, &grads, lr)?;

        let n = d_real.numel() + d_fake.numel();
        let right = d_real.data().iter().filter(|&&v| v > 0.5).count() + d_fake.data().iter().filter(|&&v| v < 0.5).count();
        let real: Vec<f64> = d_real.data().iter().map(|&v| v as f64).collect();
        Ok((value, right as f64 / n as f64, real))
    }

    /// One full adversarial step on a batch.
    pub fn train_step(&mut self, batch: &Batch) -> Result<StepMetrics> {
        let step = self.step;
        let lr_g = self.sched_g.lr_at(step);
        let lr_d = self.sched_d.lr_at(step) * self.policy.disc_lr_mult;
        let adv_scale = self.policy.adv_mult;

        self.gen.params.track();
        let fake_res = self.gen.forward(&batch.up, Mode::Train, Some(&mut self.noise))?;
        let real_res = batch.hr.sub(&batch.up)?;
        if let Some(v) = fake_res.data().iter().find(|v| !v.is_finite()) {
            self.gen.params.untrack();
            return Err(Error::NonFinite(format!("generator output ({v}) at step {step}")));
        }

        let (d_loss, d_acc, d_real) = self.discriminator_update(&real_res, &fake_res, lr_d)?;

        let sr = batch.up.add(&fake_res)?.clamp(0.0, 1.0);
        let fake_in = self.diffuse(&fake_res)?;
        let d_fake = self.disc.forward(&fake_in)?;
        let terms = LossTerms {
            adversarial: adversarial_gen_loss(&d_fake),
            perceptual: perceptual_loss(&sr, &batch.hr, &self.extractor)?,
            mge: mge_loss(&sr, &batch.hr)?,
            ssim: ssim_loss(&sr, &batch.hr, &self.cfg.ssim)?,
            charbonnier: charbonnier(&sr, &batch.hr, self.cfg.loss.charbonnier_eps)?,
        };
        let raw = terms.values();
        let names = ["adversarial", "perceptual", "mge", "ssim", "charbonnier"];
        if let Some(i) = raw.iter().position(|v| !v.is_finite()) {
            self.gen.params.untrack();
            return Err(Error::NonFinite(format!("generator loss term {} = {} at step {step}", names[i], raw[i])));
        }
        let total = total_generator_loss(&terms, &self.cfg.loss, adv_scale)?;
        let g_loss = total.item() as f64;
        total.backward()?;
        let grads = self.gen.params.grads();
        self.gen.params.untrack();
        self.opt_g.step(&mut self.gen.params, &grads, lr_g)?;

        if self.cfg.diffusion.enabled && (step + 1) % self.cfg.diffusion.adapt_every == 0 {
            self.diffusion.adapt(&d_real);
        }
        if let PolicyAction::EnterBoost { reinit: true } = self.policy.update(step, d_acc) {
            self.disc_inits += 1;
            self.disc = Discriminator::new(self.cfg.disc.clone(), disc_seed(self.cfg.seed, self.disc_inits))?;
            self.opt_d.reset();
        }
        self.update_noise(&raw, adv_scale);
        self.step += 1;

        Ok(StepMetrics {
            step,
            g_loss,
            d_loss,
            d_acc,
            lr_g,
            lr_d,
            t: self.diffusion.t,
            noise: self.noise.multiplier,
            terms: [raw[0], raw[1], raw[2], -raw[3], raw[4]],
            mode: self.policy.mode,
        })
    }

    /// Tracks a non-negative version of the generator objective (SSIM enters
    /// as `1 - SSIM`) and sets the noise multiplier from its decay.
    fn update_noise(&mut self, raw: &[f64; 5], adv_scale: f64) {
        let w = &self.cfg.loss;
        let signal = w.adversarial * adv_scale * raw[0]
            + w.perceptual * raw[1]
            + w.mge * raw[2]
            + w.ssim * (1.0 + raw[3])
            + w.charbonnier * raw[4];
        let d = self.cfg.ema_decay;
        let ema = match self.signal_ema {
            Some(e) => d * e + (1.0 - d) * signal,
            None => signal,
        };
        self.signal_ema = Some(ema);
        if self.signal_initial.is_none() && self.step + 1 >= self.cfg.noise_warmup {
            self.signal_initial = Some(ema);
        }
        if let Some(init) = self.signal_initial {
            self.noise.multiplier = noise_multiplier(ema, init);
        }
    }

    /// Mean SSIM of the generator output and of the bicubic baseline against
    /// the HR patches, in eval mode.
    pub fn evaluate(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let sr = self.gen.super_resolve(&batch.up)?;
        let hr = batch.hr.cast::<f64>();
        let s_sr = ssim(&sr.cast::<f64>(), &hr, &crate::objectives::SsimParams::default())?.item();
        let s_up = ssim(&batch.up.cast::<f64>(), &hr, &crate::objectives::SsimParams::default())?.item();
        Ok((s_sr, s_up))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut t = TensorTable::new();
        save_params(&mut t, "gen", &self.gen.params);
        for (i, b) in self.gen.blocks.iter().enumerate() {
            for (kind, stats) in [("local", &b.local_stats), ("global", &b.global_stats), ("freq", &b.freq_stats)] {
                t.push_f32(format!("gen.bn/block{i}.{kind}.mean"), &[stats.mean.len()], stats.mean.clone());
                t.push_f32(format!("gen.bn/block{i}.{kind}.var"), &[stats.var.len()], stats.var.clone());
            }
        }
        save_params(&mut t, "disc", &self.disc.params);
        save_adam(&mut t, "opt_g", &self.opt_g, &self.gen.params);
        save_adam(&mut t, "opt_d", &self.opt_d, &self.disc.params);
        t.push_u64s("state.step", vec![self.step]);
        t.push_u64s("state.disc_inits", vec![self.disc_inits]);
        let p = &self.policy;
        let mode = match p.mode {
            PolicyMode::Normal => 0,
            PolicyMode::DiscBoost => 1,
        };
        t.push_u64s("policy.mode", vec![mode]);
        t.push_u64s("policy.last_trigger", p.last_trigger.into_iter().collect());
        t.push_f64s("policy.window", p.window.iter().copied().collect());
        t.push_f64s("policy.multipliers", vec![p.disc_lr_mult, p.adv_mult]);
        t.push_u64s("diffusion.t", vec![self.diffusion.t as u64]);
        t.push_f64s("diffusion.r_d", vec![self.diffusion.r_d]);
        t.push_f64s("noise.multiplier", vec![self.noise.multiplier]);
        t.push_f64s("noise.signal_ema", self.signal_ema.into_iter().collect());
        t.push_f64s("noise.signal_initial", self.signal_initial.into_iter().collect());
        t.push_rng("rng.noise", &self.noise.rng);
        t.push_rng("rng.patches", &self.rng_patches);
        t.push_rng("rng.diffusion", &self.rng_diffusion);
        Checkpoint::new(self.cfg.to_text(), t)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let cfg = TrainRunConfig::parse(&ckpt.config_text).map_err(|e| Error::Checkpoint {
            section: "config".into(),
            message: e.to_string(),
        })?;
        let t = &ckpt.table;
        let mut tr = Trainer::new(cfg)?;
        tr.disc_inits = t.u64_at("state.disc_inits", 1)?[0];
        tr.disc = Discriminator::new(tr.cfg.disc.clone(), disc_seed(tr.cfg.seed, tr.disc_inits))?;
        tr.gen = load_generator_from(&tr.cfg, t)?;
        load_params(t, "disc", &mut tr.disc.params)?;
        load_adam(t, "opt_g", &mut tr.opt_g, &tr.gen.params)?;
        load_adam(t, "opt_d", &mut tr.opt_d, &tr.disc.params)?;
        tr.step = t.u64_at("state.step", 1)?[0];
        let p = &mut tr.policy;
        p.mode = match t.u64_at("policy.mode", 1)?[0] {
            0 => PolicyMode::Normal,
            _ => PolicyMode::DiscBoost,
        };
        p.last_trigger = t.u64s("policy.last_trigger")?.first().copied();
        p.window = t.f64s("policy.window")?.into_iter().collect();
        let m = t.f64_at("policy.multipliers", 2)?;
        (p.disc_lr_mult, p.adv_mult) = (m[0], m[1]);
        tr.diffusion.t = t.u64_at("diffusion.t", 1)?[0] as usize;
        tr.diffusion.r_d = t.f64_at("diffusion.r_d", 1)?[0];
        tr.noise.multiplier = t.f64_at("noise.multiplier", 1)?[0];
        tr.signal_ema = t.f64s("noise.signal_ema")?.first().copied();
        tr.signal_initial = t.f64s("noise.signal_initial")?.first().copied();
        tr.noise.rng = t.rng("rng.noise")?;
        tr.rng_patches = t.rng("rng.patches")?;
        tr.rng_diffusion = t.rng("rng.diffusion")?;
        Ok(tr)
    }
}

/// Rebuilds only the generator (weights and norm statistics) from a checkpoint.
pub fn load_generator(ckpt: &Checkpoint) -> Result<(TrainRunConfig, Generator<f32>)> {
    let cfg = TrainRunConfig::parse(&ckpt.config_text).map_err(|e| Error::Checkpoint {
        section: "config".into(),
        message: e.to_string(),
    })?;
    let g = load_generator_from(&cfg, &ckpt.table)?;
    Ok((cfg, g))
}

fn load_generator_from(cfg: &TrainRunConfig, t: &TensorTable) -> Result<Generator<f32>> {
    let mut g = Generator::new(cfg.gen, gen_seed(cfg.seed))?;
    load_params(t, "gen", &mut g.params)?;
    for (i, b) in g.blocks.iter_mut().enumerate() {
        for (kind, stats) in [("local", &mut b.local_stats), ("global", &mut b.global_stats), ("freq", &mut b.freq_stats)] {
            load_stats(t, &format!("gen.bn/block{i}.{kind}"), stats)?;
        }
    }
    Ok(g)
}

fn load_stats(t: &TensorTable, prefix: &str, stats: &mut RunningStats<f32>) -> Result<()> {
    let c = stats.mean.len();
    stats.mean = t.f32s(&format!("{prefix}.mean"), &[c])?;
    stats.var = t.f32s(&format!("{prefix}.var"), &[c])?;
    Ok(())
}

fn save_params(t: &mut TensorTable, prefix: &str, p: &ParamSet<f32>) {
    for (name, tensor) in p.iter() {
        t.push(format!("{prefix}/{name}"), tensor.shape(), Payload::F32(tensor.to_vec()));
    }
}

fn load_params(t: &TensorTable, prefix: &str, p: &mut ParamSet<f32>) -> Result<()> {
    for i in 0..p.len() {
        let name = format!("{prefix}/{}", p.names()[i]);
        let shape = p.tensors()[i].shape().to_vec();
        let data = t.f32s(&name, &shape)?;
        p.set_values(i, data)?;
    }
    Ok(())
}

fn save_adam(t: &mut TensorTable, prefix: &str, opt: &AdamW<f32>, p: &ParamSet<f32>) {
    t.push_u64s(format!("{prefix}.t"), vec![opt.t]);
    for (i, (name, tensor)) in p.iter().enumerate() {
        t.push_f32(format!("{prefix}.m/{name}"), tensor.shape(), opt.m[i].clone());
        t.push_f32(format!("{prefix}.v/{name}"), tensor.shape(), opt.v[i].clone());
    }
}

fn load_adam(t: &TensorTable, prefix: &str, opt: &mut AdamW<f32>, p: &ParamSet<f32>) -> Result<()> {
    opt.t = t.u64_at(&format!("{prefix}.t"), 1)?[0];
    for (i, (name, tensor)) in p.iter().enumerate() {
        opt.m[i] = t.f32s(&format!("{prefix}.m/{name}"), tensor.shape())?;
        opt.v[i] = t.f32s(&format!("{prefix}.v/{name}"), tensor.shape())?;
    }
    Ok(())
}
