use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::gradcheck;
use crate::spectral::{irfft2d, rfft2d};
use crate::tensor::{batch_norm2d, conv2d, Conv2dOpts, PadMode, RunningStats, Tensor};

fn randn(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn block_cfg(cin: usize, cout: usize, alpha: f64) -> FfcBlockConfig {
    FfcBlockConfig { in_channels: cin, out_channels: cout, global_fraction: alpha, kernel: 3, spectral_hidden: 2 }
}

#[test]
fn single_conv_count() {
    assert_eq!(conv_param_count(3, 3, 3, true), 84);
}

#[test]
fn default_generator_in_budget() {
    let cfg = GeneratorConfig::default();
    let g: Generator<f32> = Generator::new(cfg, 1).unwrap();
    assert_eq!(g.param_count(), cfg.param_count());
    assert!((33_000..=40_000).contains(&g.param_count()), "{}", g.param_count());
}

#[test]
fn alpha_zero_block_matches_plain_conv() {
    let cfg = block_cfg(4, 5, 0.0);
    assert_eq!(cfg.param_count(), conv_param_count(4, 5, 3, false) + 10);
    let mut params = ParamSet::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut block = FfcBlock::new(cfg, "b", &mut params, &mut rng).unwrap();
    assert_eq!(params.count(), cfg.param_count());

    let x = randn(&[2, 4, 7, 6], 4);
    let y = block.forward(&x, &params, Mode::Train).unwrap();
    let k = params.get(params.find("b.to_local").unwrap());
    let plain = conv2d(&x, k, None, Conv2dOpts::same(1, PadMode::Reflect)).unwrap();
    let mut stats = RunningStats::new(5);
    let expect = batch_norm2d(&plain, &Tensor::ones(&[5]), &Tensor::zeros(&[5]), &mut stats, crate::tensor::BnMode::Train)
        .unwrap()
        .relu();
    assert!(max_abs_diff(&y, &expect) < 1e-6);
}

#[test]
fn alpha_one_block_is_pure_spectral() {
    let cfg = block_cfg(4, 4, 1.0);
    let mut params = ParamSet::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut block = FfcBlock::new(cfg, "b", &mut params, &mut rng).unwrap();
    assert!(params.find("b.to_local").is_none() && params.find("b.local_to_global").is_none());
    let x = randn(&[2, 4, 6, 6], 6);
    let y = block.forward(&x, &params, Mode::Train).unwrap();
    assert_eq!(y.shape(), &[2, 4, 6, 6]);
}

#[test]
fn zero_spectral_weights_leave_local_path() {
    let cfg = block_cfg(4, 4, 0.5);
    let mut params = ParamSet::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut block = FfcBlock::new(cfg, "b", &mut params, &mut rng).unwrap();
    for name in ["b.spectral.reduce", "b.spectral.freq", "b.spectral.expand"] {
        let id = params.find(name).unwrap();
        let z = Tensor::zeros(params.get(id).shape());
        params.set(id, z);
    }
    let x = Tensor::full(&[1, 4, 6, 6], 0.7);
    let y = block.forward(&x, &params, Mode::Eval).unwrap();
    let x_l = x.narrow(1, 0, 2).unwrap();
    let l2g = conv2d(&x_l, params.get(params.find("b.local_to_global").unwrap()), None, Conv2dOpts::same(1, PadMode::Reflect))
        .unwrap();
    let mut stats = RunningStats::new(2);
    let expect = batch_norm2d(&l2g, &Tensor::ones(&[2]), &Tensor::zeros(&[2]), &mut stats, crate::tensor::BnMode::Eval)
        .unwrap()
        .relu();
    assert!(max_abs_diff(&y.narrow(1, 2, 2).unwrap(), &expect) < 1e-12);
}

fn identity_kernel(c: usize) -> Tensor<f64> {
    let mut d = vec![0.0; c * c];
    for i in 0..c {
        d[i * c + i] = 1.0;
    }
    Tensor::from_vec(&[c, c, 1, 1], d).unwrap()
}

#[test]
fn spectral_transform_identity_composition() {
    let c = 3;
    let mut params = ParamSet::<f64>::new();
    let sp = SpectralParams {
        reduce: params.add("r", identity_kernel(c)),
        freq: params.add("f", identity_kernel(2 * c)),
        freq_gamma: params.add("g", Tensor::ones(&[2 * c])),
        freq_beta: params.add("b", Tensor::zeros(&[2 * c])),
        expand: params.add("e", identity_kernel(c)),
    };
    let x = randn(&[2, c, 6, 5], 8);
    let mut stats = RunningStats::new(2 * c);
    let y = spectral_transform(&x, &sp, &params, &mut stats, Mode::Train).unwrap();

    let s = rfft2d(&x).unwrap();
    let mut stats2 = RunningStats::new(2 * c);
    let normed = batch_norm2d(&s.tensor, &Tensor::ones(&[2 * c]), &Tensor::zeros(&[2 * c]), &mut stats2, crate::tensor::BnMode::Train)
        .unwrap()
        .relu();
    let expect = irfft2d(&normed, 5).unwrap();
    assert!(max_abs_diff(&y, &expect) < 1e-6);
}

#[test]
fn spectral_conv_scales_single_frequency() {
    // With a per-channel scaling in place of the norm+ReLU, a cosine stays a
    // cosine of the same frequency.
    let (h, w) = (4, 8);
    let x = Tensor::<f64>::from_fn_f64(&[1, 1, h, w], |i| (2.0 * std::f64::consts::PI * 2.0 * (i % w) as f64 / w as f64).cos());
    let s = rfft2d(&x).unwrap();
    let k = Tensor::<f64>::from_f64(&[2, 2, 1, 1], &[3.0, 0.0, 0.0, 3.0]).unwrap();
    let mixed = conv2d(&s.tensor, &k, None, Conv2dOpts::default()).unwrap();
    let spec_in = s.tensor.data();
    let spec_out = mixed.data();
    for (i, (&a, &b)) in spec_in.iter().zip(spec_out).enumerate() {
        assert!((b - 3.0 * a).abs() < 1e-9, "bin {i}");
        let col = i % (w / 2 + 1);
        let row = (i / (w / 2 + 1)) % h;
        if !(row == 0 && col == 2) {
            assert!(b.abs() < 1e-9);
        }
    }
}

#[test]
fn noise_statistics_and_identities() {
    let x = Tensor::<f64>::zeros(&[100_000]);
    let mut ns = NoiseState::new(0.2, 11, 1);
    ns.multiplier = 0.5;
    assert_eq!(inject_noise(&x, &mut ns, false).data(), x.data());
    let y = inject_noise(&x, &mut ns, true);
    let n = y.numel() as f64;
    let mean = y.data().iter().sum::<f64>() / n;
    let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let expect = (0.2f64 * 0.5).powi(2);
    assert!((var / expect - 1.0).abs() < 0.02, "{var} vs {expect}");

    ns.multiplier = 0.0;
    let before = ns.rng.clone();
    assert_eq!(inject_noise(&x, &mut ns, true).data(), x.data());
    assert_eq!(before, ns.rng);
}

#[test]
fn zero_tail_gives_bicubic_back() {
    let cfg = GeneratorConfig { zero_tail: true, ..GeneratorConfig::default() };
    let mut g: Generator<f32> = Generator::new(cfg, 9).unwrap();
    let up = Tensor::<f32>::from_fn_f64(&[1, 3, 12, 15], |i| ((i * 7919) % 101) as f64 / 100.0);
    let r = g.forward(&up, Mode::Train, None).unwrap();
    assert!(r.data().iter().all(|&v| v == 0.0));
    let sr = g.super_resolve(&up).unwrap();
    assert_eq!(sr.data(), up.data());
}

#[test]
fn generator_shape_contract() {
    let cfg = GeneratorConfig { blocks: 2, width: 8, spectral_hidden: 4, ..GeneratorConfig::default() };
    let mut g: Generator<f32> = Generator::new(cfg, 2).unwrap();
    for (h, w) in [(12, 12), (13, 30), (48, 17)] {
        let up = Tensor::<f32>::full(&[2, 3, h, w], 0.5);
        assert_eq!(g.forward(&up, Mode::Eval, None).unwrap().shape(), &[2, 3, h, w]);
    }
}

#[test]
fn generator_forward_is_deterministic() {
    let cfg = GeneratorConfig { blocks: 2, width: 8, spectral_hidden: 4, ..GeneratorConfig::default() };
    let up = Tensor::<f32>::from_fn_f64(&[2, 3, 12, 12], |i| (i % 13) as f64 / 13.0);
    let run = || {
        let mut g: Generator<f32> = Generator::new(cfg, 4).unwrap();
        let mut ns = NoiseState::new(cfg.noise_sigma, 4, 7);
        g.forward(&up, Mode::Train, Some(&mut ns)).unwrap().to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn every_generator_parameter_gets_gradient() {
    let cfg = GeneratorConfig { tail_init_std: 0.1, ..GeneratorConfig::default() };
    let mut g: Generator<f32> = Generator::new(cfg, 5).unwrap();
    g.params.track();
    let up = Tensor::<f32>::from_fn_f64(&[2, 3, 12, 12], |i| ((i * 31) % 17) as f64 / 17.0);
    let target = Tensor::<f32>::from_fn_f64(&[2, 3, 12, 12], |i| ((i * 13) % 7) as f64 / 14.0 - 0.25);
    let r = g.forward(&up, Mode::Train, None).unwrap();
    r.sub(&target).unwrap().square().mean().backward().unwrap();
    for ((name, _), grad) in g.params.iter().zip(g.params.grads()) {
        assert!(grad.iter().any(|&v| v != 0.0), "{name} has no gradient");
    }
}

#[test]
fn discriminator_range_and_batch_independence() {
    let d: Discriminator<f64> = Discriminator::new(DiscriminatorConfig::default(), 3).unwrap();
    assert_eq!(d.param_count(), DiscriminatorConfig::default().param_count());
    let x = randn(&[3, 3, 12, 12], 12);
    let out = d.forward(&x).unwrap();
    assert!(out.data().iter().all(|&v| v > 0.0 && v < 1.0));
    let swapped = Tensor::concat(&[x.narrow(0, 2, 1).unwrap(), x.narrow(0, 0, 2).unwrap()], 0).unwrap();
    let out2 = d.forward(&swapped).unwrap();
    assert_eq!(out2.data()[0], out.data()[2]);
    assert_eq!(&out2.data()[1..], &out.data()[..2]);
}

#[test]
fn ffc_block_gradcheck() {
    for seed in 0..20u64 {
        let cfg = block_cfg(4, 4, 0.5);
        let mut params = ParamSet::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let block = FfcBlock::new(cfg, "b", &mut params, &mut rng).unwrap();
        let x = randn(&[2, 4, 6, 6], 100 + seed);
        let w = randn(&[2, 4, 6, 6], 200 + seed);
        let mut inputs = vec![x];
        inputs.extend(params.tensors().iter().cloned());
        let report = gradcheck::check(
            &inputs,
            |args| {
                let mut p = params.clone();
                p.replace_all(args[1..].to_vec())?;
                let mut b = block.clone();
                b.forward(&args[0], &p, Mode::Train)?.mul(&w)?.sum_axes(&[0, 1, 2, 3], false)
            },
            1e-5,
            Some(24),
            seed,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "seed {seed}: {}", report.max_rel_err);
    }
}

#[test]
fn spectral_transform_gradcheck() {
    for seed in 0..20u64 {
        let mut params = ParamSet::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sp = SpectralParams {
            reduce: params.add_conv_kernel("r", [2, 3, 1, 1], 1.0, &mut rng),
            freq: params.add_conv_kernel("f", [4, 4, 1, 1], 1.0, &mut rng),
            freq_gamma: params.add("g", randn(&[4], seed + 50)),
            freq_beta: params.add("b", randn(&[4], seed + 60)),
            expand: params.add_conv_kernel("e", [3, 2, 1, 1], 1.0, &mut rng),
        };
        let x = randn(&[2, 3, 5, 6], 300 + seed);
        let w = randn(&[2, 3, 5, 6], 400 + seed);
        let mut inputs = vec![x];
        inputs.extend(params.tensors().iter().cloned());
        let report = gradcheck::check(
            &inputs,
            |args| {
                let mut p = params.clone();
                p.replace_all(args[1..].to_vec())?;
                let mut stats = RunningStats::new(4);
                spectral_transform(&args[0], &sp, &p, &mut stats, Mode::Train)?.mul(&w)?.sum_axes(&[0, 1, 2, 3], false)
            },
            1e-5,
            None,
            seed,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "seed {seed}: {}", report.max_rel_err);
    }
}
