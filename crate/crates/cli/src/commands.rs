use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use fredsr::imaging::{make_lr_hr_pair, read_image, resample_bicubic, resample_bilinear, write_image, Image};
use fredsr::nets::Generator;
use fredsr::objectives::ImageMetrics;
use fredsr::training::{load_generator, sample_patches, Checkpoint, Dataset, Payload, TrainRunConfig, Trainer};
use fredsr::Error;
use log::{info, warn};

use crate::dataset::{dims, load_pairs, sorted_files};
use crate::{Baseline, UsageError};

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

pub fn prepare(input: &Path, out: &Path, scale: usize, crop_multiple: bool) -> Result<()> {
    if scale < 2 {
        return usage(format!("scale must be >= 2, got {scale}"));
    }
    let files = sorted_files(input)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut manifest = Vec::new();
    let mut skipped = 0;
    for path in &files {
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
        let img = match read_image(path) {
            Ok(img) => img,
            Err(e) => {
                warn!("skipping {}: {e}", path.display());
                skipped += 1;
                continue;
            }
        };
        if !crop_multiple && (img.height() % scale != 0 || img.width() % scale != 0) {
            warn!("skipping {name}: {} is not a multiple of {scale} (use --crop-multiple)", dims(&img));
            skipped += 1;
            continue;
        }
        let (lr, hr) = match make_lr_hr_pair(&img, scale) {
            Ok(p) => p,
            Err(e) => {
                warn!("skipping {name}: {e}");
                skipped += 1;
                continue;
            }
        };
        write_image(&hr, &out.join(format!("{name}_hr.png")))?;
        write_image(&lr, &out.join(format!("{name}_lr.png")))?;
        info!("{name}: {} -> {}", dims(&hr), dims(&lr));
        manifest.push(format!("{name} hr={} lr={}", dims(&hr), dims(&lr)));
    }
    if manifest.is_empty() {
        return usage("no images found");
    }
    let mut text = manifest.join("\n");
    text.push_str(&format!("\npairs={} skipped={skipped} scale={scale}\n", manifest.len()));
    fs::write(out.join("manifest.txt"), &text)?;
    print!("{text}");
    Ok(())
}

pub struct TrainArgs {
    pub data: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub resume: Option<PathBuf>,
}

/// Keeps the metric lines of steps before `step`, so a resumed run extends
/// the stream it continues.
fn truncate_metrics(path: &Path, step: u64) -> Result<String> {
    let Ok(text) = fs::read_to_string(path) else {
        return Ok(String::new());
    };
    let mut kept = String::new();
    for line in text.lines() {
        let s = line.strip_prefix("step=").and_then(|r| r.split(' ').next()).and_then(|v| v.parse::<u64>().ok());
        if matches!(s, Some(s) if s < step) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    Ok(kept)
}

pub fn train(args: TrainArgs) -> Result<()> {
    // Everything that can be rejected is checked before any compute.
    let mut trainer_src = None;
    let mut cfg = match (&args.resume, &args.config) {
        (Some(ckpt), cfg_path) => {
            if cfg_path.is_some() {
                warn!("--config ignored: resuming uses the configuration stored in the checkpoint");
            }
            let ck = Checkpoint::load(ckpt).with_context(|| format!("loading {}", ckpt.display()))?;
            let cfg = TrainRunConfig::parse(&ck.config_text)?;
            trainer_src = Some(ck);
            cfg
        }
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            TrainRunConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        (None, None) => TrainRunConfig::default(),
    };
    if let Some(seed) = args.seed {
        if trainer_src.is_some() && seed != cfg.seed {
            return usage(format!("--seed {seed} differs from the checkpoint seed {}", cfg.seed));
        }
        cfg.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    if let Some(data) = &args.data {
        cfg.data_dir = data.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    if cfg.data_dir.is_empty() {
        return usage("no dataset: pass --data or set data.dir");
    }

    let pairs = load_pairs(Path::new(&cfg.data_dir))?;
    if pairs.is_empty() {
        return usage(format!("no image pairs found in {}", cfg.data_dir));
    }
    let dataset = Dataset::new(pairs.into_iter().map(|p| p.pair).collect(), cfg.scale, cfg.patch)?;

    let mut trainer = match trainer_src {
        Some(ck) => {
            let mut t = Trainer::from_checkpoint(&ck)?;
            t.cfg.steps = cfg.steps;
            t.cfg.data_dir = cfg.data_dir.clone();
            t
        }
        None => Trainer::new(cfg.clone())?,
    };
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let metrics_path = args.out.join("metrics.txt");
    let kept = if args.resume.is_some() { truncate_metrics(&metrics_path, trainer.step)? } else { String::new() };
    let mut metrics = BufWriter::new(File::create(&metrics_path)?);
    metrics.write_all(kept.as_bytes())?;

    let every = trainer.cfg.checkpoint_every;
    while trainer.step < cfg.steps {
        let batch = sample_patches(&dataset, trainer.cfg.patch, &mut trainer.rng_patches, trainer.cfg.batch)?;
        let m = match trainer.train_step(&batch) {
            Ok(m) => m,
            Err(e @ Error::NonFinite(_)) => {
                metrics.flush()?;
                let path = args.out.join("abort.fred");
                trainer.to_checkpoint().save(&path)?;
                bail!("training aborted at step {}: {e}; state saved to {}", trainer.step, path.display());
            }
            Err(e) => return Err(e.into()),
        };
        let line = m.line();
        writeln!(metrics, "{line}")?;
        info!("{line}");
        if every > 0 && trainer.step % every == 0 && trainer.step < cfg.steps {
            metrics.flush()?;
            trainer.to_checkpoint().save(&args.out.join(format!("ckpt_{:06}.fred", trainer.step)))?;
        }
    }
    metrics.flush()?;
    let last = args.out.join("last.fred");
    trainer.to_checkpoint().save(&last)?;
    println!("steps={}", trainer.step);
    println!("generator_params={}", trainer.gen.param_count());
    println!("discriminator_params={}", trainer.disc.param_count());
    println!("checkpoint={}", last.display());
    println!("metrics={}", metrics_path.display());
    Ok(())
}

fn interpolate(img: &Image, h: usize, w: usize, baseline: Baseline) -> Result<Image> {
    Ok(match baseline {
        Baseline::Bicubic => resample_bicubic(img, h, w)?,
        Baseline::Bilinear => resample_bilinear(img, h, w)?,
    })
}

fn super_resolve(g: &mut Generator<f32>, lr: &Image, h: usize, w: usize) -> Result<Image> {
    let up = resample_bicubic(lr, h, w)?;
    let sr = g.super_resolve(&up.to_tensor::<f32>())?;
    Ok(Image::from_tensor(&sr, 0)?)
}

fn load_model(path: &Path, scale: Option<usize>) -> Result<(usize, Generator<f32>)> {
    let ck = Checkpoint::load(path).with_context(|| format!("loading {}", path.display()))?;
    let (cfg, g) = load_generator(&ck)?;
    if let Some(s) = scale {
        if s != cfg.scale {
            return usage(format!("requested scale {s} but the checkpoint was trained for scale {}", cfg.scale));
        }
    }
    Ok((cfg.scale, g))
}

pub fn upscale(ckpt: Option<&Path>, baseline: Option<Baseline>, input: &Path, output: &Path, scale: Option<usize>) -> Result<()> {
    let img = read_image(input).with_context(|| format!("reading {}", input.display()))?;
    let out = match (ckpt, baseline) {
        (Some(path), _) => {
            let (s, mut g) = load_model(path, scale)?;
            super_resolve(&mut g, &img, img.height() * s, img.width() * s)?
        }
        (None, Some(b)) => {
            let s = scale.unwrap_or(3);
            if s < 1 {
                return usage("scale must be >= 1");
            }
            interpolate(&img, img.height() * s, img.width() * s, b)?
        }
        (None, None) => return usage("pass --ckpt or --baseline"),
    };
    write_image(&out, output).with_context(|| format!("writing {}", output.display()))?;
    println!("{} -> {} {}", dims(&img), dims(&out), output.display());
    Ok(())
}

fn delta(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        a - b
    }
}

pub fn eval(data: &Path, ckpt: Option<&Path>, baseline: Option<Baseline>, luma: bool, scale: Option<usize>) -> Result<()> {
    let mut model = ckpt.map(|p| load_model(p, scale)).transpose()?;
    let scale = model.as_ref().map(|(s, _)| *s).or(scale).unwrap_or(3);
    let baseline = baseline.or(if model.is_none() { Some(Baseline::Bicubic) } else { None });

    let pairs = load_pairs(data)?;
    let mut model_rows = Vec::new();
    let mut base_rows = Vec::new();
    for p in &pairs {
        let (lr, hr) = (&p.pair.lr, &p.pair.hr);
        if lr.height() * scale != hr.height() || lr.width() * scale != hr.width() {
            warn!("excluding {}: {} is not {}x {}", p.name, dims(hr), scale, dims(lr));
            continue;
        }
        if let Some((_, g)) = model.as_mut() {
            let sr = super_resolve(g, lr, hr.height(), hr.width())?;
            model_rows.push((p.name.clone(), ImageMetrics::compute(&sr, hr, luma)?));
        }
        if let Some(b) = baseline {
            let up = interpolate(lr, hr.height(), hr.width(), b)?;
            base_rows.push((p.name.clone(), ImageMetrics::compute(&up, hr, luma)?));
        }
        info!("evaluated {}", p.name);
    }
    if model_rows.is_empty() && base_rows.is_empty() {
        return usage(format!("no usable image pairs in {}", data.display()));
    }

    let base_name = match baseline {
        Some(Baseline::Bicubic) => "bicubic",
        Some(Baseline::Bilinear) => "bilinear",
        None => "",
    };
    let mut sections = Vec::new();
    if !model_rows.is_empty() {
        sections.push(("model", &model_rows));
    }
    if !base_rows.is_empty() {
        sections.push((base_name, &base_rows));
    }
    for (name, rows) in &sections {
        println!("== {name} ==");
        print!("{}", ImageMetrics::table(rows));
    }
    let mean = |rows: &[(String, ImageMetrics)]| ImageMetrics::mean(&rows.iter().map(|(_, m)| *m).collect::<Vec<_>>());
    for (name, rows) in &sections {
        print!("{}", mean(rows).key_values(name));
    }
    if !model_rows.is_empty() && !base_rows.is_empty() {
        let (m, b) = (mean(&model_rows), mean(&base_rows));
        println!("delta.ssim={}", delta(m.ssim, b.ssim));
        println!("delta.psnr={}", delta(m.psnr, b.psnr));
    }
    Ok(())
}

pub fn inspect(path: &Path) -> Result<()> {
    let ck = Checkpoint::load(path).map_err(|e| anyhow!(e)).with_context(|| format!("loading {}", path.display()))?;
    let step = ck.table.u64_at("state.step", 1)?[0];
    println!("version={}", ck.version);
    println!("step={step}");
    println!("config:");
    print!("{}", ck.config_text);
    println!("tensors:");
    let (mut gen, mut disc) = (0usize, 0usize);
    for e in ck.table.entries() {
        let shape = e.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        println!("  {} {} [{shape}]", e.name, e.dtype());
        let n: usize = e.shape.iter().product();
        if matches!(e.payload, Payload::F32(_)) {
            if e.name.starts_with("gen/") {
                gen += n;
            } else if e.name.starts_with("disc/") {
                disc += n;
            }
        }
    }
    println!("generator_params={gen}");
    println!("discriminator_params={disc}");
    Ok(())
}
