use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use tta_core::adaptation::{FilterParams, TeacherEnsemble};
use tta_core::corruption::{depth_proxy, synthesize_fog, synthesize_fog_with_depth, synthesize_low_light};
use tta_core::detection::Detection;
use tta_core::harness::{
    compute_metrics, load_dataset, mix_train, run_sequence_from, synth_dataset, synth_training_set, write_dataset,
    Dataset, Mode, TrainConfig,
};
use tta_core::io::{
    load_checkpoint, load_metrics, load_model, read_detections, save_checkpoint, save_metrics, save_model,
    write_detections, write_text_atomic, MetricsRecord,
};
use tta_core::{DefogParams, FogParams, ImageRgb, LowLightParams, PixelFilterParams, RunMetrics};

use crate::config::{parse_schedule, FileConfig, RunConfig};
use crate::{AdaptArgs, Cli, Command, CorruptArgs, DatasetKind, EvalArgs, FilterArgs, ReportArgs, SynthArgs, TrainArgs, UsageError};

/// Seed of `synth` when none is configured.
const DEFAULT_SEED: u64 = 2024;

pub fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let mut cfg = RunConfig::from_file(file)?;
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let out = Output { dir: cli.output_dir };
    match cli.command {
        Command::Filter(args) => filter(&out, args),
        Command::Corrupt(args) => corrupt(&out, args),
        Command::Synth(args) => synth(&out, cfg, args),
        Command::Train(args) => train(&out, cfg, args),
        Command::Adapt(args) => adapt(&out, cfg, args),
        Command::Eval(args) => eval(&out, cfg, args),
        Command::Report(args) => report(&out, args),
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    /// Path of an output file; creates the output directory on first use.
    fn file(&self, name: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)
            .with_context(|| format!("cannot create output directory {}", self.dir.display()))?;
        Ok(self.dir.join(name))
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn filter(out: &Output, args: FilterArgs) -> Result<()> {
    let params = FilterParams {
        defog: DefogParams {
            w: args.defog_w,
            alpha_frac: args.alpha_frac,
            window: args.window,
            t_floor: args.t_floor,
        },
        pixel: PixelFilterParams {
            gamma: args.gamma,
            contrast: args.contrast,
            exposure: args.exposure,
        },
    };
    params.defog.validate()?;
    params.pixel.validate()?;
    let img = ImageRgb::load(&args.input)?;
    let filtered = params.apply(&img)?;
    let path = out.file(&args.output)?;
    filtered.save(&path)?;
    println!(
        "defog_w={} alpha_frac={} window={} t_floor={} gamma={} contrast={} exposure={} -> {}",
        params.defog.w,
        params.defog.alpha_frac,
        params.defog.window,
        params.defog.t_floor,
        params.pixel.gamma,
        params.pixel.contrast,
        params.pixel.exposure,
        path.display()
    );
    Ok(())
}

fn corrupt(out: &Output, args: CorruptArgs) -> Result<()> {
    let img = ImageRgb::load(&args.input)?;
    let (corrupted, label) = if let Some(level) = args.fog {
        let params = FogParams::new(level)?;
        (synthesize_fog(&img, &params)?, format!("fog level {level} (beta {})", params.beta()))
    } else if let Some(beta) = args.beta {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(usage(format!("invalid `beta`: must be >= 0, got {beta}")));
        }
        if !(args.airlight > 0.0 && args.airlight <= 1.0) {
            return Err(usage(format!("invalid `airlight`: must be in (0, 1], got {}", args.airlight)));
        }
        let depth = depth_proxy(img.width(), img.height());
        (
            synthesize_fog_with_depth(&img, &depth, beta, args.airlight)?,
            format!("fog beta {beta} airlight {}", args.airlight),
        )
    } else if let Some(eta) = args.lowlight {
        (synthesize_low_light(&img, &LowLightParams::new(eta)?)?, format!("low light eta {eta}"))
    } else {
        return Err(usage("one of --fog, --beta or --lowlight is required"));
    };
    let path = out.file(&args.output)?;
    corrupted.save(&path)?;
    println!("{label} -> {}", path.display());
    Ok(())
}

fn synth(out: &Output, mut cfg: RunConfig, args: SynthArgs) -> Result<()> {
    let s = &mut cfg.synth;
    s.seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    s.width = args.width.unwrap_or(s.width);
    s.height = args.height.unwrap_or(s.height);
    s.num_classes = args.num_classes.unwrap_or(s.num_classes);
    s.grid_size = args.grid_size.unwrap_or(s.grid_size);
    s.frames_per_segment = args.frames_per_segment.unwrap_or(s.frames_per_segment);
    if let Some(schedule) = &args.schedule {
        s.schedule = parse_schedule("schedule", schedule)?;
    }
    cfg.train_frames = args.train_frames.unwrap_or(cfg.train_frames);
    cfg.validate()?;
    let s = &cfg.synth;
    let dataset = match args.kind {
        DatasetKind::Sequence => synth_dataset(s)?,
        DatasetKind::Train => {
            synth_training_set(s.seed, s.width, s.height, s.num_classes, s.grid_size, cfg.train_frames)?
        }
    };
    let manifest = write_dataset(&out.file(Path::new(""))?, &dataset)?;
    println!(
        "{} dataset, seed {}, {} frames in {} segment(s) -> {}",
        dataset.kind,
        dataset.seed,
        dataset.frames().count(),
        dataset.segments.len(),
        manifest.display()
    );
    Ok(())
}

fn dataset_path(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.dataset.clone())
        .ok_or_else(|| usage("a dataset manifest is required (--dataset or `dataset` in the config)"))
}

fn parse_mode(flag: Option<String>, cfg: &RunConfig) -> Result<Mode> {
    match flag {
        Some(m) => m.parse().map_err(|e: tta_core::Error| usage(e.to_string())),
        None => Ok(cfg.mode),
    }
}

fn train(out: &Output, mut cfg: RunConfig, args: TrainArgs) -> Result<()> {
    cfg.epochs = args.epochs.unwrap_or(cfg.epochs);
    cfg.train_lr = args.lr.unwrap_or(cfg.train_lr);
    cfg.policy = args.policy.unwrap_or(cfg.policy);
    let dataset_path = dataset_path(args.dataset, &cfg)?;
    cfg.validate()?;
    let dataset = load_dataset(&dataset_path)?;
    let frames: Vec<_> = dataset
        .segments
        .iter()
        .filter(|s| s.tag.is_clean())
        .flat_map(|s| s.frames.iter().cloned())
        .collect();
    if frames.is_empty() {
        bail!("{} has no clean frames to train on", dataset_path.display());
    }
    let seed = cfg.seed.unwrap_or(dataset.seed);
    let model = mix_train(
        &frames,
        &TrainConfig {
            grid_size: dataset.grid_size,
            num_classes: dataset.num_classes,
            epochs: cfg.epochs,
            lr: cfg.train_lr,
            policy: cfg.policy.mix_policy(seed),
        },
    )?;
    let path = out.file(&args.output)?;
    save_model(&path, &model)?;
    println!(
        "{} policy, {} frames, {} epochs, seed {seed} -> {}",
        cfg.policy.name(),
        frames.len(),
        cfg.epochs,
        path.display()
    );
    Ok(())
}

fn metrics_line(m: &RunMetrics) -> String {
    format!(
        "map {:.2} source {:.2} target {:.2} loopback {:.2} drop {:.2} overall {:.2}",
        m.map, m.map_source, m.map_target, m.map_loopback, m.map_drop, m.map_overall
    )
}

fn check_classes(dataset: &Dataset, num_classes: usize) -> Result<()> {
    if dataset.num_classes != num_classes {
        bail!("dataset has {} classes, the model {num_classes}", dataset.num_classes);
    }
    Ok(())
}

fn adapt(out: &Output, mut cfg: RunConfig, args: AdaptArgs) -> Result<()> {
    cfg.mode = parse_mode(args.mode, &cfg)?;
    let dataset_path = dataset_path(args.dataset, &cfg)?;
    cfg.validate()?;
    let ensemble = match (&args.checkpoint, args.model.or_else(|| cfg.model.clone())) {
        (Some(ckpt), _) => load_checkpoint(ckpt)?,
        (None, Some(model)) => TeacherEnsemble::from_source(&load_model(&model)?, cfg.runner.momentum)?,
        (None, None) => return Err(usage("a source model is required (--model, --checkpoint or `model` in the config)")),
    };
    let dataset = load_dataset(&dataset_path)?;
    check_classes(&dataset, ensemble.student().num_classes)?;
    let sequence = dataset.to_sequence()?;
    let run = run_sequence_from(ensemble, &sequence, cfg.mode, &cfg.runner)?;

    let mode = cfg.mode.name();
    save_detections(out, &format!("{mode}.detections.txt"), &run.frame_ids, &run.detections)?;
    let ckpt = out.file(Path::new(&format!("{mode}.checkpoint.txt")))?;
    save_checkpoint(&ckpt, &run.ensemble)?;
    let metrics = out.file(Path::new(&format!("{mode}.metrics.json")))?;
    save_metrics(
        &metrics,
        &MetricsRecord {
            mode: cfg.mode,
            seed: cfg.seed.unwrap_or(dataset.seed),
            metrics: run.metrics,
        },
    )?;
    println!("{mode}: {} -> {}", metrics_line(&run.metrics), metrics.display());
    Ok(())
}

fn save_detections(out: &Output, name: &str, ids: &[usize], dets: &[Vec<Detection>]) -> Result<()> {
    write_detections(&out.file(Path::new(name))?, ids, dets)?;
    Ok(())
}

fn eval(out: &Output, mut cfg: RunConfig, args: EvalArgs) -> Result<()> {
    cfg.mode = parse_mode(args.mode, &cfg)?;
    let dataset_path = dataset_path(args.dataset, &cfg)?;
    cfg.validate()?;
    let dataset = load_dataset(&dataset_path)?;
    let sequence = dataset.to_sequence()?;
    let mut by_frame = read_detections(&args.detections)?;
    let known: std::collections::BTreeSet<usize> = sequence.frames().map(|f| f.id).collect();
    if let Some(id) = by_frame.keys().find(|id| !known.contains(id)) {
        bail!("{}: unknown frame id {id}", args.detections.display());
    }
    if let Some(d) = by_frame.values().flatten().find(|d| d.class_id >= dataset.num_classes) {
        bail!("{}: class {} outside 0..{}", args.detections.display(), d.class_id, dataset.num_classes);
    }
    let dets: Vec<Vec<Detection>> = sequence.frames().map(|f| by_frame.remove(&f.id).unwrap_or_default()).collect();
    let metrics = compute_metrics(&dets, &sequence, dataset.num_classes, &cfg.runner.iou_thresholds)?;
    let path = out.file(&args.output)?;
    save_metrics(
        &path,
        &MetricsRecord {
            mode: cfg.mode,
            seed: cfg.seed.unwrap_or(dataset.seed),
            metrics,
        },
    )?;
    println!("{}: {} -> {}", cfg.mode, metrics_line(&metrics), path.display());
    Ok(())
}

const COLUMNS: [&str; 6] = ["mAP", "source", "target", "loopback", "drop", "overall"];

fn columns(m: &RunMetrics) -> [f64; 6] {
    [m.map, m.map_source, m.map_target, m.map_loopback, m.map_drop, m.map_overall]
}

/// Aligned table, one row per `(label, seed, values)`.
fn render_table(rows: &[(String, String, [f64; 6])]) -> String {
    let mode_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max("mode".len());
    let seed_w = rows.iter().map(|r| r.1.len()).max().unwrap_or(0).max("seed".len());
    let mut out = String::new();
    let _ = write!(out, "{:<mode_w$}  {:>seed_w$}", "mode", "seed");
    for c in COLUMNS {
        let _ = write!(out, "  {c:>8}");
    }
    out.push('\n');
    for (mode, seed, values) in rows {
        let _ = write!(out, "{mode:<mode_w$}  {seed:>seed_w$}");
        for v in values {
            let _ = write!(out, "  {v:>8.2}");
        }
        out.push('\n');
    }
    out
}

fn report(out: &Output, args: ReportArgs) -> Result<()> {
    let records = args
        .metrics
        .iter()
        .map(|p| load_metrics(p))
        .collect::<tta_core::Result<Vec<_>>>()?;
    let rows: Vec<(String, String, [f64; 6])> = if args.average {
        let mut groups: BTreeMap<usize, (Mode, Vec<&MetricsRecord>)> = BTreeMap::new();
        for r in &records {
            let key = Mode::ALL.iter().position(|m| *m == r.mode).unwrap_or(usize::MAX);
            groups.entry(key).or_insert((r.mode, Vec::new())).1.push(r);
        }
        groups
            .into_values()
            .map(|(mode, rs)| {
                let mut mean = [0.0; 6];
                for r in &rs {
                    mean.iter_mut().zip(columns(&r.metrics)).for_each(|(a, v)| *a += v / rs.len() as f64);
                }
                (mode.to_string(), format!("n={}", rs.len()), mean)
            })
            .collect()
    } else {
        records
            .iter()
            .map(|r| (r.mode.to_string(), r.seed.to_string(), columns(&r.metrics)))
            .collect()
    };
    let table = render_table(&rows);
    print!("{table}");
    if let Some(name) = &args.output {
        write_text_atomic(&out.file(name)?, &table)?;
    }
    Ok(())
}
