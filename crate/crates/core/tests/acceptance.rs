//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tta_core::adaptation::{ema_update, search_filter_params, FilterParams, FilterSearchConfig, TeacherEnsemble};
use tta_core::corruption::{depth_proxy, synthesize_fog_with_depth, MixPolicy};
use tta_core::defog::{defog, recover_scene, DefogParams, TransmissionMap};
use tta_core::detection::{
    average_precision, default_iou_thresholds, detect, iou, loss, nms, sgd_step, BBox, Detection, DetectorModel,
    GroundTruthBox, GroundTruthFrame,
};
use tta_core::harness::{
    compute_metrics, load_dataset, mix_train, run_benchmark, run_sequence, synth_dataset, synth_training_set,
    write_dataset, BenchmarkConfig, Mode, RunMetrics, RunnerConfig, SynthConfig, TrainConfig,
};
use tta_core::image::{apply_contrast, apply_exposure, apply_gamma, psnr, ImageRgb};
use tta_core::io::{
    load_model, read_detections, save_checkpoint, save_metrics, save_model, write_detections, MetricsRecord,
};
use tta_core::vote_pseudo_labels;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn benchmark_config() -> BenchmarkConfig {
    BenchmarkConfig::default()
}

/// Clean-only and mix-trained source models of the pinned benchmark.
fn sources() -> &'static (DetectorModel, DetectorModel) {
    static SOURCES: OnceLock<(DetectorModel, DetectorModel)> = OnceLock::new();
    SOURCES.get_or_init(|| benchmark_config().train_sources().unwrap())
}

fn drop_arithmetic() -> Outcome {
    let rows = [(41.0, 33.7, 7.3), (38.1, 34.3, 3.8), (42.3, 36.8, 5.5), (42.5, 38.3, 4.2)];
    let mut bad = Vec::new();
    for (source, target, expected) in rows {
        let m = RunMetrics::from_columns(40.0, source, target, 40.0, 40.0).unwrap();
        if m.map_drop != expected {
            bad.push(format!("({source}, {target}) gave {}", m.map_drop));
        }
    }
    Outcome::new(
        bad.is_empty(),
        format!("{} / {} rows exact {}", rows.len() - bad.len(), rows.len(), bad.join(", ")),
    )
}

fn identity_corpus() -> Vec<ImageRgb> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut corpus = Vec::new();
    for (w, h) in [(1, 1), (3, 7), (16, 16), (31, 17), (64, 64), (40, 24), (8, 50), (20, 20)] {
        corpus.push(ImageRgb::from_fn(w, h, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap());
    }
    for (w, h) in [(32, 32), (17, 9), (64, 48), (5, 30)] {
        corpus.push(
            ImageRgb::from_fn(w, h, |x, y| {
                let u = x as f64 / (w - 1).max(1) as f64;
                let v = y as f64 / (h - 1).max(1) as f64;
                [u, v, 0.5 * (u + v)]
            })
            .unwrap(),
        );
    }
    for c in [[0.0; 3], [1.0; 3], [0.5; 3], [0.2, 0.6, 0.9]] {
        corpus.push(ImageRgb::filled(12, 12, c).unwrap());
    }
    let seq = synth_dataset(&SynthConfig {
        seed: 5,
        frames_per_segment: 2,
        ..SynthConfig::default()
    })
    .unwrap()
    .to_sequence()
    .unwrap();
    corpus.extend(seq.frames().map(|f| f.image.clone()));
    corpus
}

fn bits(img: &ImageRgb) -> Vec<u64> {
    img.data().iter().map(|v| v.to_bits()).collect()
}

fn filter_identity() -> Outcome {
    let corpus = identity_corpus();
    let mut failures = Vec::new();
    for (i, img) in corpus.iter().enumerate() {
        let expected = bits(img);
        let outputs = [
            ("w=0", defog(img, &DefogParams::with_w(0.0)).unwrap()),
            ("G=1", apply_gamma(img, 1.0).unwrap()),
            ("C=0", apply_contrast(img, 0.0).unwrap()),
            ("E=0", apply_exposure(img, 0.0).unwrap()),
            ("chain", FilterParams::IDENTITY.apply(img).unwrap()),
        ];
        for (name, out) in outputs {
            if bits(&out) != expected {
                failures.push(format!("image {i} {name}"));
            }
        }
    }
    let gray = ImageRgb::filled(9, 9, [0.5; 3]).unwrap();
    for c in [0.0, 0.5, 1.0] {
        if bits(&apply_contrast(&gray, c).unwrap()) != bits(&gray) {
            failures.push(format!("mid-gray C={c}"));
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{} images x 5 identity filters, mid-gray C in {{0, 0.5, 1}}; {} mismatches {}",
            corpus.len(),
            failures.len(),
            failures.join(", ")
        ),
    )
}

fn fog_defog_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_err: f64 = 0.0;
    for t in [0.2, 0.3, 0.45, 0.6, 0.8, 1.0] {
        let a = [rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0), rng.gen_range(0.5..1.0)];
        let clean = ImageRgb::from_fn(24, 24, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        let foggy = clean.map_pixels(|_, p| [0, 1, 2].map(|c| p[c] * t + a[c] * (1.0 - t)));
        let back = recover_scene(&foggy, a, &TransmissionMap::constant(24, 24, t), 0.1).unwrap();
        for (x, y) in back.data().iter().zip(clean.data()) {
            max_err = max_err.max((x - y).abs());
        }
    }
    let inverts = max_err < 1e-5;

    let cfg = benchmark_config();
    let seq = cfg.sequence().unwrap();
    let scorer = &sources().1;
    let search = FilterSearchConfig {
        objective: cfg.runner.search.objective,
        min_gain: cfg.runner.search.min_gain,
        evals_per_axis: cfg.runner.search.evals_per_axis,
        ..FilterSearchConfig::defog_only()
    };
    let clean_frames: Vec<_> = seq
        .segments()
        .iter()
        .filter(|s| s.tag.is_clean())
        .flat_map(|s| &s.frames)
        .collect();
    let mut per_beta = Vec::new();
    let mut all_improved = true;
    let mut best_w_improved = 0;
    let mut total = 0;
    for beta in [0.05, 0.10, 0.14] {
        let mut improved = 0;
        for f in &clean_frames {
            let depth = depth_proxy(f.image.width(), f.image.height());
            let foggy = synthesize_fog_with_depth(&f.image, &depth, beta, 0.5).unwrap().quantized();
            let before = psnr(&foggy, &f.image).unwrap();
            let params = search_filter_params(&foggy, scorer, &search).unwrap();
            let after = psnr(&params.apply(&foggy).unwrap(), &f.image).unwrap();
            if after > before {
                improved += 1;
            }
            let best = (1..=20)
                .map(|i| psnr(&defog(&foggy, &DefogParams::with_w(i as f64 / 20.0)).unwrap(), &f.image).unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            if best > before {
                best_w_improved += 1;
            }
            total += 1;
        }
        all_improved &= improved == clean_frames.len();
        per_beta.push(format!("beta {beta}: {improved}/{}", clean_frames.len()));
    }
    Outcome::new(
        inverts && all_improved,
        format!(
            "constant-t inversion max err {max_err:.1e}; searched w raises PSNR on {}; best grid w on {best_w_improved}/{total}",
            per_beta.join(", ")
        ),
    )
}

fn random_box(rng: &mut ChaCha8Rng, span: u32) -> BBox {
    let x1 = f64::from(rng.gen_range(0..span));
    let y1 = f64::from(rng.gen_range(0..span));
    let w = f64::from(rng.gen_range(1..=span));
    let h = f64::from(rng.gen_range(1..=span));
    BBox::new(x1, y1, x1 + w, y1 + h).unwrap()
}

/// AP from its definition: precision and recall at every score cutoff, with
/// each cutoff's matching recomputed from scratch, then the interpolated
/// precision at each recall level taken as a direct maximum.
fn ap_oracle(dets: &[Vec<Detection>], gts: &[GroundTruthFrame], class: usize, thr: f64) -> Option<f64> {
    let num_gt: usize = gts.iter().map(|g| g.count_class(class)).sum();
    if num_gt == 0 {
        return None;
    }
    let mut all: Vec<(usize, usize, Detection)> = Vec::new();
    for (f, ds) in dets.iter().enumerate() {
        for (i, d) in ds.iter().enumerate() {
            if d.class_id == class {
                all.push((f, i, *d));
            }
        }
    }
    all.sort_by(|a, b| {
        let key = |d: &Detection| [d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2];
        b.2.score
            .total_cmp(&a.2.score)
            .then(a.0.cmp(&b.0))
            .then_with(|| key(&a.2).partial_cmp(&key(&b.2)).unwrap())
            .then(a.1.cmp(&b.1))
    });
    let mut points = Vec::new();
    let mut cutoffs: Vec<f64> = all.iter().map(|x| x.2.score).collect();
    cutoffs.dedup();
    for s in cutoffs {
        let kept: Vec<_> = all.iter().filter(|x| x.2.score >= s).collect();
        let mut used: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.boxes.len()]).collect();
        let mut tp = 0;
        for (f, _, d) in kept.iter().copied() {
            let cand = gts[*f]
                .boxes
                .iter()
                .enumerate()
                .filter(|(g, b)| b.class_id == class && !used[*f][*g] && iou(&d.bbox, &b.bbox) >= thr)
                .fold(None, |best: Option<(usize, f64)>, (g, b)| {
                    let v = iou(&d.bbox, &b.bbox);
                    match best {
                        Some((_, bv)) if bv >= v => best,
                        _ => Some((g, v)),
                    }
                });
            if let Some((g, _)) = cand {
                used[*f][g] = true;
                tp += 1;
            }
        }
        points.push((tp as f64 / num_gt as f64, tp as f64 / kept.len() as f64));
    }
    let total: f64 = (0..=100)
        .map(|r| {
            let level = r as f64 / 100.0;
            points
                .iter()
                .filter(|(rec, _)| *rec >= level)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max)
        })
        .sum();
    Some(total / 101.0)
}

/// Greedy NMS from its fixed-point characterization: the kept set is the
/// unique subset in which a box is kept iff no kept box ranked above it, of
/// the same class, overlaps it at the threshold.
fn nms_oracle(dets: &[Detection], thr: f64) -> Option<Vec<Detection>> {
    let mut rank: Vec<usize> = (0..dets.len()).collect();
    rank.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut found = Vec::new();
    for mask in 0u32..(1 << dets.len()) {
        let in_set = |r: usize| mask & (1 << r) != 0;
        let consistent = (0..rank.len()).all(|r| {
            let d = &dets[rank[r]];
            let suppressed = (0..r).any(|q| {
                let k = &dets[rank[q]];
                in_set(q) && k.class_id == d.class_id && iou(&k.bbox, &d.bbox) >= thr
            });
            in_set(r) != suppressed
        });
        if consistent {
            found.push((0..rank.len()).filter(|&r| in_set(r)).map(|r| dets[rank[r]]).collect());
        }
    }
    (found.len() == 1).then(|| found.remove(0))
}

fn map_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let score_pool = [0.3, 0.5, 0.5, 0.8, 0.9];
    let thresholds = default_iou_thresholds();
    let mut max_err: f64 = 0.0;
    let mut cases = 0;
    let mut mismatched_none = 0;
    for _ in 0..600 {
        let frames = rng.gen_range(1..=2);
        let mut dets = vec![Vec::new(); frames];
        let mut gts = vec![GroundTruthFrame::default(); frames];
        for _ in 0..rng.gen_range(0..=4) {
            let f = rng.gen_range(0..frames);
            let score = if rng.gen_bool(0.5) {
                score_pool[rng.gen_range(0..score_pool.len())]
            } else {
                rng.gen()
            };
            dets[f].push(Detection {
                bbox: random_box(&mut rng, 5),
                class_id: rng.gen_range(0..2),
                score,
            });
        }
        for _ in 0..rng.gen_range(0..=3) {
            let f = rng.gen_range(0..frames);
            gts[f].boxes.push(GroundTruthBox {
                bbox: random_box(&mut rng, 5),
                class_id: rng.gen_range(0..2),
            });
        }
        let class = rng.gen_range(0..2);
        let thr = thresholds[rng.gen_range(0..thresholds.len())];
        let got = average_precision(&dets, &gts, class, thr).unwrap();
        match (got, ap_oracle(&dets, &gts, class, thr)) {
            (Some(a), Some(b)) => {
                max_err = max_err.max((a - b).abs());
                cases += 1;
            }
            (None, None) => {}
            _ => mismatched_none += 1,
        }
    }

    let mut nms_cases = 0;
    let mut nms_mismatch = 0;
    for _ in 0..300 {
        let n = rng.gen_range(0..=6);
        let dets: Vec<Detection> = (0..n)
            .map(|_| Detection {
                bbox: random_box(&mut rng, 4),
                class_id: rng.gen_range(0..2),
                score: score_pool[rng.gen_range(0..score_pool.len())],
            })
            .collect();
        let thr = [0.3, 0.5, 0.7][rng.gen_range(0..3)];
        match nms_oracle(&dets, thr) {
            Some(expected) if expected == nms(&dets, thr) => {}
            _ => nms_mismatch += 1,
        }
        nms_cases += 1;
    }
    Outcome::new(
        cases >= 200 && max_err <= 1e-9 && mismatched_none == 0 && nms_mismatch == 0,
        format!(
            "AP on {cases} cases, max abs err {max_err:.1e}, {mismatched_none} presence mismatches; NMS {} / {nms_cases} agree",
            nms_cases - nms_mismatch
        ),
    )
}

fn random_model(rng: &mut ChaCha8Rng, grid: usize, classes: usize, scale: f64) -> DetectorModel {
    let mut m = DetectorModel::zeros(grid, classes);
    m.params.iter_mut().for_each(|p| *p = rng.gen_range(-scale..scale));
    m
}

fn ema_convergence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let norm = |a: &DetectorModel, b: &DetectorModel| {
        a.params.iter().zip(&b.params).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let mut max_err: f64 = 0.0;
    for m in [0.9, 0.99] {
        let student = random_model(&mut rng, 4, 3, 1.0);
        let teacher = random_model(&mut rng, 4, 3, 1.0);
        let mut ens = TeacherEnsemble::from_parts(student.clone(), teacher, student.clone(), m, 0).unwrap();
        let d0 = norm(ens.ema_teacher(), &student);
        for k in 1..=100 {
            ens = ema_update(&ens).unwrap();
            let ratio = norm(ens.ema_teacher(), &student) / d0;
            max_err = max_err.max((ratio - m.powi(k)).abs());
        }
    }
    Outcome::new(max_err <= 1e-9, format!("m in {{0.9, 0.99}}, k <= 100, max |ratio - m^k| {max_err:.1e}"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-5;
    let mut max_err: f64 = 0.0;
    for _ in 0..20 {
        let model = random_model(&mut rng, 4, 2, 1.0);
        let img = ImageRgb::from_fn(24, 24, |_, _| [rng.gen(), rng.gen(), rng.gen()]).unwrap();
        let targets: Vec<GroundTruthBox> = (0..rng.gen_range(0..=3))
            .map(|_| {
                let x = rng.gen_range(0.0..16.0);
                let y = rng.gen_range(0.0..16.0);
                GroundTruthBox {
                    bbox: BBox::new(x, y, x + rng.gen_range(2.0..8.0), y + rng.gen_range(2.0..8.0)).unwrap(),
                    class_id: rng.gen_range(0..2),
                }
            })
            .collect();
        // one unit step recovers the analytic gradient
        let stepped = sgd_step(&model, &img, &targets, 1.0).unwrap();
        for i in 0..model.params.len() {
            let analytic = model.params[i] - stepped.params[i];
            let mut plus = model.clone();
            plus.params[i] += h;
            let mut minus = model.clone();
            minus.params[i] -= h;
            let numeric = (loss(&plus, &img, &targets).unwrap() - loss(&minus, &img, &targets).unwrap()) / (2.0 * h);
            max_err = max_err.max((analytic - numeric).abs());
        }
    }
    Outcome::new(max_err <= 1e-4, format!("20 triples, h = 1e-5, max abs err {max_err:.1e}"))
}

/// Fraction of `dets` that match a ground-truth box of the same class at IoU
/// 0.5, one match per box, in descending score order.
fn true_positives(dets: &[Detection], gt: &GroundTruthFrame) -> usize {
    let mut order: Vec<&Detection> = dets.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut used = vec![false; gt.boxes.len()];
    let mut tp = 0;
    for d in order {
        let hit = gt
            .boxes
            .iter()
            .enumerate()
            .filter(|(g, b)| !used[*g] && b.class_id == d.class_id && iou(&b.bbox, &d.bbox) >= 0.5)
            .max_by(|a, b| iou(&a.1.bbox, &d.bbox).total_cmp(&iou(&b.1.bbox, &d.bbox)));
        if let Some((g, _)) = hit {
            used[g] = true;
            tp += 1;
        }
    }
    tp
}

fn voting_robustness() -> Outcome {
    const BATCH: usize = 10;
    const SPURIOUS: f64 = 0.3;
    let cfg = benchmark_config();
    let seq = cfg.sequence().unwrap();
    let (fixed, ema) = sources();
    let adapt = cfg.runner.adapt;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let frames: Vec<_> = seq.frames().collect();
    let mut batches = 0;
    let mut failed = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for (b, chunk) in frames.chunks(BATCH).enumerate() {
        let (mut ema_tp, mut ema_n, mut vote_tp, mut vote_n) = (0, 0, 0, 0);
        for f in chunk {
            let mut ema_dets = detect(ema, &f.image, adapt.teacher_score_threshold).unwrap();
            let fixed_dets = detect(fixed, &f.image, adapt.teacher_score_threshold).unwrap();
            let inject = (SPURIOUS * ema_dets.len() as f64).ceil() as usize;
            for _ in 0..inject {
                let (w, h) = (f.image.width() as f64, f.image.height() as f64);
                let x = rng.gen_range(0.0..w - 8.0);
                let y = rng.gen_range(0.0..h - 8.0);
                ema_dets.push(Detection {
                    bbox: BBox::new(x, y, (x + rng.gen_range(4.0..16.0)).min(w), (y + rng.gen_range(4.0..16.0)).min(h))
                        .unwrap(),
                    class_id: rng.gen_range(0..cfg.num_classes),
                    score: rng.gen_range(adapt.teacher_score_threshold..1.0),
                });
            }
            let voted = vote_pseudo_labels(&ema_dets, &fixed_dets, &adapt.voting);
            ema_tp += true_positives(&ema_dets, &f.gt);
            ema_n += ema_dets.len();
            vote_tp += true_positives(&voted, &f.gt);
            vote_n += voted.len();
        }
        batches += 1;
        let ema_p = if ema_n == 0 { 1.0 } else { ema_tp as f64 / ema_n as f64 };
        // an empty vote only counts as precise when the teacher was empty too
        let vote_p = if vote_n == 0 {
            if ema_n == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            vote_tp as f64 / vote_n as f64
        };
        worst_margin = worst_margin.min(vote_p - ema_p);
        if vote_p < ema_p {
            failed.push(format!("batch {b}: {vote_p:.3} < {ema_p:.3}"));
        }
    }
    Outcome::new(
        failed.is_empty(),
        format!(
            "{} / {batches} batches of {BATCH} frames with voted precision >= EMA precision, worst margin {worst_margin:+.3} {}",
            batches - failed.len(),
            failed.join(", ")
        ),
    )
}

fn benchmark_trends() -> Outcome {
    let start = Instant::now();
    let report = run_benchmark(&benchmark_config(), &Mode::ALL).unwrap();
    let elapsed = start.elapsed();
    let frozen = report.metrics(Mode::Frozen).unwrap();
    let image = report.metrics(Mode::ImageAdapt).unwrap();
    let bilevel = report.metrics(Mode::Bilevel).unwrap();
    let checks = [
        ("a", bilevel.map_target > frozen.map_target),
        ("b", bilevel.map_drop < frozen.map_drop),
        ("c", image.map_target > frozen.map_target),
        ("d", bilevel.map_loopback >= frozen.map_loopback - 2.0),
        ("time", elapsed < Duration::from_secs(300)),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    Outcome::new(
        failed.is_empty(),
        format!(
            "target {:.2} / {:.2} / {:.2} (frozen / image_adapt / bilevel), drop {:.2} -> {:.2}, loopback {:.2} -> {:.2}, {:.0}s{}",
            frozen.map_target,
            image.map_target,
            bilevel.map_target,
            frozen.map_drop,
            bilevel.map_drop,
            frozen.map_loopback,
            bilevel.map_loopback,
            elapsed.as_secs_f64(),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed {}", failed.join(", "))
            }
        ),
    )
}

/// synth -> train -> adapt -> eval through files, returning the metrics file bytes.
fn file_pipeline(dir: &Path, seed: u64) -> Vec<u8> {
    let data = synth_dataset(&SynthConfig {
        seed,
        frames_per_segment: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let manifest = write_dataset(&dir.join("data"), &data).unwrap();
    let data = load_dataset(&manifest).unwrap();
    let seq = data.to_sequence().unwrap();

    let train = synth_training_set(seed + 1, data.width, data.height, data.num_classes, data.grid_size, 30).unwrap();
    let model = mix_train(
        &train.segments[0].frames,
        &TrainConfig {
            grid_size: data.grid_size,
            num_classes: data.num_classes,
            epochs: 3,
            lr: 2.0,
            policy: MixPolicy::uniform(seed),
        },
    )
    .unwrap();
    let model_path = dir.join("model.txt");
    save_model(&model_path, &model).unwrap();
    let model = load_model(&model_path).unwrap();

    let run = run_sequence(&model, &seq, Mode::Bilevel, &RunnerConfig::default()).unwrap();
    save_checkpoint(&dir.join("checkpoint.txt"), &run.ensemble).unwrap();
    let det_path = dir.join("detections.txt");
    write_detections(&det_path, &run.frame_ids, &run.detections).unwrap();

    let mut by_frame: BTreeMap<usize, Vec<Detection>> = read_detections(&det_path).unwrap();
    let dets: Vec<Vec<Detection>> = seq.frames().map(|f| by_frame.remove(&f.id).unwrap_or_default()).collect();
    let metrics = compute_metrics(&dets, &seq, data.num_classes, &default_iou_thresholds()).unwrap();
    let metrics_path = dir.join("metrics.json");
    save_metrics(
        &metrics_path,
        &MetricsRecord {
            mode: Mode::Bilevel,
            seed,
            metrics,
        },
    )
    .unwrap();
    std::fs::read(metrics_path).unwrap()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = file_pipeline(a.path(), 31);
    let second = file_pipeline(b.path(), 31);
    let checkpoints_match = std::fs::read(a.path().join("checkpoint.txt")).unwrap()
        == std::fs::read(b.path().join("checkpoint.txt")).unwrap();
    Outcome::new(
        first == second && checkpoints_match,
        format!(
            "metrics files {} ({} bytes), checkpoints {}",
            if first == second { "identical" } else { "differ" },
            first.len(),
            if checkpoints_match { "identical" } else { "differ" }
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("drop arithmetic", drop_arithmetic),
        ("filter identities", filter_identity),
        ("fog/defog round trip", fog_defog_round_trip),
        ("mAP and NMS oracles", map_oracle),
        ("EMA convergence", ema_convergence),
        ("gradient check", gradient_check),
        ("voting robustness", voting_robustness),
        ("benchmark trends", benchmark_trends),
        ("determinism", determinism),
    ];
    // panics are reported on the criterion's line
    std::panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::new(false, format!("panicked: {msg}"))
        });
        if !outcome.pass {
            failures += 1;
        }
        println!(
            "criterion {} {:<22} {} [{:.1}s] {}",
            i + 1,
            name,
            if outcome.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail.trim_end()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
