//! Synthetic datasets and their on-disk manifest.
//!
//! A dataset directory holds `manifest.txt`, `gt.txt` (ground-truth records)
//! and `frames/NNNNNN.png`. The manifest is line-oriented:
//!
//! ```text
//! tta-manifest v1
//! kind sequence
//! seed 7
//! width 64
//! height 64
//! num_classes 3
//! grid_size 8
//! max_objects 5
//! clip_length 10
//! gt_file gt.txt
//! segment clean 40
//! segment fog:5 40
//! frame 0 0 frames/000000.png
//! ```
//!
//! Frames are stored on the 8-bit grid in memory too, so a loaded dataset
//! equals the generated one exactly.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scene::{random_objects, render_scene, Background, MAX_CLASSES, MIN_CELL_SIDE};
use crate::corruption::{Corruption, FogParams, LowLightParams};
use crate::detection::{GroundTruthBox, GroundTruthFrame};
use crate::error::{invalid_param, Error, Result};
use crate::image::ImageRgb;
use crate::io;

pub const MANIFEST_HEADER: &str = "tta-manifest v1";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const GT_FILE: &str = "gt.txt";
const TRAIN_MAX_OBJECTS: usize = 5;

/// Imaging condition of a segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DomainTag {
    Clean,
    Fog(u8),
    LowLight(f64),
}

impl DomainTag {
    pub fn corruption(&self) -> Result<Corruption> {
        Ok(match *self {
            DomainTag::Clean => Corruption::Clean,
            DomainTag::Fog(level) => Corruption::Fog(FogParams::new(level)?),
            DomainTag::LowLight(eta) => Corruption::LowLight(LowLightParams::new(eta)?),
        })
    }

    pub fn is_clean(&self) -> bool {
        matches!(self, DomainTag::Clean)
    }
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainTag::Clean => write!(f, "clean"),
            DomainTag::Fog(level) => write!(f, "fog:{level}"),
            DomainTag::LowLight(eta) => write!(f, "lowlight:{eta}"),
        }
    }
}

impl FromStr for DomainTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid_param("domain", format!("expected clean, fog:<0-9> or lowlight:<eta>, got `{s}`"));
        let tag = match s.split_once(':') {
            None if s == "clean" => DomainTag::Clean,
            Some(("fog", v)) => DomainTag::Fog(v.parse().map_err(|_| bad())?),
            Some(("lowlight", v)) => DomainTag::LowLight(v.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        tag.corruption()?;
        Ok(tag)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub id: usize,
    pub image: ImageRgb,
    pub gt: GroundTruthFrame,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainSegment {
    pub tag: DomainTag,
    pub frames: Vec<Frame>,
}

/// Source segment, one or more target segments, loopback segment.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSequence {
    segments: Vec<DomainSegment>,
}

pub(crate) fn check_schedule(tags: &[DomainTag]) -> Result<()> {
    if tags.len() < 3 {
        return Err(invalid_param("schedule", format!("needs at least 3 segments, got {}", tags.len())));
    }
    if !tags[0].is_clean() || !tags[tags.len() - 1].is_clean() {
        return Err(invalid_param("schedule", "first and last segments must be clean"));
    }
    for t in tags {
        t.corruption()?;
    }
    Ok(())
}

impl DomainSequence {
    pub fn new(segments: Vec<DomainSegment>) -> Result<Self> {
        check_schedule(&segments.iter().map(|s| s.tag).collect::<Vec<_>>())?;
        let first = segments[0]
            .frames
            .first()
            .ok_or_else(|| Error::InvalidInput("empty segment".into()))?;
        let dims = (first.image.width(), first.image.height());
        for (i, seg) in segments.iter().enumerate() {
            if seg.frames.is_empty() {
                return Err(Error::InvalidInput(format!("segment {i} is empty")));
            }
            if seg
                .frames
                .iter()
                .any(|f| (f.image.width(), f.image.height()) != dims)
            {
                return Err(Error::InvalidInput(format!("segment {i} has frames of different dimensions")));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[DomainSegment] {
        &self.segments
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.segments.iter().flat_map(|s| s.frames.iter())
    }

    pub fn num_frames(&self) -> usize {
        self.segments.iter().map(|s| s.frames.len()).sum()
    }
}

/// In-memory dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub grid_size: usize,
    pub max_objects: usize,
    pub clip_length: usize,
    pub segments: Vec<DomainSegment>,
}

impl Dataset {
    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.segments.iter().flat_map(|s| s.frames.iter())
    }

    pub fn to_sequence(&self) -> Result<DomainSequence> {
        DomainSequence::new(self.segments.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub frames_per_segment: usize,
    pub schedule: Vec<DomainTag>,
    pub max_objects: usize,
    /// Objects are anchored on a `grid_size x grid_size` lattice.
    pub grid_size: usize,
    /// Frames per clip; each clip has its own background and objects.
    pub clip_length: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 64,
            height: 64,
            num_classes: 3,
            frames_per_segment: 40,
            schedule: vec![
                DomainTag::Clean,
                DomainTag::Fog(5),
                DomainTag::LowLight(3.0),
                DomainTag::Clean,
            ],
            max_objects: 5,
            grid_size: 8,
            clip_length: 10,
        }
    }
}

fn check_dims(width: usize, height: usize, num_classes: usize, grid_size: usize) -> Result<()> {
    if grid_size < 3 {
        return Err(invalid_param("grid_size", format!("must be >= 3, got {grid_size}")));
    }
    let min_side = MIN_CELL_SIDE * grid_size;
    if width < min_side || height < min_side {
        return Err(invalid_param(
            "dims",
            format!("width and height must be >= {min_side} for a {grid_size}-cell grid, got {width}x{height}"),
        ));
    }
    if num_classes == 0 || num_classes > MAX_CLASSES {
        return Err(invalid_param("num_classes", format!("must be in 1..={MAX_CLASSES}, got {num_classes}")));
    }
    Ok(())
}

fn corrupt_quantized(img: &ImageRgb, corruption: &Corruption) -> Result<ImageRgb> {
    Ok(corruption.apply(img)?.quantized())
}

/// Renders a continual sequence: each segment is a run of short clips whose
/// objects wobble smoothly around their anchors; the segment's corruption is
/// applied after the ground truth is recorded.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    check_dims(cfg.width, cfg.height, cfg.num_classes, cfg.grid_size)?;
    check_schedule(&cfg.schedule)?;
    if cfg.frames_per_segment == 0 {
        return Err(invalid_param("frames_per_segment", "must be >= 1"));
    }
    if cfg.clip_length == 0 {
        return Err(invalid_param("clip_length", "must be >= 1"));
    }
    if cfg.max_objects == 0 {
        return Err(invalid_param("max_objects", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut segments = Vec::with_capacity(cfg.schedule.len());
    let mut next_id = 0;
    for tag in &cfg.schedule {
        let corruption = tag.corruption()?;
        let mut frames = Vec::with_capacity(cfg.frames_per_segment);
        let mut background = Background::random(&mut rng);
        let mut objects = Vec::new();
        for i in 0..cfg.frames_per_segment {
            let t = i % cfg.clip_length;
            if t == 0 {
                background = Background::random(&mut rng);
                let count = rng.gen_range(1..=cfg.max_objects);
                objects = random_objects(&mut rng, count, cfg.num_classes, cfg.width, cfg.height, cfg.grid_size);
            }
            let (clean, gt) = render_scene(cfg.width, cfg.height, &background, &objects, t, &mut rng)?;
            frames.push(Frame {
                id: next_id,
                image: corrupt_quantized(&clean, &corruption)?,
                gt,
            });
            next_id += 1;
        }
        segments.push(DomainSegment { tag: *tag, frames });
    }
    Ok(Dataset {
        kind: "sequence".into(),
        seed: cfg.seed,
        width: cfg.width,
        height: cfg.height,
        num_classes: cfg.num_classes,
        grid_size: cfg.grid_size,
        max_objects: cfg.max_objects,
        clip_length: cfg.clip_length,
        segments,
    })
}

/// Independent clean scenes for training, as one clean segment.
pub fn synth_training_set(
    seed: u64,
    width: usize,
    height: usize,
    num_classes: usize,
    grid_size: usize,
    num_frames: usize,
) -> Result<Dataset> {
    check_dims(width, height, num_classes, grid_size)?;
    if num_frames == 0 {
        return Err(invalid_param("train_frames", "must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(num_frames);
    for id in 0..num_frames {
        let background = Background::random(&mut rng);
        let count = rng.gen_range(1..=TRAIN_MAX_OBJECTS);
        let objects = random_objects(&mut rng, count, num_classes, width, height, grid_size);
        let t = rng.gen_range(0..64);
        let (image, gt) = render_scene(width, height, &background, &objects, t, &mut rng)?;
        frames.push(Frame {
            id,
            image: image.quantized(),
            gt,
        });
    }
    Ok(Dataset {
        kind: "train".into(),
        seed,
        width,
        height,
        num_classes,
        grid_size,
        max_objects: TRAIN_MAX_OBJECTS,
        clip_length: 1,
        segments: vec![DomainSegment {
            tag: DomainTag::Clean,
            frames,
        }],
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub id: usize,
    pub segment: usize,
    pub file: String,
}

/// On-disk description of a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub kind: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub grid_size: usize,
    pub max_objects: usize,
    pub clip_length: usize,
    pub gt_file: String,
    pub segments: Vec<(DomainTag, usize)>,
    pub frames: Vec<FrameRecord>,
}

impl DatasetManifest {
    pub fn of(dataset: &Dataset) -> Self {
        let mut frames = Vec::new();
        for (s, seg) in dataset.segments.iter().enumerate() {
            for f in &seg.frames {
                frames.push(FrameRecord {
                    id: f.id,
                    segment: s,
                    file: format!("frames/{:06}.png", f.id),
                });
            }
        }
        Self {
            kind: dataset.kind.clone(),
            seed: dataset.seed,
            width: dataset.width,
            height: dataset.height,
            num_classes: dataset.num_classes,
            grid_size: dataset.grid_size,
            max_objects: dataset.max_objects,
            clip_length: dataset.clip_length,
            gt_file: GT_FILE.into(),
            segments: dataset.segments.iter().map(|s| (s.tag, s.frames.len())).collect(),
            frames,
        }
    }

    pub fn format(&self) -> String {
        let mut s = format!("{MANIFEST_HEADER}\n");
        let _ = writeln!(s, "kind {}", self.kind);
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "width {}", self.width);
        let _ = writeln!(s, "height {}", self.height);
        let _ = writeln!(s, "num_classes {}", self.num_classes);
        let _ = writeln!(s, "grid_size {}", self.grid_size);
        let _ = writeln!(s, "max_objects {}", self.max_objects);
        let _ = writeln!(s, "clip_length {}", self.clip_length);
        let _ = writeln!(s, "gt_file {}", self.gt_file);
        for (tag, n) in &self.segments {
            let _ = writeln!(s, "segment {tag} {n}");
        }
        for f in &self.frames {
            let _ = writeln!(s, "frame {} {} {}", f.id, f.segment, f.file);
        }
        s
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let err = |line: usize, reason: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            reason,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, h)) if h == MANIFEST_HEADER => {}
            other => {
                return Err(err(
                    other.map_or(0, |(n, _)| n),
                    format!("expected header `{MANIFEST_HEADER}`"),
                ))
            }
        }
        let mut m = DatasetManifest {
            kind: String::new(),
            seed: 0,
            width: 0,
            height: 0,
            num_classes: 0,
            grid_size: 0,
            max_objects: 0,
            clip_length: 0,
            gt_file: String::new(),
            segments: Vec::new(),
            frames: Vec::new(),
        };
        let mut seen = std::collections::BTreeSet::new();
        for (n, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|e| err(n, format!("`{s}`: {e}")));
            let key = f[0];
            let scalar = !matches!(key, "segment" | "frame");
            if scalar && (f.len() != 2 || !seen.insert(key.to_string())) {
                return Err(err(n, format!("`{key}` must appear once with one value")));
            }
            match key {
                "kind" => m.kind = f[1].to_string(),
                "seed" => m.seed = f[1].parse().map_err(|e| err(n, format!("seed: {e}")))?,
                "width" => m.width = num(f[1])?,
                "height" => m.height = num(f[1])?,
                "num_classes" => m.num_classes = num(f[1])?,
                "grid_size" => m.grid_size = num(f[1])?,
                "max_objects" => m.max_objects = num(f[1])?,
                "clip_length" => m.clip_length = num(f[1])?,
                "gt_file" => m.gt_file = f[1].to_string(),
                "segment" if f.len() == 3 => {
                    let tag: DomainTag = f[1].parse().map_err(|e: Error| err(n, e.to_string()))?;
                    m.segments.push((tag, num(f[2])?));
                }
                "frame" if f.len() == 4 => m.frames.push(FrameRecord {
                    id: num(f[1])?,
                    segment: num(f[2])?,
                    file: f[3].to_string(),
                }),
                _ => return Err(err(n, format!("unrecognized line `{line}`"))),
            }
        }
        for key in ["kind", "seed", "width", "height", "num_classes", "grid_size", "max_objects", "clip_length", "gt_file"] {
            if !seen.contains(key) {
                return Err(err(0, format!("missing key `{key}`")));
            }
        }
        let declared: usize = m.segments.iter().map(|(_, n)| n).sum();
        if declared != m.frames.len() {
            return Err(err(0, format!("segments declare {declared} frames, found {}", m.frames.len())));
        }
        Ok(m)
    }
}

/// Writes frames, ground truth and manifest under `dir`; returns the manifest path.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|source| Error::Io {
        path: frames_dir.clone(),
        source,
    })?;
    let manifest = DatasetManifest::of(dataset);
    for (rec, frame) in manifest.frames.iter().zip(dataset.frames()) {
        frame.image.save(dir.join(&rec.file))?;
    }
    let gt: Vec<(usize, &[GroundTruthBox])> = dataset.frames().map(|f| (f.id, f.gt.boxes.as_slice())).collect();
    io::write_text_atomic(&dir.join(&manifest.gt_file), &io::format_records(&io::ground_truth_records(&gt)))?;
    let path = dir.join(MANIFEST_FILE);
    io::write_text_atomic(&path, &manifest.format())?;
    Ok(path)
}

/// Loads a dataset, checking that every referenced frame exists and matches
/// the declared dimensions.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::parse(manifest_path, &io::read_text(manifest_path)?)?;
    if manifest.num_classes == 0 || manifest.num_classes > MAX_CLASSES {
        return Err(Error::InvalidInput(format!("num_classes {} out of range", manifest.num_classes)));
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let gt_path = dir.join(&manifest.gt_file);
    let records = io::parse_records(&gt_path, &io::read_text(&gt_path)?, false)?;

    let mut segments: Vec<DomainSegment> = manifest
        .segments
        .iter()
        .map(|(tag, n)| DomainSegment {
            tag: *tag,
            frames: Vec::with_capacity(*n),
        })
        .collect();
    let mut ids = std::collections::BTreeMap::new();
    for rec in &manifest.frames {
        let seg = segments
            .get_mut(rec.segment)
            .ok_or_else(|| Error::InvalidInput(format!("frame {} names missing segment {}", rec.id, rec.segment)))?;
        let image = ImageRgb::load(dir.join(&rec.file))?;
        if (image.width(), image.height()) != (manifest.width, manifest.height) {
            return Err(Error::InvalidInput(format!(
                "frame {} is {}x{}, manifest says {}x{}",
                rec.id,
                image.width(),
                image.height(),
                manifest.width,
                manifest.height
            )));
        }
        if ids.insert(rec.id, (rec.segment, seg.frames.len())).is_some() {
            return Err(Error::InvalidInput(format!("duplicate frame id {}", rec.id)));
        }
        seg.frames.push(Frame {
            id: rec.id,
            image,
            gt: GroundTruthFrame::default(),
        });
    }
    for (i, (seg, (_, n))) in segments.iter().zip(&manifest.segments).enumerate() {
        if seg.frames.len() != *n {
            return Err(Error::InvalidInput(format!("segment {i} declares {n} frames, found {}", seg.frames.len())));
        }
    }
    for r in records {
        let &(s, i) = ids
            .get(&r.frame_id)
            .ok_or_else(|| Error::InvalidInput(format!("ground truth for unknown frame {}", r.frame_id)))?;
        if r.class_id >= manifest.num_classes {
            return Err(Error::InvalidInput(format!("ground-truth class {} out of range", r.class_id)));
        }
        let frame = &mut segments[s].frames[i];
        if !r.bbox.within(manifest.width, manifest.height) {
            return Err(Error::InvalidInput(format!("ground-truth box {:?} outside the frame", r.bbox)));
        }
        frame.gt.boxes.push(GroundTruthBox {
            bbox: r.bbox,
            class_id: r.class_id,
        });
    }
    Ok(Dataset {
        kind: manifest.kind,
        seed: manifest.seed,
        width: manifest.width,
        height: manifest.height,
        num_classes: manifest.num_classes,
        grid_size: manifest.grid_size,
        max_objects: manifest.max_objects,
        clip_length: manifest.clip_length,
        segments,
    })
}
