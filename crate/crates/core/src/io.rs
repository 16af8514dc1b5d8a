//! File formats: atomic writes, detection / ground-truth record files, and
//! the model and adaptation checkpoint dumps.
//!
//! Record files hold one record per line, `frame_id class_id x1 y1 x2 y2
//! [score]`, with the score omitted for ground truth. Lines starting with `#`
//! are comments.
//!
//! Metrics files are JSON objects holding the mode, the seed and the six
//! run metrics.
//!
//! Model and checkpoint files are line-oriented `key value...` text. Floats
//! are written as the hex of their IEEE-754 bits so a round trip is bit-exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::adaptation::TeacherEnsemble;
use crate::detection::{BBox, Detection, DetectorModel, FeatureSpec, GroundTruthBox};
use crate::error::{Error, Result};
use crate::harness::{Mode, RunMetrics};

pub const MODEL_HEADER: &str = "tta-model v1";
pub const CHECKPOINT_HEADER: &str = "tta-checkpoint v1";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes through a temporary file in the target directory, then renames it
/// over `path`. A failed write leaves any previous file untouched.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        write(&mut w).map_err(io_err(path))?;
        w.flush().map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_text_atomic(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(io_err(path))
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// One line of a record file.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record {
    pub frame_id: usize,
    pub class_id: usize,
    pub bbox: BBox,
    pub score: Option<f64>,
}

pub fn format_records(records: &[Record]) -> String {
    let mut s = String::new();
    for r in records {
        let b = r.bbox;
        let _ = write!(s, "{} {} {} {} {} {}", r.frame_id, r.class_id, b.x1, b.y1, b.x2, b.y2);
        if let Some(score) = r.score {
            let _ = write!(s, " {score}");
        }
        s.push('\n');
    }
    s
}

/// Parses a record file. `with_score` selects detections (7 fields) or ground
/// truth (6 fields).
pub fn parse_records(path: &Path, text: &str, with_score: bool) -> Result<Vec<Record>> {
    let expected = if with_score { 7 } else { 6 };
    content_lines(text)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != expected {
                return Err(parse_err(path, n, format!("expected {expected} fields, found {}", f.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| parse_err(path, n, format!("`{s}`: {e}")));
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(path, n, format!("`{s}`: {e}")));
            let bbox = BBox::new(num(f[2])?, num(f[3])?, num(f[4])?, num(f[5])?)
                .map_err(|e| parse_err(path, n, e.to_string()))?;
            let score = if with_score {
                let s = num(f[6])?;
                if !(0.0..=1.0).contains(&s) {
                    return Err(parse_err(path, n, format!("score {s} outside [0, 1]")));
                }
                Some(s)
            } else {
                None
            };
            Ok(Record {
                frame_id: int(f[0])?,
                class_id: int(f[1])?,
                bbox,
                score,
            })
        })
        .collect()
}

pub fn detection_records(frame_ids: &[usize], dets: &[Vec<Detection>]) -> Vec<Record> {
    frame_ids
        .iter()
        .zip(dets)
        .flat_map(|(&frame_id, ds)| {
            ds.iter().map(move |d| Record {
                frame_id,
                class_id: d.class_id,
                bbox: d.bbox,
                score: Some(d.score),
            })
        })
        .collect()
}

pub fn write_detections(path: &Path, frame_ids: &[usize], dets: &[Vec<Detection>]) -> Result<()> {
    write_text_atomic(path, &format_records(&detection_records(frame_ids, dets)))
}

/// Detections grouped by frame id.
pub fn read_detections(path: &Path) -> Result<BTreeMap<usize, Vec<Detection>>> {
    let text = read_text(path)?;
    let mut out: BTreeMap<usize, Vec<Detection>> = BTreeMap::new();
    for r in parse_records(path, &text, true)? {
        out.entry(r.frame_id).or_default().push(Detection {
            bbox: r.bbox,
            class_id: r.class_id,
            score: r.score.unwrap_or(0.0),
        });
    }
    Ok(out)
}

pub fn ground_truth_records(frames: &[(usize, &[GroundTruthBox])]) -> Vec<Record> {
    frames
        .iter()
        .flat_map(|&(frame_id, boxes)| {
            boxes.iter().map(move |b| Record {
                frame_id,
                class_id: b.class_id,
                bbox: b.bbox,
                score: None,
            })
        })
        .collect()
}

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn unhex(path: &Path, line: usize, s: &str) -> Result<f64> {
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|e| parse_err(path, line, format!("bad float bits `{s}`: {e}")))
}

fn push_params(out: &mut String, key: &str, params: &[f64]) {
    let _ = write!(out, "{key} {}", params.len());
    for p in params {
        out.push(' ');
        out.push_str(&hex(*p));
    }
    out.push('\n');
}

fn push_shape(out: &mut String, m: &DetectorModel) {
    let _ = writeln!(out, "grid_size {}", m.grid_size);
    let _ = writeln!(out, "num_classes {}", m.num_classes);
    let _ = writeln!(out, "histogram_bins {}", m.feature_spec.histogram_bins);
}

fn push_stats(out: &mut String, m: &DetectorModel) {
    if let Some(stats) = &m.source_stats {
        push_params(out, "source_stats", stats);
    }
}

pub fn format_model(m: &DetectorModel) -> String {
    let mut s = format!("{MODEL_HEADER}\n");
    push_shape(&mut s, m);
    push_params(&mut s, "params", &m.params);
    push_stats(&mut s, m);
    s
}

pub fn format_checkpoint(e: &TeacherEnsemble) -> String {
    let mut s = format!("{CHECKPOINT_HEADER}\n");
    let _ = writeln!(s, "step {}", e.step());
    let _ = writeln!(s, "momentum {}", hex(e.momentum()));
    push_shape(&mut s, e.student());
    push_params(&mut s, "student", &e.student().params);
    push_params(&mut s, "ema_teacher", &e.ema_teacher().params);
    push_params(&mut s, "fixed_teacher", &e.fixed_teacher().params);
    push_stats(&mut s, e.fixed_teacher());
    s
}

/// Key-value lines after a required header.
struct KeyValues<'a> {
    path: &'a Path,
    entries: BTreeMap<&'a str, (usize, Vec<&'a str>)>,
}

impl<'a> KeyValues<'a> {
    fn parse(path: &'a Path, text: &'a str, header: &str) -> Result<Self> {
        let mut lines = content_lines(text);
        match lines.next() {
            Some((_, h)) if h == header => {}
            Some((n, h)) => return Err(parse_err(path, n, format!("expected header `{header}`, found `{h}`"))),
            None => return Err(parse_err(path, 0, "empty file")),
        }
        let mut entries = BTreeMap::new();
        for (n, line) in lines {
            let mut it = line.split_whitespace();
            let key = it.next().unwrap_or_default();
            if entries.insert(key, (n, it.collect())).is_some() {
                return Err(parse_err(path, n, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { path, entries })
    }

    fn get(&self, key: &str) -> Result<(usize, &[&'a str])> {
        self.entries
            .get(key)
            .map(|(n, v)| (*n, v.as_slice()))
            .ok_or_else(|| parse_err(self.path, 0, format!("missing key `{key}`")))
    }

    fn single(&self, key: &str) -> Result<(usize, &'a str)> {
        let (n, v) = self.get(key)?;
        match v {
            [one] => Ok((n, one)),
            _ => Err(parse_err(self.path, n, format!("`{key}` takes exactly one value"))),
        }
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let (n, v) = self.single(key)?;
        v.parse().map_err(|e| parse_err(self.path, n, format!("`{key}`: {e}")))
    }

    fn float(&self, key: &str) -> Result<f64> {
        let (n, v) = self.single(key)?;
        unhex(self.path, n, v)
    }

    fn params(&self, key: &str) -> Result<Vec<f64>> {
        let (n, v) = self.get(key)?;
        let (count, rest) = v
            .split_first()
            .ok_or_else(|| parse_err(self.path, n, format!("`{key}` is empty")))?;
        let count: usize = count
            .parse()
            .map_err(|e| parse_err(self.path, n, format!("`{key}` count: {e}")))?;
        if rest.len() != count {
            return Err(parse_err(self.path, n, format!("`{key}` declares {count} values, found {}", rest.len())));
        }
        rest.iter().map(|s| unhex(self.path, n, s)).collect()
    }

    fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|(k, _)| !known.contains(k)) {
            Some((k, (n, _))) => Err(parse_err(self.path, *n, format!("unknown key `{k}`"))),
            None => Ok(()),
        }
    }

    fn model(&self, params_key: &str) -> Result<DetectorModel> {
        let m = DetectorModel {
            grid_size: self.usize("grid_size")?,
            num_classes: self.usize("num_classes")?,
            feature_spec: FeatureSpec {
                histogram_bins: self.usize("histogram_bins")?,
            },
            params: self.params(params_key)?,
            source_stats: match self.entries.contains_key("source_stats") {
                true => Some(self.params("source_stats")?),
                false => None,
            },
        };
        m.validate()?;
        Ok(m)
    }
}

pub fn parse_model(path: &Path, text: &str) -> Result<DetectorModel> {
    let kv = KeyValues::parse(path, text, MODEL_HEADER)?;
    kv.check_known(&["grid_size", "num_classes", "histogram_bins", "params", "source_stats"])?;
    kv.model("params")
}

pub fn parse_checkpoint(path: &Path, text: &str) -> Result<TeacherEnsemble> {
    let kv = KeyValues::parse(path, text, CHECKPOINT_HEADER)?;
    kv.check_known(&[
        "step",
        "momentum",
        "grid_size",
        "num_classes",
        "histogram_bins",
        "student",
        "ema_teacher",
        "fixed_teacher",
        "source_stats",
    ])?;
    let (n, step) = kv.single("step")?;
    let step: u64 = step.parse().map_err(|e| parse_err(path, n, format!("`step`: {e}")))?;
    TeacherEnsemble::from_parts(
        kv.model("student")?,
        kv.model("ema_teacher")?,
        kv.model("fixed_teacher")?,
        kv.float("momentum")?,
        step,
    )
}

pub fn save_model(path: &Path, m: &DetectorModel) -> Result<()> {
    write_text_atomic(path, &format_model(m))
}

pub fn load_model(path: &Path) -> Result<DetectorModel> {
    parse_model(path, &read_text(path)?)
}

pub fn save_checkpoint(path: &Path, e: &TeacherEnsemble) -> Result<()> {
    write_text_atomic(path, &format_checkpoint(e))
}

pub fn load_checkpoint(path: &Path) -> Result<TeacherEnsemble> {
    parse_checkpoint(path, &read_text(path)?)
}

/// Contents of a metrics file.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsRecord {
    pub mode: Mode,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: RunMetrics,
}

pub fn format_metrics(record: &MetricsRecord) -> String {
    let mut text = serde_json::to_string_pretty(record).expect("metrics serialize");
    text.push('\n');
    text
}

pub fn parse_metrics(path: &Path, text: &str) -> Result<MetricsRecord> {
    serde_json::from_str(text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}

pub fn save_metrics(path: &Path, record: &MetricsRecord) -> Result<()> {
    write_text_atomic(path, &format_metrics(record))
}

pub fn load_metrics(path: &Path) -> Result<MetricsRecord> {
    parse_metrics(path, &read_text(path)?)
}
