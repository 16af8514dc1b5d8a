//! Streams a continual sequence through a detector in one of four modes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::dataset::DomainSequence;
use super::metrics::{compute_metrics, RunMetrics};
use crate::adaptation::{adapt_step, search_filter_params, AdaptConfig, FilterParams, FilterSearchConfig, TeacherEnsemble, DEFAULT_MOMENTUM};
use crate::detection::{default_iou_thresholds, detect, Detection, DetectorModel};
use crate::error::{invalid_param, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No updates.
    Frozen,
    /// Teacher-student updates on the raw frames.
    DetectorAdapt,
    /// No updates; meant for a model trained with corruption augmentation.
    ImageAdapt,
    /// Per-frame filter search, then teacher-student updates on the filtered frame.
    Bilevel,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Frozen, Mode::DetectorAdapt, Mode::ImageAdapt, Mode::Bilevel];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Frozen => "frozen",
            Mode::DetectorAdapt => "detector_adapt",
            Mode::ImageAdapt => "image_adapt",
            Mode::Bilevel => "bilevel",
        }
    }

    pub fn adapts(&self) -> bool {
        matches!(self, Mode::DetectorAdapt | Mode::Bilevel)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid_param("mode", format!("expected frozen, detector_adapt, image_adapt or bilevel, got `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunnerConfig {
    pub adapt: AdaptConfig,
    pub momentum: f64,
    pub search: FilterSearchConfig,
    /// Score threshold of the evaluated detections.
    pub eval_score_threshold: f64,
    pub iou_thresholds: Vec<f64>,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            adapt: AdaptConfig::default(),
            momentum: DEFAULT_MOMENTUM,
            search: FilterSearchConfig::aligned(),
            eval_score_threshold: 0.01,
            iou_thresholds: default_iou_thresholds(),
        }
    }
}

impl RunnerConfig {
    pub fn validate(&self) -> Result<()> {
        self.adapt.validate()?;
        self.search.validate()?;
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(invalid_param("momentum", format!("must be in [0, 1], got {}", self.momentum)));
        }
        if !(0.0..=1.0).contains(&self.eval_score_threshold) {
            return Err(invalid_param(
                "eval_score_threshold",
                format!("must be in [0, 1], got {}", self.eval_score_threshold),
            ));
        }
        if self.iou_thresholds.is_empty() || self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return Err(invalid_param("iou_thresholds", "must be a nonempty list of values in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceRun {
    pub mode: Mode,
    pub metrics: RunMetrics,
    pub frame_ids: Vec<usize>,
    pub detections: Vec<Vec<Detection>>,
    /// Filter applied to each frame before detection.
    pub filters: Vec<FilterParams>,
    pub ensemble: TeacherEnsemble,
}

/// Runs `mode` starting from a fresh ensemble built from `source`.
pub fn run_sequence(source: &DetectorModel, sequence: &DomainSequence, mode: Mode, cfg: &RunnerConfig) -> Result<SequenceRun> {
    let ensemble = TeacherEnsemble::from_source(source, cfg.momentum)?;
    run_sequence_from(ensemble, sequence, mode, cfg)
}

/// Runs `mode` starting from an existing ensemble. Each frame is first
/// detected by the current student (the reported output), then, in the
/// adapting modes, used for one update. In bilevel mode the filter for each
/// frame is searched with the fixed teacher as scorer.
pub fn run_sequence_from(
    mut ensemble: TeacherEnsemble,
    sequence: &DomainSequence,
    mode: Mode,
    cfg: &RunnerConfig,
) -> Result<SequenceRun> {
    cfg.validate()?;
    let num_classes = ensemble.student().num_classes;
    for f in sequence.frames() {
        if let Some(b) = f.gt.boxes.iter().find(|b| b.class_id >= num_classes) {
            return Err(Error::InvalidInput(format!(
                "frame {} has class {} but the model has {num_classes} classes",
                f.id, b.class_id
            )));
        }
    }
    let n = sequence.num_frames();
    let mut frame_ids = Vec::with_capacity(n);
    let mut detections = Vec::with_capacity(n);
    let mut filters = Vec::with_capacity(n);
    for frame in sequence.frames() {
        let filter = match mode {
            Mode::Bilevel => search_filter_params(&frame.image, ensemble.fixed_teacher(), &cfg.search)?,
            _ => FilterParams::IDENTITY,
        };
        let input = filter.apply(&frame.image)?;
        detections.push(detect(ensemble.student(), &input, cfg.eval_score_threshold)?);
        if mode.adapts() {
            ensemble = adapt_step(&ensemble, &frame.image, &filter, &cfg.adapt)?.0;
        }
        frame_ids.push(frame.id);
        filters.push(filter);
    }
    let metrics = compute_metrics(&detections, sequence, num_classes, &cfg.iou_thresholds)?;
    Ok(SequenceRun {
        mode,
        metrics,
        frame_ids,
        detections,
        filters,
        ensemble,
    })
}
