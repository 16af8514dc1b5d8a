//! The six per-run metrics: pooled mAP, source, target, loopback, drop and
//! overall.

use serde::{Deserialize, Serialize};

use super::dataset::DomainSequence;
use crate::detection::{mean_ap, Detection, GroundTruthFrame};
use crate::error::{Error, Result};

/// Reported metrics are rounded to this many decimals, so that the drop is
/// computed from exactly the source and target values a reader sees.
pub const METRIC_DECIMALS: i32 = 6;

pub fn round_metric(v: f64) -> f64 {
    let scale = 10f64.powi(METRIC_DECIMALS);
    let r = (v * scale).round() / scale;
    // normalize -0.0
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub map: f64,
    pub map_source: f64,
    pub map_target: f64,
    pub map_loopback: f64,
    pub map_drop: f64,
    pub map_overall: f64,
}

impl RunMetrics {
    /// Assembles the metrics from the measured columns; the drop is derived.
    pub fn from_columns(map: f64, source: f64, target: f64, loopback: f64, overall: f64) -> Result<Self> {
        for (name, v) in [
            ("map", map),
            ("map_source", source),
            ("map_target", target),
            ("map_loopback", loopback),
            ("map_overall", overall),
        ] {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} must be in [0, 100], got {v}")));
            }
        }
        let source = round_metric(source);
        let target = round_metric(target);
        Ok(Self {
            map: round_metric(map),
            map_source: source,
            map_target: target,
            map_loopback: round_metric(loopback),
            map_drop: round_metric(source - target),
            map_overall: round_metric(overall),
        })
    }
}

fn pooled_map(frames: &[(&Vec<Detection>, &GroundTruthFrame)], num_classes: usize, thresholds: &[f64]) -> Result<f64> {
    let dets: Vec<Vec<Detection>> = frames.iter().map(|(d, _)| (*d).clone()).collect();
    let gts: Vec<GroundTruthFrame> = frames.iter().map(|(_, g)| (*g).clone()).collect();
    mean_ap(&dets, &gts, num_classes, thresholds)
}

/// Metrics of one run; `detections[i]` belongs to the i-th frame of the
/// sequence in streaming order.
pub fn compute_metrics(
    detections: &[Vec<Detection>],
    sequence: &DomainSequence,
    num_classes: usize,
    iou_thresholds: &[f64],
) -> Result<RunMetrics> {
    if detections.len() != sequence.num_frames() {
        return Err(Error::InvalidInput(format!(
            "{} detection lists for {} frames",
            detections.len(),
            sequence.num_frames()
        )));
    }
    let mut per_segment = Vec::new();
    let mut offset = 0;
    for seg in sequence.segments() {
        let frames: Vec<_> = detections[offset..offset + seg.frames.len()]
            .iter()
            .zip(seg.frames.iter().map(|f| &f.gt))
            .collect();
        offset += seg.frames.len();
        per_segment.push(frames);
    }
    let all: Vec<_> = per_segment.iter().flatten().copied().collect();
    let last = per_segment.len() - 1;
    let middle: Vec<_> = per_segment[1..last].iter().flatten().copied().collect();

    let segment_maps = per_segment
        .iter()
        .map(|f| pooled_map(f, num_classes, iou_thresholds))
        .collect::<Result<Vec<_>>>()?;
    let overall = segment_maps.iter().sum::<f64>() / segment_maps.len() as f64;
    RunMetrics::from_columns(
        pooled_map(&all, num_classes, iou_thresholds)?,
        segment_maps[0],
        pooled_map(&middle, num_classes, iou_thresholds)?,
        segment_maps[last],
        overall,
    )
}
