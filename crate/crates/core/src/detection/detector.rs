//! Grid detector: every cell of a `grid_size x grid_size` grid is scored per
//! class by a logistic model over color statistics of the cell. Emitted boxes
//! are the cell rectangles themselves.

use super::boxes::{iou, nms, BBox, Detection, GroundTruthBox};
use crate::error::{Error, Result};
use crate::image::{luminance, ImageRgb};

/// IoU at which a cell counts as a positive training example for a target.
pub const CELL_POSITIVE_IOU: f64 = 0.3;
/// IoU used by the class-wise NMS at the end of `detect`.
pub const DETECT_NMS_IOU: f64 = 0.5;

/// Per-cell descriptor: mean and standard deviation per channel followed by a
/// normalized luminance histogram.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FeatureSpec {
    pub histogram_bins: usize,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self { histogram_bins: 8 }
    }
}

impl FeatureSpec {
    pub fn dim(&self) -> usize {
        6 + self.histogram_bins
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorModel {
    pub grid_size: usize,
    pub num_classes: usize,
    pub feature_spec: FeatureSpec,
    /// Per class: `feature_dim` weights followed by one bias.
    pub params: Vec<f64>,
    /// Mean cell feature vector over the clean source training frames, when
    /// known. Used as the reference for feature-alignment filter search.
    pub source_stats: Option<Vec<f64>>,
}

impl DetectorModel {
    pub fn zeros(grid_size: usize, num_classes: usize) -> Self {
        let spec = FeatureSpec::default();
        Self {
            grid_size,
            num_classes,
            feature_spec: spec,
            params: vec![0.0; num_classes * (spec.dim() + 1)],
            source_stats: None,
        }
    }

    pub fn stride(&self) -> usize {
        self.feature_spec.dim() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 || self.num_classes == 0 || self.feature_spec.histogram_bins == 0 {
            return Err(Error::InvalidState(format!(
                "grid_size {}, num_classes {} and histogram_bins {} must be positive",
                self.grid_size, self.num_classes, self.feature_spec.histogram_bins
            )));
        }
        if let Some(stats) = &self.source_stats {
            if stats.len() != self.feature_spec.dim() || stats.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidState(format!(
                    "source statistics must be {} finite values, got {}",
                    self.feature_spec.dim(),
                    stats.len()
                )));
            }
        }
        let expected = self.num_classes * self.stride();
        if self.params.len() != expected {
            return Err(Error::InvalidState(format!(
                "parameter vector has length {}, expected {expected}",
                self.params.len()
            )));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.grid_size == other.grid_size
            && self.num_classes == other.num_classes
            && self.feature_spec == other.feature_spec
            && self.params.len() == other.params.len()
    }

    /// Logit of `class` for one feature vector.
    pub fn logit(&self, class: usize, features: &[f64]) -> f64 {
        let s = self.stride();
        let w = &self.params[class * s..(class + 1) * s];
        w[..s - 1].iter().zip(features).map(|(a, b)| a * b).sum::<f64>() + w[s - 1]
    }

    /// `[cell][class]` probabilities.
    pub fn cell_scores(&self, cells: &CellFeatures) -> Vec<Vec<f64>> {
        cells
            .features
            .iter()
            .map(|f| (0..self.num_classes).map(|k| logistic(self.logit(k, f))).collect())
            .collect()
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Integer pixel bounds `(x0, y0, x1, y1)` of a cell, end-exclusive.
pub fn cell_rect(width: usize, height: usize, grid_size: usize, cx: usize, cy: usize) -> (usize, usize, usize, usize) {
    (
        cx * width / grid_size,
        cy * height / grid_size,
        (cx + 1) * width / grid_size,
        (cy + 1) * height / grid_size,
    )
}

/// Cell rectangles in row-major cell order.
pub fn cell_boxes(width: usize, height: usize, grid_size: usize) -> Vec<BBox> {
    let mut out = Vec::with_capacity(grid_size * grid_size);
    for cy in 0..grid_size {
        for cx in 0..grid_size {
            let (x0, y0, x1, y1) = cell_rect(width, height, grid_size, cx, cy);
            out.push(BBox {
                x1: x0 as f64,
                y1: y0 as f64,
                x2: x1 as f64,
                y2: y1 as f64,
            });
        }
    }
    out
}

/// Descriptor of cell `(cx, cy)`.
pub fn extract_features(img: &ImageRgb, cell: (usize, usize), grid_size: usize, spec: &FeatureSpec) -> Result<Vec<f64>> {
    check_grid(img, grid_size)?;
    if cell.0 >= grid_size || cell.1 >= grid_size {
        return Err(Error::InvalidInput(format!("cell {cell:?} outside a {grid_size}x{grid_size} grid")));
    }
    Ok(features_unchecked(img, cell, grid_size, spec))
}

fn check_grid(img: &ImageRgb, grid_size: usize) -> Result<()> {
    if grid_size == 0 || grid_size > img.width().min(img.height()) {
        return Err(Error::InvalidInput(format!(
            "grid size {grid_size} does not fit a {}x{} image",
            img.width(),
            img.height()
        )));
    }
    Ok(())
}

fn features_unchecked(img: &ImageRgb, (cx, cy): (usize, usize), grid_size: usize, spec: &FeatureSpec) -> Vec<f64> {
    let (x0, y0, x1, y1) = cell_rect(img.width(), img.height(), grid_size, cx, cy);
    let bins = spec.histogram_bins;
    let mut sum = [0.0; 3];
    let mut hist = vec![0.0; bins];
    for y in y0..y1 {
        for x in x0..x1 {
            let p = img.pixel(x, y);
            for c in 0..3 {
                sum[c] += p[c];
            }
            let b = ((luminance(p) * bins as f64) as usize).min(bins - 1);
            hist[b] += 1.0;
        }
    }
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    let mean = sum.map(|s| s / n);
    let mut var = [0.0; 3];
    for y in y0..y1 {
        for x in x0..x1 {
            let p = img.pixel(x, y);
            for c in 0..3 {
                var[c] += (p[c] - mean[c]) * (p[c] - mean[c]);
            }
        }
    }
    let mut out = Vec::with_capacity(spec.dim());
    out.extend_from_slice(&mean);
    out.extend(var.iter().map(|v| (v / n).sqrt()));
    out.extend(hist.into_iter().map(|h| h / n));
    out
}

/// Features and boxes of every cell of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFeatures {
    pub boxes: Vec<BBox>,
    pub features: Vec<Vec<f64>>,
}

impl CellFeatures {
    /// Mean feature vector over all cells.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.features.first().map_or(0, Vec::len);
        let mut acc = vec![0.0; dim];
        for f in &self.features {
            acc.iter_mut().zip(f).for_each(|(a, v)| *a += v);
        }
        let n = self.features.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn compute(img: &ImageRgb, grid_size: usize, spec: &FeatureSpec) -> Result<Self> {
        check_grid(img, grid_size)?;
        let mut features = Vec::with_capacity(grid_size * grid_size);
        for cy in 0..grid_size {
            for cx in 0..grid_size {
                features.push(features_unchecked(img, (cx, cy), grid_size, spec));
            }
        }
        Ok(Self {
            boxes: cell_boxes(img.width(), img.height(), grid_size),
            features,
        })
    }
}

/// Scores every cell and class, keeps those at or above `score_threshold`,
/// then applies class-wise NMS.
pub fn detect(model: &DetectorModel, img: &ImageRgb, score_threshold: f64) -> Result<Vec<Detection>> {
    model.validate()?;
    let cells = CellFeatures::compute(img, model.grid_size, &model.feature_spec)?;
    Ok(detect_cells(model, &cells, score_threshold))
}

pub(crate) fn detect_cells(model: &DetectorModel, cells: &CellFeatures, score_threshold: f64) -> Vec<Detection> {
    let mut dets = Vec::new();
    for (bbox, scores) in cells.boxes.iter().zip(model.cell_scores(cells)) {
        for (class_id, score) in scores.into_iter().enumerate() {
            if score >= score_threshold {
                dets.push(Detection {
                    bbox: *bbox,
                    class_id,
                    score,
                });
            }
        }
    }
    nms(&dets, DETECT_NMS_IOU)
}

/// `[cell][class]` targets: positive iff the cell overlaps a target of that
/// class with IoU at least [`CELL_POSITIVE_IOU`].
pub fn training_labels(cell_boxes: &[BBox], num_classes: usize, targets: &[GroundTruthBox]) -> Vec<Vec<bool>> {
    cell_boxes
        .iter()
        .map(|cell| {
            (0..num_classes)
                .map(|k| {
                    targets
                        .iter()
                        .any(|t| t.class_id == k && iou(cell, &t.bbox) >= CELL_POSITIVE_IOU)
                })
                .collect()
        })
        .collect()
}

fn prepare(model: &DetectorModel, img: &ImageRgb, targets: &[GroundTruthBox]) -> Result<(CellFeatures, Vec<Vec<bool>>)> {
    model.validate()?;
    if let Some(t) = targets.iter().find(|t| t.class_id >= model.num_classes) {
        return Err(Error::InvalidInput(format!(
            "target class {} outside the model's {} classes",
            t.class_id, model.num_classes
        )));
    }
    let cells = CellFeatures::compute(img, model.grid_size, &model.feature_spec)?;
    let labels = training_labels(&cells.boxes, model.num_classes, targets);
    Ok((cells, labels))
}

fn loss_on(model: &DetectorModel, cells: &CellFeatures, labels: &[Vec<bool>]) -> f64 {
    let mut total = 0.0;
    for (f, y) in cells.features.iter().zip(labels) {
        for (k, &pos) in y.iter().enumerate() {
            let z = model.logit(k, f);
            total += softplus(z) - if pos { z } else { 0.0 };
        }
    }
    total / (cells.features.len() * model.num_classes) as f64
}

fn gradient_on(model: &DetectorModel, cells: &CellFeatures, labels: &[Vec<bool>]) -> Vec<f64> {
    let s = model.stride();
    let norm = (cells.features.len() * model.num_classes) as f64;
    let mut grad = vec![0.0; model.params.len()];
    for (f, y) in cells.features.iter().zip(labels) {
        for (k, &pos) in y.iter().enumerate() {
            let r = (logistic(model.logit(k, f)) - if pos { 1.0 } else { 0.0 }) / norm;
            let g = &mut grad[k * s..(k + 1) * s];
            for (gi, fi) in g.iter_mut().zip(f) {
                *gi += r * fi;
            }
            g[s - 1] += r;
        }
    }
    grad
}

/// Mean binary cross-entropy over all cells and classes.
pub fn loss(model: &DetectorModel, img: &ImageRgb, targets: &[GroundTruthBox]) -> Result<f64> {
    let (cells, labels) = prepare(model, img, targets)?;
    Ok(loss_on(model, &cells, &labels))
}

/// Analytic gradient of [`loss`] with respect to `model.params`.
pub fn gradient(model: &DetectorModel, img: &ImageRgb, targets: &[GroundTruthBox]) -> Result<Vec<f64>> {
    let (cells, labels) = prepare(model, img, targets)?;
    Ok(gradient_on(model, &cells, &labels))
}

/// One full-frame gradient step.
pub fn sgd_step(model: &DetectorModel, img: &ImageRgb, targets: &[GroundTruthBox], lr: f64) -> Result<DetectorModel> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(crate::error::invalid_param("lr", format!("must be >= 0, got {lr}")));
    }
    let grad = gradient(model, img, targets)?;
    let mut next = model.clone();
    for (p, g) in next.params.iter_mut().zip(grad) {
        *p -= lr * g;
    }
    Ok(next)
}
