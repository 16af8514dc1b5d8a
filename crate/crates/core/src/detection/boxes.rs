use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates with positive area.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        if !(x1 < x2 && y1 < y2) || [x1, y1, x2, y2].iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("degenerate box {b:?}")));
        }
        Ok(b)
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn within(&self, width: usize, height: usize) -> bool {
        self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width as f64 && self.y2 <= height as f64
    }

    pub(crate) fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    /// Lexicographic order on coordinates.
    pub(crate) fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.coords()
            .iter()
            .zip(other.coords().iter())
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.area() + b.area() - inter)).min(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundTruthBox {
    pub bbox: BBox,
    pub class_id: usize,
}

/// Ground truth of one frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroundTruthFrame {
    pub boxes: Vec<GroundTruthBox>,
}

impl GroundTruthFrame {
    pub fn new(boxes: Vec<GroundTruthBox>) -> Self {
        Self { boxes }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        for b in &self.boxes {
            if !b.bbox.within(width, height) {
                return Err(Error::InvalidInput(format!(
                    "ground-truth box {:?} outside {width}x{height}",
                    b.bbox
                )));
            }
        }
        Ok(())
    }

    pub fn count_class(&self, class_id: usize) -> usize {
        self.boxes.iter().filter(|b| b.class_id == class_id).count()
    }
}

/// Greedy class-wise non-maximum suppression.
///
/// Detections are visited by descending score (ties keep input order); one is
/// kept iff its IoU with every kept detection of the same class is below
/// `iou_threshold`. The result is in visiting order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = dets[i];
        if kept
            .iter()
            .all(|k| k.class_id != d.class_id || iou(&k.bbox, &d.bbox) < iou_threshold)
        {
            kept.push(d);
        }
    }
    kept
}
