use crate::detection::{iou, nms, BBox, Detection};
use crate::error::{invalid_param, Result};

/// Thresholds of the two-teacher pseudo-label vote.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VotingConfig {
    /// IoU at which an EMA-teacher and a fixed-teacher box count as the same object.
    pub iou_match: f64,
    /// Minimum fused score for a pair both teachers agree on.
    pub agree_keep_score: f64,
    /// Minimum score for a box only one teacher reports.
    pub solo_keep_score: f64,
}

impl Default for VotingConfig {
    fn default() -> Self {
        Self {
            iou_match: 0.5,
            agree_keep_score: 0.1,
            solo_keep_score: 0.8,
        }
    }
}

impl VotingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("iou_match", self.iou_match),
            ("agree_keep_score", self.agree_keep_score),
            ("solo_keep_score", self.solo_keep_score),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid_param(name, format!("must be in (0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Score-weighted box average; plain average when both scores are zero.
fn fuse(a: &Detection, b: &Detection) -> Detection {
    let total = a.score + b.score;
    let (wa, wb) = if total > 0.0 {
        (a.score / total, b.score / total)
    } else {
        (0.5, 0.5)
    };
    let mix = |p: f64, q: f64| wa * p + wb * q;
    Detection {
        bbox: BBox {
            x1: mix(a.bbox.x1, b.bbox.x1),
            y1: mix(a.bbox.y1, b.bbox.y1),
            x2: mix(a.bbox.x2, b.bbox.x2),
            y2: mix(a.bbox.y2, b.bbox.y2),
        },
        class_id: a.class_id,
        score: 0.5 * total,
    }
}

/// Votes the EMA teacher's and the fixed teacher's detections into pseudo labels.
///
/// Per class, pairs with IoU at or above `iou_match` are matched greedily in
/// descending IoU order and fused; a fused box survives if its score reaches
/// `agree_keep_score`. Unmatched boxes survive only at `solo_keep_score`.
/// The survivors go through class-wise NMS at `iou_match`.
pub fn vote_pseudo_labels(ema_dets: &[Detection], fixed_dets: &[Detection], cfg: &VotingConfig) -> Vec<Detection> {
    let mut classes: Vec<usize> = ema_dets.iter().chain(fixed_dets).map(|d| d.class_id).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut out = Vec::new();
    for class in classes {
        let ema: Vec<&Detection> = ema_dets.iter().filter(|d| d.class_id == class).collect();
        let fixed: Vec<&Detection> = fixed_dets.iter().filter(|d| d.class_id == class).collect();

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, a) in ema.iter().enumerate() {
            for (j, b) in fixed.iter().enumerate() {
                let v = iou(&a.bbox, &b.bbox);
                if v >= cfg.iou_match {
                    pairs.push((v, i, j));
                }
            }
        }
        // stable: equal IoU keeps (ema index, fixed index) order
        pairs.sort_by(|x, y| y.0.total_cmp(&x.0));

        let mut ema_used = vec![false; ema.len()];
        let mut fixed_used = vec![false; fixed.len()];
        for (_, i, j) in pairs {
            if ema_used[i] || fixed_used[j] {
                continue;
            }
            ema_used[i] = true;
            fixed_used[j] = true;
            let fused = fuse(ema[i], fixed[j]);
            if fused.score >= cfg.agree_keep_score {
                out.push(fused);
            }
        }
        let solo = ema
            .iter()
            .zip(&ema_used)
            .chain(fixed.iter().zip(&fixed_used))
            .filter(|(d, &used)| !used && d.score >= cfg.solo_keep_score)
            .map(|(d, _)| **d);
        out.extend(solo);
    }
    nms(&out, cfg.iou_match)
}
