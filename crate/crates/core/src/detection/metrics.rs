//! COCO-style average precision.
//!
//! Detections of one class are ranked by descending score; ties are ordered
//! by frame index, then box coordinates, then insertion order. Each detection
//! is matched to the unmatched ground-truth box of the same frame and class
//! with the highest IoU at or above the threshold. Precision and recall are
//! read only at the end of each run of equal scores, so the result does not
//! depend on how tied detections were inserted. AP is the mean interpolated
//! precision at the 101 recall points `0, 0.01, ..., 1`.

use super::boxes::{iou, Detection, GroundTruthFrame};
use crate::error::{Error, Result};

pub const RECALL_POINTS: usize = 101;

/// `0.50, 0.55, ..., 0.95`.
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * f64::from(i)).collect()
}

fn check_frames(dets: &[Vec<Detection>], gts: &[GroundTruthFrame]) -> Result<()> {
    if dets.len() != gts.len() {
        return Err(Error::InvalidInput(format!(
            "{} detection frames but {} ground-truth frames",
            dets.len(),
            gts.len()
        )));
    }
    Ok(())
}

/// AP of `class_id` at one IoU threshold, or `None` when the class has no
/// ground truth in any frame.
pub fn average_precision(
    dets: &[Vec<Detection>],
    gts: &[GroundTruthFrame],
    class_id: usize,
    iou_threshold: f64,
) -> Result<Option<f64>> {
    check_frames(dets, gts)?;
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(crate::error::invalid_param(
            "iou_threshold",
            format!("must be in (0, 1], got {iou_threshold}"),
        ));
    }
    let num_gt: usize = gts.iter().map(|g| g.count_class(class_id)).sum();
    if num_gt == 0 {
        return Ok(None);
    }

    let mut ranked: Vec<(usize, usize)> = dets
        .iter()
        .enumerate()
        .flat_map(|(f, ds)| {
            ds.iter()
                .enumerate()
                .filter(|(_, d)| d.class_id == class_id)
                .map(move |(i, _)| (f, i))
        })
        .collect();
    ranked.sort_by(|&(fa, ia), &(fb, ib)| {
        let (a, b) = (&dets[fa][ia], &dets[fb][ib]);
        b.score
            .total_cmp(&a.score)
            .then(fa.cmp(&fb))
            .then_with(|| a.bbox.canonical_cmp(&b.bbox))
            .then(ia.cmp(&ib))
    });

    let mut matched: Vec<Vec<bool>> = gts.iter().map(|g| vec![false; g.boxes.len()]).collect();
    let mut tp = 0usize;
    // (recall, precision) at the end of each equal-score run
    let mut curve: Vec<(f64, f64)> = Vec::new();
    for (n, &(f, i)) in ranked.iter().enumerate() {
        let d = &dets[f][i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts[f].boxes.iter().enumerate() {
            if gt.class_id != class_id || matched[f][g] {
                continue;
            }
            let v = iou(&d.bbox, &gt.bbox);
            if v >= iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            matched[f][g] = true;
            tp += 1;
        }
        let run_ends = ranked
            .get(n + 1)
            .is_none_or(|&(nf, ni)| dets[nf][ni].score != d.score);
        if run_ends {
            curve.push((tp as f64 / num_gt as f64, tp as f64 / (n + 1) as f64));
        }
    }

    // precision envelope: best precision at any recall to the right
    for k in (0..curve.len().saturating_sub(1)).rev() {
        curve[k].1 = curve[k].1.max(curve[k + 1].1);
    }
    let mut total = 0.0;
    let mut k = 0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        while k < curve.len() && curve[k].0 < level {
            k += 1;
        }
        if k < curve.len() {
            total += curve[k].1;
        }
    }
    Ok(Some(total / RECALL_POINTS as f64))
}

/// Mean AP over the classes that have ground truth and over `iou_thresholds`,
/// on a 0-100 scale.
pub fn mean_ap(
    dets: &[Vec<Detection>],
    gts: &[GroundTruthFrame],
    num_classes: usize,
    iou_thresholds: &[f64],
) -> Result<f64> {
    check_frames(dets, gts)?;
    if iou_thresholds.is_empty() {
        return Err(crate::error::invalid_param("iou_thresholds", "must not be empty"));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for class_id in 0..num_classes {
        for &t in iou_thresholds {
            if let Some(ap) = average_precision(dets, gts, class_id, t)? {
                sum += ap;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::UndefinedMetric(
            "no ground-truth boxes in any frame".to_string(),
        ));
    }
    Ok(100.0 * sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::super::boxes::{BBox, GroundTruthBox};
    use super::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn gt(boxes: &[(BBox, usize)]) -> GroundTruthFrame {
        GroundTruthFrame::new(
            boxes
                .iter()
                .map(|&(bbox, class_id)| GroundTruthBox { bbox, class_id })
                .collect(),
        )
    }

    fn det(bbox: BBox, class_id: usize, score: f64) -> Detection {
        Detection { bbox, class_id, score }
    }

    #[test]
    fn perfect_single_detection() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        let ap = average_precision(&[vec![det(g, 0, 0.9)]], &[gt(&[(g, 0)])], 0, 0.5).unwrap();
        assert_eq!(ap, Some(1.0));
    }

    #[test]
    fn low_iou_detection_scores_zero() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        // IoU 0.3: 30 / 100
        let d = b(0.0, 0.0, 10.0, 3.0);
        assert!((iou(&g, &d) - 0.3).abs() < 1e-12);
        let ap = average_precision(&[vec![det(d, 0, 0.9)]], &[gt(&[(g, 0)])], 0, 0.5).unwrap();
        assert_eq!(ap, Some(0.0));
    }

    #[test]
    fn false_positive_ranked_first_halves_ap() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        let dets = vec![det(b(50.0, 50.0, 60.0, 60.0), 0, 0.9), det(g, 0, 0.4)];
        let ap = average_precision(&[dets], &[gt(&[(g, 0)])], 0, 0.5).unwrap().unwrap();
        assert!((ap - 0.5).abs() < 1e-12);
    }

    #[test]
    fn class_without_ground_truth_is_excluded() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        let frames = [gt(&[(g, 0)])];
        let dets = [vec![det(g, 0, 0.9), det(g, 1, 0.9)]];
        assert_eq!(average_precision(&dets, &frames, 1, 0.5).unwrap(), None);
        assert_eq!(mean_ap(&dets, &frames, 2, &[0.5]).unwrap(), 100.0);
    }

    #[test]
    fn mean_ap_extremes_and_errors() {
        let g = b(0.0, 0.0, 10.0, 10.0);
        let frames = [gt(&[(g, 0)]), gt(&[(g, 1)])];
        let perfect = [vec![det(g, 0, 0.7)], vec![det(g, 1, 0.7)]];
        assert_eq!(mean_ap(&perfect, &frames, 2, &default_iou_thresholds()).unwrap(), 100.0);
        assert_eq!(mean_ap(&[vec![], vec![]], &frames, 2, &default_iou_thresholds()).unwrap(), 0.0);
        let empty = [GroundTruthFrame::default()];
        assert!(matches!(
            mean_ap(&[vec![]], &empty, 2, &[0.5]),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(mean_ap(&[vec![]], &frames, 2, &[0.5]).is_err());
        assert!(mean_ap(&perfect, &frames, 2, &[]).is_err());
    }

    #[test]
    fn tie_order_does_not_matter() {
        // two equal-score detections competing for the same frame's ground truth
        let g1 = b(0.0, 0.0, 10.0, 10.0);
        let g2 = b(6.0, 0.0, 16.0, 10.0);
        let a = det(b(1.0, 0.0, 11.0, 10.0), 0, 0.5);
        let c = det(b(0.0, 0.0, 10.0, 10.0), 0, 0.5);
        let frames = [gt(&[(g1, 0), (g2, 0)])];
        let x = mean_ap(&[vec![a, c]], &frames, 1, &default_iou_thresholds()).unwrap();
        let y = mean_ap(&[vec![c, a]], &frames, 1, &default_iou_thresholds()).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn default_thresholds() {
        let t = default_iou_thresholds();
        assert_eq!(t.len(), 10);
        assert_eq!(t[0], 0.5);
        assert!((t[9] - 0.95).abs() < 1e-12);
    }
}
