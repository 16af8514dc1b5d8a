//! Detection primitives, the grid detector, and the mAP evaluator.

mod boxes;
mod detector;
mod metrics;

pub use boxes::{iou, nms, BBox, Detection, GroundTruthBox, GroundTruthFrame};
pub use detector::{
    cell_boxes, cell_rect, detect, extract_features, gradient, loss, sgd_step, training_labels, CellFeatures,
    DetectorModel, FeatureSpec, CELL_POSITIVE_IOU, DETECT_NMS_IOU,
};
pub use metrics::{average_precision, default_iou_thresholds, mean_ap, RECALL_POINTS};
