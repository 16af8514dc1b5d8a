//! Bi-level test-time adaptation for object detection.
//!
//! Image level: a defogging filter and gamma / contrast / exposure filters
//! whose parameters are searched per frame. Detector level: a mean-teacher
//! loop in which an EMA teacher and a frozen teacher vote on pseudo labels
//! that supervise the student. Around both sit fog and low-light synthesis,
//! a small grid detector, COCO-style mAP, and a continual-domain benchmark.

pub mod adaptation;
pub mod corruption;
pub mod defog;
pub mod detection;
pub mod error;
pub mod harness;
pub mod image;
pub mod io;

pub use adaptation::{
    adapt_step, ema_update, search_filter_params, vote_pseudo_labels, AdaptConfig, FilterParams,
    FilterSearchConfig, SearchObjective, TeacherEnsemble, VotingConfig,
};
pub use corruption::{Corruption, CorruptionSampler, FogParams, LowLightParams, MixPolicy};
pub use defog::{DefogParams, TransmissionMap};
pub use detection::{BBox, Detection, DetectorModel, GroundTruthBox, GroundTruthFrame};
pub use error::{Error, Result};
pub use harness::{DomainSegment, DomainSequence, DomainTag, Mode, RunMetrics};
pub use image::{ImageRgb, PixelFilterParams, Rgb};
