//! Detector-level adaptation: an EMA teacher and a frozen teacher vote on
//! pseudo labels for the student, and the EMA teacher tracks the student.

mod search;
mod voting;

pub use search::{
    alignment_objective, confidence_objective, filter_objective, golden_section_max, search_filter_params,
    search_with_trace, FilterParams, FilterSearchConfig, SearchObjective,
};
pub use voting::{vote_pseudo_labels, VotingConfig};

use crate::detection::{detect, sgd_step, Detection, DetectorModel, GroundTruthBox};
use crate::error::{invalid_param, Error, Result};
use crate::image::ImageRgb;

/// Default EMA momentum per adaptation step.
pub const DEFAULT_MOMENTUM: f64 = 0.99;

/// Student, EMA teacher, and frozen teacher.
///
/// The fixed teacher is set at construction and is only readable afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct TeacherEnsemble {
    student: DetectorModel,
    ema_teacher: DetectorModel,
    fixed_teacher: DetectorModel,
    momentum: f64,
    step: u64,
}

fn check_momentum(m: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return Err(invalid_param("momentum", format!("must be in [0, 1], got {m}")));
    }
    Ok(())
}

impl TeacherEnsemble {
    /// All three models start as copies of the source model.
    pub fn from_source(source: &DetectorModel, momentum: f64) -> Result<Self> {
        Self::from_parts(source.clone(), source.clone(), source.clone(), momentum, 0)
    }

    pub fn from_parts(
        student: DetectorModel,
        ema_teacher: DetectorModel,
        fixed_teacher: DetectorModel,
        momentum: f64,
        step: u64,
    ) -> Result<Self> {
        check_momentum(momentum)?;
        for m in [&student, &ema_teacher, &fixed_teacher] {
            m.validate()?;
        }
        if !student.same_shape(&ema_teacher) || !student.same_shape(&fixed_teacher) {
            return Err(Error::InvalidState(
                "student and teachers must share grid size, class count and features".into(),
            ));
        }
        Ok(Self {
            student,
            ema_teacher,
            fixed_teacher,
            momentum,
            step,
        })
    }

    pub fn student(&self) -> &DetectorModel {
        &self.student
    }

    pub fn ema_teacher(&self) -> &DetectorModel {
        &self.ema_teacher
    }

    pub fn fixed_teacher(&self) -> &DetectorModel {
        &self.fixed_teacher
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    /// Completed adaptation steps.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Replaces the student, e.g. after an external training step.
    pub fn with_student(mut self, student: DetectorModel) -> Result<Self> {
        if !student.same_shape(&self.student) {
            return Err(Error::InvalidState("student shape changed".into()));
        }
        self.student = student;
        Ok(self)
    }
}

/// `teacher <- m * teacher + (1 - m) * student`, elementwise.
pub fn ema_update(ensemble: &TeacherEnsemble) -> Result<TeacherEnsemble> {
    let mut next = ensemble.clone();
    ema_in_place(&mut next)?;
    Ok(next)
}

fn ema_in_place(ens: &mut TeacherEnsemble) -> Result<()> {
    if !ens.student.same_shape(&ens.ema_teacher) {
        return Err(Error::InvalidState("EMA teacher and student shapes differ".into()));
    }
    let m = ens.momentum;
    for (t, s) in ens.ema_teacher.params.iter_mut().zip(&ens.student.params) {
        *t = m * *t + (1.0 - m) * s;
    }
    Ok(())
}

/// Settings of one adaptation step.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdaptConfig {
    pub voting: VotingConfig,
    pub lr: f64,
    /// Score threshold applied to both teachers' detections before voting.
    pub teacher_score_threshold: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            voting: VotingConfig::default(),
            lr: 0.5,
            teacher_score_threshold: 0.05,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        self.voting.validate()?;
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(invalid_param("lr", format!("must be >= 0, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.teacher_score_threshold) {
            return Err(invalid_param(
                "teacher_score_threshold",
                format!("must be in [0, 1], got {}", self.teacher_score_threshold),
            ));
        }
        Ok(())
    }
}

/// Pseudo labels of both teachers voted together on an already filtered frame.
pub fn teacher_pseudo_labels(ensemble: &TeacherEnsemble, filtered: &ImageRgb, cfg: &AdaptConfig) -> Result<Vec<Detection>> {
    let ema_dets = detect(&ensemble.ema_teacher, filtered, cfg.teacher_score_threshold)?;
    let fixed_dets = detect(&ensemble.fixed_teacher, filtered, cfg.teacher_score_threshold)?;
    Ok(vote_pseudo_labels(&ema_dets, &fixed_dets, &cfg.voting))
}

/// One student update: both teachers label the filtered frame, their votes
/// supervise one gradient step of the student, then the EMA teacher moves
/// toward the student. Returns the new ensemble and the pseudo labels used.
pub fn adapt_step(
    ensemble: &TeacherEnsemble,
    frame: &ImageRgb,
    filter: &FilterParams,
    cfg: &AdaptConfig,
) -> Result<(TeacherEnsemble, Vec<Detection>)> {
    cfg.validate()?;
    let filtered = filter.apply(frame)?;
    let pseudo = teacher_pseudo_labels(ensemble, &filtered, cfg)?;
    let targets: Vec<GroundTruthBox> = pseudo
        .iter()
        .map(|d| GroundTruthBox {
            bbox: d.bbox,
            class_id: d.class_id,
        })
        .collect();
    let mut next = ensemble.clone();
    next.student = sgd_step(&ensemble.student, &filtered, &targets, cfg.lr)?;
    ema_in_place(&mut next)?;
    next.step += 1;
    debug_assert_eq!(next.fixed_teacher, ensemble.fixed_teacher);
    Ok((next, pseudo))
}
