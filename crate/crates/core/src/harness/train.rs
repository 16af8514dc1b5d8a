//! Source training with optional fog / low-light augmentation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Frame;
use crate::corruption::{CorruptionSampler, MixPolicy};
use crate::detection::{sgd_step, CellFeatures, DetectorModel};
use crate::error::{invalid_param, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub grid_size: usize,
    pub num_classes: usize,
    pub epochs: usize,
    pub lr: f64,
    pub policy: MixPolicy,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size == 0 {
            return Err(invalid_param("grid_size", "must be >= 1"));
        }
        if self.num_classes == 0 {
            return Err(invalid_param("num_classes", "must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid_param("lr", format!("must be > 0, got {}", self.lr)));
        }
        self.policy.validate()
    }
}

/// Per-image SGD over shuffled epochs; each visit draws a fresh corruption
/// from the policy. A trained model also records the mean cell features of
/// the uncorrupted training frames. Fully determined by the frames and `cfg`.
pub fn mix_train(frames: &[Frame], cfg: &TrainConfig) -> Result<DetectorModel> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if let Some(f) = frames.iter().find(|f| f.gt.boxes.iter().any(|b| b.class_id >= cfg.num_classes)) {
        return Err(Error::InvalidInput(format!(
            "frame {} has a class id outside 0..{}",
            f.id, cfg.num_classes
        )));
    }
    let mut model = DetectorModel::zeros(cfg.grid_size, cfg.num_classes);
    if cfg.epochs == 0 {
        return Ok(model);
    }
    let mut sampler = CorruptionSampler::new(cfg.policy)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.policy.rng_seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..frames.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        for &i in &order {
            let frame = &frames[i];
            let img = sampler.next_corruption().apply(&frame.image)?.quantized();
            model = sgd_step(&model, &img, &frame.gt.boxes, cfg.lr)?;
        }
    }
    model.source_stats = Some(source_statistics(frames, &model)?);
    Ok(model)
}

/// Mean cell feature vector over `frames` under `model`'s grid and features.
pub fn source_statistics(frames: &[Frame], model: &DetectorModel) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; model.feature_spec.dim()];
    for f in frames {
        let mean = CellFeatures::compute(&f.image, model.grid_size, &model.feature_spec)?.mean();
        acc.iter_mut().zip(&mean).for_each(|(a, v)| *a += v);
    }
    acc.iter_mut().for_each(|a| *a /= frames.len() as f64);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::synth_training_set;

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            grid_size: 8,
            num_classes: 3,
            epochs,
            lr: 0.5,
            policy: MixPolicy::uniform(1),
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let data = synth_training_set(1, 64, 64, 3, 8, 3).unwrap();
        let m = mix_train(&data.segments[0].frames, &cfg(0)).unwrap();
        assert_eq!(m, DetectorModel::zeros(8, 3));
    }

    #[test]
    fn training_is_deterministic_and_moves_parameters() {
        let data = synth_training_set(1, 64, 64, 3, 8, 6).unwrap();
        let frames = &data.segments[0].frames;
        let a = mix_train(frames, &cfg(2)).unwrap();
        assert_eq!(a, mix_train(frames, &cfg(2)).unwrap());
        assert_ne!(a.params, DetectorModel::zeros(8, 3).params);
        let stats = a.source_stats.as_ref().unwrap();
        assert_eq!(stats.len(), 14);
        // histogram part of a mean feature vector is a distribution
        assert!((stats[6..].iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(mix_train(&[], &cfg(1)).is_err());
        let data = synth_training_set(1, 64, 64, 3, 8, 2).unwrap();
        let bad = TrainConfig { num_classes: 1, ..cfg(1) };
        assert!(mix_train(&data.segments[0].frames, &bad).is_err());
        let bad = TrainConfig { lr: 0.0, ..cfg(1) };
        assert!(mix_train(&data.segments[0].frames, &bad).is_err());
    }
}
