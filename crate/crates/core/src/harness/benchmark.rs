//! The pinned four-mode benchmark: train a clean-only and a mix-trained
//! source model, then run every mode over one synthetic sequence.

use serde::{Deserialize, Serialize};

use super::dataset::{synth_dataset, synth_training_set, DomainSequence, DomainTag, SynthConfig};
use super::metrics::RunMetrics;
use super::runner::{run_sequence, Mode, RunnerConfig, SequenceRun};
use super::train::{mix_train, TrainConfig};
use crate::corruption::MixPolicy;
use crate::detection::DetectorModel;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub num_classes: usize,
    pub frames_per_segment: usize,
    pub schedule: Vec<String>,
    pub train_frames: usize,
    pub grid_size: usize,
    pub epochs: usize,
    pub train_lr: f64,
    pub runner: RunnerConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            width: 64,
            height: 64,
            num_classes: 3,
            frames_per_segment: 40,
            schedule: ["clean", "fog:5", "lowlight:3", "clean"].map(String::from).to_vec(),
            train_frames: 200,
            grid_size: 8,
            epochs: 10,
            train_lr: 2.0,
            runner: RunnerConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn schedule(&self) -> Result<Vec<DomainTag>> {
        self.schedule.iter().map(|s| s.parse()).collect()
    }

    pub fn synth_config(&self) -> Result<SynthConfig> {
        Ok(SynthConfig {
            seed: self.seed,
            width: self.width,
            height: self.height,
            num_classes: self.num_classes,
            frames_per_segment: self.frames_per_segment,
            schedule: self.schedule()?,
            grid_size: self.grid_size,
            ..SynthConfig::default()
        })
    }

    pub fn train_config(&self, policy: MixPolicy) -> TrainConfig {
        TrainConfig {
            grid_size: self.grid_size,
            num_classes: self.num_classes,
            epochs: self.epochs,
            lr: self.train_lr,
            policy,
        }
    }

    /// Source models: `(clean-only, mix-trained)`.
    pub fn train_sources(&self) -> Result<(DetectorModel, DetectorModel)> {
        let train_seed = self.seed.wrapping_add(1);
        let train = synth_training_set(
            train_seed,
            self.width,
            self.height,
            self.num_classes,
            self.grid_size,
            self.train_frames,
        )?;
        let frames = &train.segments[0].frames;
        let clean = mix_train(frames, &self.train_config(MixPolicy::clean_only(train_seed)))?;
        let mix = mix_train(frames, &self.train_config(MixPolicy::uniform(train_seed)))?;
        Ok((clean, mix))
    }

    pub fn sequence(&self) -> Result<DomainSequence> {
        synth_dataset(&self.synth_config()?)?.to_sequence()
    }
}

/// Which source model a mode starts from: the clean-only model for the
/// baseline and detector-only rows, the mix-trained one when image-level
/// adaptation is on.
pub fn source_for(mode: Mode) -> &'static str {
    match mode {
        Mode::Frozen | Mode::DetectorAdapt => "clean",
        Mode::ImageAdapt | Mode::Bilevel => "mix",
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeResult {
    pub mode: Mode,
    pub metrics: RunMetrics,
    pub run: SequenceRun,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub results: Vec<ModeResult>,
}

impl BenchmarkReport {
    pub fn metrics(&self, mode: Mode) -> Option<&RunMetrics> {
        self.results.iter().find(|r| r.mode == mode).map(|r| &r.metrics)
    }
}

pub fn run_benchmark(cfg: &BenchmarkConfig, modes: &[Mode]) -> Result<BenchmarkReport> {
    let sequence = cfg.sequence()?;
    let (clean, mix) = cfg.train_sources()?;
    let mut results = Vec::with_capacity(modes.len());
    for &mode in modes {
        let source = if source_for(mode) == "mix" { &mix } else { &clean };
        let run = run_sequence(source, &sequence, mode, &cfg.runner)?;
        results.push(ModeResult {
            mode,
            metrics: run.metrics,
            run,
        });
    }
    Ok(BenchmarkReport { results })
}
