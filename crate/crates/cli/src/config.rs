//! Run configuration: built-in defaults, overridden by a flat TOML file,
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tta_core::adaptation::SearchObjective;
use tta_core::harness::{BenchmarkConfig, DomainTag, Mode, RunnerConfig, SynthConfig};
use tta_core::MixPolicy;

use crate::UsageError;

/// Keys accepted in a config file. Every key is optional; unknown keys are
/// rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub num_classes: Option<usize>,
    pub grid_size: Option<usize>,
    pub frames_per_segment: Option<usize>,
    pub max_objects: Option<usize>,
    pub clip_length: Option<usize>,
    pub schedule: Option<Vec<String>>,
    pub train_frames: Option<usize>,
    pub epochs: Option<usize>,
    pub train_lr: Option<f64>,
    pub policy: Option<String>,
    pub mode: Option<String>,
    pub momentum: Option<f64>,
    pub adapt_lr: Option<f64>,
    pub teacher_score_threshold: Option<f64>,
    pub iou_match: Option<f64>,
    pub agree_keep_score: Option<f64>,
    pub solo_keep_score: Option<f64>,
    pub search_objective: Option<String>,
    pub search_min_gain: Option<f64>,
    pub search_evals: Option<usize>,
    pub search_cycles: Option<usize>,
    pub search_top_k: Option<usize>,
    pub w_range: Option<(f64, f64)>,
    pub gamma_range: Option<(f64, f64)>,
    pub contrast_range: Option<(f64, f64)>,
    pub exposure_range: Option<(f64, f64)>,
    pub eval_score_threshold: Option<f64>,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {}", path.display(), e.message())))
    }
}

/// Source-model training policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Policy {
    /// Fog, low light and clean with probability 1/3 each.
    Mix,
    /// Clean frames only.
    Clean,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Mix => "mix",
            Policy::Clean => "clean",
        }
    }

    pub fn mix_policy(&self, seed: u64) -> MixPolicy {
        match self {
            Policy::Mix => MixPolicy::uniform(seed),
            Policy::Clean => MixPolicy::clean_only(seed),
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mix" => Ok(Policy::Mix),
            "clean" => Ok(Policy::Clean),
            _ => Err(format!("expected mix or clean, got `{s}`")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    /// Explicit seed; commands that read a dataset fall back to its seed.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub train_frames: usize,
    pub epochs: usize,
    pub train_lr: f64,
    pub policy: Policy,
    pub mode: Mode,
    pub runner: RunnerConfig,
    pub dataset: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

fn parse_key<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, UsageError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| UsageError(format!("invalid `{key}`: {e}")))
}

pub fn parse_schedule(key: &str, items: &[String]) -> Result<Vec<DomainTag>, UsageError> {
    items.iter().map(|s| parse_key(key, s.trim())).collect()
}

impl RunConfig {
    /// Defaults of the pinned benchmark, then every key set in `file`.
    pub fn from_file(file: FileConfig) -> Result<Self, UsageError> {
        let bench = BenchmarkConfig::default();
        let mut synth = bench
            .synth_config()
            .map_err(|e| UsageError(format!("default schedule: {e}")))?;
        let mut runner = bench.runner.clone();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        if let Some(v) = file.width {
            synth.width = v;
        }
        if let Some(v) = file.height {
            synth.height = v;
        }
        if let Some(v) = file.num_classes {
            synth.num_classes = v;
        }
        if let Some(v) = file.grid_size {
            synth.grid_size = v;
        }
        if let Some(v) = file.frames_per_segment {
            synth.frames_per_segment = v;
        }
        if let Some(v) = file.max_objects {
            synth.max_objects = v;
        }
        if let Some(v) = file.clip_length {
            synth.clip_length = v;
        }
        if let Some(v) = &file.schedule {
            synth.schedule = parse_schedule("schedule", v)?;
        }
        set(&mut runner.momentum, file.momentum);
        set(&mut runner.adapt.lr, file.adapt_lr);
        set(&mut runner.adapt.teacher_score_threshold, file.teacher_score_threshold);
        set(&mut runner.adapt.voting.iou_match, file.iou_match);
        set(&mut runner.adapt.voting.agree_keep_score, file.agree_keep_score);
        set(&mut runner.adapt.voting.solo_keep_score, file.solo_keep_score);
        set(&mut runner.search.min_gain, file.search_min_gain);
        set(&mut runner.eval_score_threshold, file.eval_score_threshold);
        if let Some(v) = &file.search_objective {
            runner.search.objective = parse_key::<SearchObjective>("search_objective", v)?;
        }
        if let Some(v) = file.search_evals {
            runner.search.evals_per_axis = v;
        }
        if let Some(v) = file.search_cycles {
            runner.search.cycles = v;
        }
        if let Some(v) = file.search_top_k {
            runner.search.top_k = v;
        }
        if let Some(v) = file.w_range {
            runner.search.w_range = v;
        }
        if let Some(v) = file.gamma_range {
            runner.search.gamma_range = v;
        }
        if let Some(v) = file.contrast_range {
            runner.search.contrast_range = v;
        }
        if let Some(v) = file.exposure_range {
            runner.search.exposure_range = v;
        }
        Ok(Self {
            seed: file.seed,
            synth,
            train_frames: file.train_frames.unwrap_or(bench.train_frames),
            epochs: file.epochs.unwrap_or(bench.epochs),
            train_lr: file.train_lr.unwrap_or(bench.train_lr),
            policy: file.policy.as_deref().map(|p| parse_key("policy", p)).transpose()?.unwrap_or(Policy::Mix),
            mode: file.mode.as_deref().map(|m| parse_key("mode", m)).transpose()?.unwrap_or(Mode::Bilevel),
            runner,
            dataset: file.dataset,
            model: file.model,
        })
    }

    /// Checks every numeric setting and every referenced path.
    pub fn validate(&self) -> Result<(), UsageError> {
        let named = |e: tta_core::Error| UsageError(e.to_string());
        self.runner.validate().map_err(named)?;
        for (key, v) in [
            ("width", self.synth.width),
            ("height", self.synth.height),
            ("num_classes", self.synth.num_classes),
            ("grid_size", self.synth.grid_size),
            ("frames_per_segment", self.synth.frames_per_segment),
            ("max_objects", self.synth.max_objects),
            ("clip_length", self.synth.clip_length),
            ("train_frames", self.train_frames),
        ] {
            if v == 0 {
                return Err(UsageError(format!("invalid `{key}`: must be >= 1")));
            }
        }
        if !(self.train_lr > 0.0 && self.train_lr.is_finite()) {
            return Err(UsageError(format!("invalid `train_lr`: must be > 0, got {}", self.train_lr)));
        }
        for (key, path) in [("dataset", &self.dataset), ("model", &self.model)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(UsageError(format!("invalid `{key}`: {} is not a file", p.display())));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, UsageError> {
        let file: FileConfig = toml::from_str(text).map_err(|e| UsageError(e.message().to_string()))?;
        RunConfig::from_file(file)
    }

    #[test]
    fn empty_file_gives_benchmark_defaults() {
        let cfg = parse("").unwrap();
        let bench = BenchmarkConfig::default();
        assert_eq!(cfg.synth, bench.synth_config().unwrap());
        assert_eq!(cfg.runner, bench.runner);
        assert_eq!(cfg.mode, Mode::Bilevel);
        cfg.validate().unwrap();
    }

    #[test]
    fn keys_override_defaults() {
        let cfg = parse(
            "seed = 3\nwidth = 96\nschedule = [\"clean\", \"fog:2\", \"clean\"]\nmomentum = 0.9\n\
             w_range = [0.0, 0.5]\nsearch_objective = \"top_scores\"\nmode = \"frozen\"\npolicy = \"clean\"",
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(3));
        assert_eq!(cfg.synth.width, 96);
        assert_eq!(cfg.synth.schedule, vec![DomainTag::Clean, DomainTag::Fog(2), DomainTag::Clean]);
        assert_eq!(cfg.runner.momentum, 0.9);
        assert_eq!(cfg.runner.search.w_range, (0.0, 0.5));
        assert_eq!(cfg.runner.search.objective, SearchObjective::TopScores);
        assert_eq!(cfg.mode, Mode::Frozen);
        assert_eq!(cfg.policy, Policy::Clean);
    }

    #[test]
    fn unknown_and_invalid_keys_are_named() {
        let err = parse("widht = 3").unwrap_err();
        assert!(err.0.contains("widht"), "{}", err.0);
        let err = parse("mode = \"online\"").unwrap_err();
        assert!(err.0.contains("mode"), "{}", err.0);
        let err = parse("momentum = 1.5").unwrap().validate().unwrap_err();
        assert!(err.0.contains("momentum"), "{}", err.0);
        let err = parse("dataset = \"/no/such/manifest.txt\"").unwrap().validate().unwrap_err();
        assert!(err.0.contains("dataset"), "{}", err.0);
    }
}
