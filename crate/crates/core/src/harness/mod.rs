//! Continual-domain benchmark: synthetic video segments, mix training, the
//! sequence runner, and the six per-run metrics.

mod benchmark;
mod dataset;
mod metrics;
mod runner;
mod scene;
mod train;

pub use benchmark::{run_benchmark, source_for, BenchmarkConfig, BenchmarkReport, ModeResult};
pub use dataset::{
    load_dataset, synth_dataset, synth_training_set, write_dataset, Dataset, DatasetManifest, DomainSegment,
    DomainSequence, DomainTag, Frame, FrameRecord, SynthConfig,
};
pub use metrics::{compute_metrics, round_metric, RunMetrics, METRIC_DECIMALS};
pub use runner::{run_sequence, run_sequence_from, Mode, RunnerConfig, SequenceRun};
pub use scene::{class_color, render_scene, Background, SceneObject, Shape, MAX_CLASSES};
pub use train::{mix_train, source_statistics, TrainConfig};
