//! Metrics, manifests, the split-and-repeat experiment protocol and a
//! synthetic corpus generator.

pub mod manifest;
pub mod metrics;
pub mod protocol;
pub mod synth;

pub use manifest::{DatasetManifest, ManifestEntry};
pub use metrics::{average_ranks, median, plcc, srocc};
pub use protocol::{run_experiment, run_experiment_with, split_indices, MetricsReport, Protocol, RunMetrics, Split};
pub use synth::{render, synth_generate, synth_generate_sized, synth_params, SynthParams};
