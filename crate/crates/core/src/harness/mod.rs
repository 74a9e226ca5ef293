//! File formats, data tooling, training, evaluation and ablations.

pub mod ablation;
pub mod checkpoint;
pub mod classmap;
pub mod config;
pub mod eval;
pub mod features;
pub mod gradcheck;
pub mod manifest;
pub mod metrics;
pub mod probe;
pub mod synth;
pub mod train;

pub use ablation::{format_table, mean_std, run_ablation, AblationRow, AblationRunner, AdaptationTask};
pub use checkpoint::Checkpoint;
pub use classmap::{build_manifest, Benchmark, Listing};
pub use config::{RunConfig, Variant};
pub use eval::{evaluate, global_features, EvalReport, WeightSource};
pub use features::{load_features, write_features};
pub use manifest::{load_dataset, load_manifest_dataset, Dataset, Manifest, ManifestRecord, ManifestRole};
pub use metrics::EpochMetrics;
pub use synth::{generate_synthetic, write_synthetic, DomainSpec, SyntheticDomain, SyntheticSpec};
pub use train::{train, TrainOutcome};
