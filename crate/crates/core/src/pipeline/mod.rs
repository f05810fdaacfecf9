//! Batch pipeline: manifests, configuration, per-image feature bundles,
//! model files and the stages that connect them.

mod bundle;
mod commands;
mod config;
mod dataset;
mod manifest;
mod model;

pub use bundle::{source_hash, FeatureBundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use commands::{
    cmd_encode, cmd_evaluate, cmd_features, cmd_predict, cmd_train, cmd_vocab, load_bundles, load_features,
    load_predictions, load_vocab, predictions_from_csv, predictions_to_csv, FeatureStats, Prediction, Workspace,
};
pub use config::{ClassifierKind, KernelChoice, LocalKind, NnThresholds, PipelineConfig};
pub use dataset::{synth_dataset, SynthSpec, ROOM_NAMES};
pub use manifest::{Entry, Manifest, MANIFEST_HEADER};
pub use model::{Model, NnModel, NN_MAGIC, NN_VERSION};
