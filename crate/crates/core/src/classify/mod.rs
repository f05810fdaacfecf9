//! Room classification: thresholded nearest neighbor over composite
//! histograms with GA-tuned rejection thresholds, and one-vs-all kernel SVMs.

mod composite;
mod ga;
mod kernel;
mod nn;
mod svm;

pub use composite::{composite_distance, CompositeFeature, FeatureConfig, PartKind, PartSpec};
pub use ga::{ga_optimize_matches, ga_optimize_thresholds, GaOutcome, GaParams, ValidationMatch};
pub use kernel::{gram_matrix, kernel, median_heuristic, KernelSpec, MEDIAN_SAMPLE};
pub use nn::{nearest, nn_classify, Labeled, NnMatch, NnPrediction, ThresholdSet};
pub use svm::{
    ova_predict, ova_train, svm_train, BinarySvm, Machine, SvmModel, DEFAULT_C, MODEL_MAGIC, MODEL_VERSION, SMO_TOLERANCE,
};
