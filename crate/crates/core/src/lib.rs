//! Visual place classification toolkit.
//!
//! Global color histograms, SIFT-family local features, histogram
//! dissimilarity measures, bag-of-visual-words encoding and thresholded
//! nearest-neighbor / one-vs-all SVM classifiers, plus the evaluation and
//! batch-pipeline machinery built on top of them.

mod binio;
pub mod bovw;
pub mod classify;
pub mod dissimilarity;
pub mod error;
pub mod eval;
pub mod histogram;
pub mod image;
pub mod local;
pub mod pipeline;
pub mod pnm;
pub mod synth;

pub use error::{Error, Result};
