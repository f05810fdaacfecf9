use std::collections::BTreeMap;

use rayon::prelude::*;

use super::composite::{composite_distance, CompositeFeature};
use crate::error::{Error, Result};
use crate::eval::UNKNOWN;

/// Per-class acceptance thresholds on the nearest-neighbor distance: a match
/// with label `c` at distance `d` is accepted iff `d <= threshold(c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSet {
    thresholds: BTreeMap<String, f64>,
}

impl ThresholdSet {
    pub fn new(thresholds: BTreeMap<String, f64>) -> Result<Self> {
        if thresholds.values().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("thresholds must be finite".into()));
        }
        if thresholds.contains_key(UNKNOWN) {
            return Err(Error::InvalidLabel(format!("{UNKNOWN} cannot carry a threshold")));
        }
        Ok(Self { thresholds })
    }

    /// The same threshold for every class.
    pub fn uniform<S: AsRef<str>>(classes: &[S], value: f64) -> Result<Self> {
        Self::new(classes.iter().map(|c| (c.as_ref().to_string(), value)).collect())
    }

    pub fn get(&self, class: &str) -> Option<f64> {
        self.thresholds.get(class).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.thresholds.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn accepts(&self, class: &str, distance: f64) -> bool {
        self.get(class).is_some_and(|t| distance <= t)
    }
}

/// A labeled gallery item.
pub type Labeled = (String, CompositeFeature);

#[derive(Debug, Clone, PartialEq)]
pub struct NnMatch {
    /// Index of the nearest gallery item.
    pub index: usize,
    pub label: String,
    pub distance: f64,
}

/// Nearest gallery item; equal distances resolve to the lexically lowest
/// label, then the lowest index.
pub fn nearest(query: &CompositeFeature, gallery: &[Labeled]) -> Result<NnMatch> {
    if gallery.is_empty() {
        return Err(Error::EmptyInput("nearest-neighbor gallery is empty"));
    }
    let distances = gallery
        .par_iter()
        .map(|(_, g)| composite_distance(query, g))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for i in 1..gallery.len() {
        let (d, b) = (distances[i], distances[best]);
        if d < b || (d == b && gallery[i].0 < gallery[best].0) {
            best = i;
        }
    }
    Ok(NnMatch {
        index: best,
        label: gallery[best].0.clone(),
        distance: distances[best],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnPrediction {
    /// Predicted class, or `UNKNOWN` when the match was rejected.
    pub label: String,
    pub neighbor: NnMatch,
}

pub fn nn_classify(query: &CompositeFeature, gallery: &[Labeled], thresholds: &ThresholdSet) -> Result<NnPrediction> {
    let neighbor = nearest(query, gallery)?;
    let label = if thresholds.accepts(&neighbor.label, neighbor.distance) {
        neighbor.label.clone()
    } else {
        UNKNOWN.to_string()
    };
    Ok(NnPrediction { label, neighbor })
}
