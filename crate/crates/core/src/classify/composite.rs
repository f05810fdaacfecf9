use std::fmt;
use std::str::FromStr;

use crate::dissimilarity::{emd, ground_distance_for, Measure};
use crate::error::{Error, Result};
use crate::histogram::{Binning, FeatureHistogram};

/// Tolerance on the sum of part weights.
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartKind {
    Rgb,
    Hsv,
    Bovw,
}

impl PartKind {
    /// Measure used when the configuration does not name one.
    pub fn default_measure(self) -> Measure {
        match self {
            PartKind::Rgb => Measure::Jeffrey,
            PartKind::Hsv => Measure::Bhattacharyya,
            PartKind::Bovw => Measure::Minkowski(1.0),
        }
    }
}

impl fmt::Display for PartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartKind::Rgb => "rgb",
            PartKind::Hsv => "hsv",
            PartKind::Bovw => "bovw",
        })
    }
}

impl FromStr for PartKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(PartKind::Rgb),
            "hsv" => Ok(PartKind::Hsv),
            "bovw" => Ok(PartKind::Bovw),
            _ => Err(Error::Config(format!("unknown feature part {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartSpec {
    pub kind: PartKind,
    pub measure: Measure,
    pub weight: f64,
}

/// Which parts make up a composite feature, and how each is compared.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    parts: Vec<PartSpec>,
}

impl FeatureConfig {
    /// Parts are kept in `rgb, hsv, bovw` order. Weights must be non-negative
    /// and sum to one.
    pub fn new(mut parts: Vec<PartSpec>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Config("a feature configuration needs at least one part".into()));
        }
        parts.sort_by_key(|p| p.kind);
        if parts.windows(2).any(|w| w[0].kind == w[1].kind) {
            return Err(Error::Config("feature parts must be distinct".into()));
        }
        if parts.iter().any(|p| !(p.weight >= 0.0) || !p.weight.is_finite()) {
            return Err(Error::Config("part weights must be finite and non-negative".into()));
        }
        let sum: f64 = parts.iter().map(|p| p.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Config(format!("part weights sum to {sum}, not 1")));
        }
        Ok(Self { parts })
    }

    /// Equal weights and default measures.
    pub fn equal(kinds: &[PartKind]) -> Result<Self> {
        let w = 1.0 / kinds.len().max(1) as f64;
        Self::new(
            kinds
                .iter()
                .map(|&kind| PartSpec {
                    kind,
                    measure: kind.default_measure(),
                    weight: w,
                })
                .collect(),
        )
    }

    pub fn parts(&self) -> &[PartSpec] {
        &self.parts
    }

    pub fn has(&self, kind: PartKind) -> bool {
        self.parts.iter().any(|p| p.kind == kind)
    }

    /// Stable identifier, e.g. `rgb:jeffrey:0.5+hsv:bhattacharyya:0.5`.
    pub fn id(&self) -> String {
        self.parts
            .iter()
            .map(|p| format!("{}:{}:{}", p.kind, p.measure, p.weight))
            .collect::<Vec<_>>()
            .join("+")
    }

    /// Pairs histograms with this configuration; `parts` must follow the
    /// configuration's part order.
    pub fn compose(&self, parts: Vec<FeatureHistogram>) -> Result<CompositeFeature> {
        if parts.len() != self.parts.len() {
            return Err(Error::ConfigMismatch(format!(
                "{} histograms for {} configured parts",
                parts.len(),
                self.parts.len()
            )));
        }
        Ok(CompositeFeature {
            parts: self.parts.iter().copied().zip(parts).collect(),
        })
    }
}

/// Several histograms describing one image, each with its measure and weight.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeFeature {
    parts: Vec<(PartSpec, FeatureHistogram)>,
}

impl CompositeFeature {
    pub fn parts(&self) -> &[(PartSpec, FeatureHistogram)] {
        &self.parts
    }

    pub fn get(&self, kind: PartKind) -> Option<&FeatureHistogram> {
        self.parts.iter().find(|(s, _)| s.kind == kind).map(|(_, h)| h)
    }

    /// Concatenation of all parts, each scaled by the square root of its
    /// weight, so squared Euclidean distances add up with the part weights.
    pub fn to_vector(&self) -> Vec<f64> {
        self.parts
            .iter()
            .flat_map(|(s, h)| {
                let w = s.weight.sqrt();
                h.bins().iter().map(move |v| v * w)
            })
            .collect()
    }
}

fn part_distance(measure: Measure, a: &FeatureHistogram, b: &FeatureHistogram) -> Result<f64> {
    match (measure, a.binning()) {
        // cross-bin comparison over a 3-D color grid needs grid distances
        (Measure::Emd, binning @ Binning::Color3(_)) => emd(a.bins(), b.bins(), &ground_distance_for(binning)).map(|(d, _)| d),
        _ => measure.eval(a.bins(), b.bins()),
    }
}

/// Weighted sum of per-part dissimilarities.
pub fn composite_distance(a: &CompositeFeature, b: &CompositeFeature) -> Result<f64> {
    if a.parts.len() != b.parts.len() {
        return Err(Error::ConfigMismatch("composite features have different parts".into()));
    }
    let mut total = 0.0;
    for ((sa, ha), (sb, hb)) in a.parts.iter().zip(&b.parts) {
        if sa != sb || ha.binning() != hb.binning() {
            return Err(Error::ConfigMismatch(format!("part {} differs between features", sa.kind)));
        }
        if sa.weight > 0.0 {
            total += sa.weight * part_distance(sa.measure, ha, hb)?;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dissimilarity::{bhattacharyya, jeffrey};

    fn hist(v: &[f64]) -> FeatureHistogram {
        FeatureHistogram::from_values(v.to_vec()).unwrap()
    }

    #[test]
    fn defaults_and_ids() {
        let cfg = FeatureConfig::equal(&[PartKind::Bovw, PartKind::Rgb]).unwrap();
        assert_eq!(cfg.id(), "rgb:jeffrey:0.5+bovw:minkowski:1:0.5");
        assert_eq!(PartKind::Hsv.default_measure(), Measure::Bhattacharyya);
        assert!(FeatureConfig::equal(&[]).is_err());
        assert!(FeatureConfig::equal(&[PartKind::Rgb, PartKind::Rgb]).is_err());
        let bad = PartSpec {
            kind: PartKind::Rgb,
            measure: Measure::Jeffrey,
            weight: 0.7,
        };
        assert!(FeatureConfig::new(vec![bad]).is_err());
    }

    #[test]
    fn distances() {
        let (a1, a2) = (hist(&[0.2, 0.8]), hist(&[0.5, 0.5]));
        let (b1, b2) = (hist(&[0.6, 0.4]), hist(&[0.1, 0.9]));
        let single = FeatureConfig::equal(&[PartKind::Rgb]).unwrap();
        let a = single.compose(vec![a1.clone()]).unwrap();
        let b = single.compose(vec![b1.clone()]).unwrap();
        assert_eq!(composite_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(composite_distance(&a, &b).unwrap(), jeffrey(a1.bins(), b1.bins()).unwrap());

        let two = FeatureConfig::equal(&[PartKind::Rgb, PartKind::Hsv]).unwrap();
        let a = two.compose(vec![a1.clone(), a2.clone()]).unwrap();
        let b = two.compose(vec![b1.clone(), b2.clone()]).unwrap();
        let expected = 0.5 * jeffrey(a1.bins(), b1.bins()).unwrap() + 0.5 * bhattacharyya(a2.bins(), b2.bins()).unwrap();
        assert!((composite_distance(&a, &b).unwrap() - expected).abs() < 1e-15);

        let other = single.compose(vec![a1]).unwrap();
        assert!(matches!(composite_distance(&a, &other), Err(Error::ConfigMismatch(_))));
        assert!(single.compose(vec![]).is_err());
    }

    #[test]
    fn vector_form_carries_weights() {
        let cfg = FeatureConfig::new(vec![
            PartSpec {
                kind: PartKind::Rgb,
                measure: Measure::Euclidean,
                weight: 0.25,
            },
            PartSpec {
                kind: PartKind::Hsv,
                measure: Measure::Euclidean,
                weight: 0.75,
            },
        ])
        .unwrap();
        let f = cfg.compose(vec![hist(&[1.0, 0.0]), hist(&[0.0, 1.0])]).unwrap();
        assert_eq!(f.to_vector(), vec![0.5, 0.0, 0.0, 0.75f64.sqrt()]);
    }
}
