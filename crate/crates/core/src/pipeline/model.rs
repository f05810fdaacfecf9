//! Trained classifier files: an SVM model or a thresholded NN gallery.
//!
//! The NN form is little-endian: magic `PRNN`, `u32` version, configuration
//! id, class/threshold table, then per gallery item its label and one
//! binning string plus `f64` bins per composite part.

use crate::binio::{Reader, Writer};
use crate::classify::{nn_classify, ova_predict, CompositeFeature, FeatureConfig, Labeled, SvmModel, ThresholdSet, MODEL_MAGIC};
use crate::error::{Error, Result};
use crate::histogram::{Binning, FeatureHistogram};

pub const NN_MAGIC: &[u8; 4] = b"PRNN";
pub const NN_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct NnModel {
    pub config_id: String,
    pub thresholds: ThresholdSet,
    pub gallery: Vec<Labeled>,
}

#[derive(Debug, Clone)]
pub enum Model {
    Svm(SvmModel),
    Nn(NnModel),
}

impl NnModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(NN_MAGIC, NN_VERSION);
        w.str(&self.config_id);
        let t: Vec<(&str, f64)> = self.thresholds.iter().collect();
        w.len(t.len());
        for (label, v) in t {
            w.str(label);
            w.f64(v);
        }
        w.len(self.gallery.len());
        for (label, f) in &self.gallery {
            w.str(label);
            for (_, h) in f.parts() {
                w.str(&h.binning().to_string());
                w.f64s(h.bins());
            }
        }
        w.buf
    }

    /// Decodes a gallery; `config` must be the one the model was trained with.
    pub fn from_bytes(bytes: &[u8], config: &FeatureConfig) -> Result<Self> {
        let mut r = Reader::open(bytes, NN_MAGIC, NN_VERSION, "NN model")?;
        let config_id = r.str()?;
        check_config(&config_id, config)?;
        let thresholds = (0..r.len()?)
            .map(|_| Ok((r.str()?, r.f64()?)))
            .collect::<Result<_>>()?;
        let thresholds = ThresholdSet::new(thresholds)?;
        let gallery = (0..r.len()?)
            .map(|_| {
                let label = r.str()?;
                let parts = config
                    .parts()
                    .iter()
                    .map(|_| {
                        let binning: Binning = r.str()?.parse()?;
                        FeatureHistogram::new(r.f64s()?, binning)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((label, config.compose(parts)?))
            })
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            config_id,
            thresholds,
            gallery,
        })
    }
}

fn check_config(model_id: &str, config: &FeatureConfig) -> Result<()> {
    if model_id != config.id() {
        return Err(Error::ConfigMismatch(format!(
            "model trained on {model_id:?}, features from {:?}",
            config.id()
        )));
    }
    Ok(())
}

impl Model {
    pub fn to_bytes(&self) -> Vec<u8> {
        match self {
            Model::Svm(m) => m.to_bytes(),
            Model::Nn(m) => m.to_bytes(),
        }
    }

    /// Dispatches on the file magic.
    pub fn from_bytes(bytes: &[u8], config: &FeatureConfig) -> Result<Self> {
        match bytes.get(..4) {
            Some(m) if m == MODEL_MAGIC => {
                let svm = SvmModel::from_bytes(bytes)?;
                check_config(&svm.config_id, config)?;
                Ok(Model::Svm(svm))
            }
            Some(m) if m == NN_MAGIC => Ok(Model::Nn(NnModel::from_bytes(bytes, config)?)),
            _ => Err(Error::Format("not a model file".into())),
        }
    }

    pub fn config_id(&self) -> &str {
        match self {
            Model::Svm(m) => &m.config_id,
            Model::Nn(m) => &m.config_id,
        }
    }

    /// Predicted label and a score where larger means more confident: the
    /// winning one-vs-all score, or the negated neighbor distance.
    pub fn predict(&self, feature: &CompositeFeature) -> Result<(String, f64)> {
        match self {
            Model::Svm(m) => {
                let (label, scores) = ova_predict(m, &feature.to_vector())?;
                let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Ok((label, best))
            }
            Model::Nn(m) => {
                let p = nn_classify(feature, &m.gallery, &m.thresholds)?;
                Ok((p.label, -p.neighbor.distance))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::PartKind;

    #[test]
    fn nn_roundtrip_and_guard() {
        let cfg = FeatureConfig::equal(&[PartKind::Rgb, PartKind::Bovw]).unwrap();
        let f = |p: f64| {
            cfg.compose(vec![
                FeatureHistogram::new(vec![p, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0 - p], Binning::Color3([2, 2, 2])).unwrap(),
                FeatureHistogram::new(vec![1.0 - p, p], Binning::Bovw(2)).unwrap(),
            ])
            .unwrap()
        };
        let model = NnModel {
            config_id: cfg.id(),
            thresholds: ThresholdSet::uniform(&["a", "b"], 0.3).unwrap(),
            gallery: vec![("a".into(), f(0.1)), ("b".into(), f(0.9))],
        };
        let back = Model::from_bytes(&model.to_bytes(), &cfg).unwrap();
        let Model::Nn(ref nn) = back else { panic!("wrong kind") };
        assert_eq!(nn.gallery, model.gallery);
        assert_eq!(nn.thresholds, model.thresholds);
        assert_eq!(back.predict(&f(0.15)).unwrap().0, "a");
        assert_eq!(back.predict(&f(0.5)).unwrap().0, "UNKNOWN");
        let other = FeatureConfig::equal(&[PartKind::Rgb]).unwrap();
        assert!(matches!(Model::from_bytes(&model.to_bytes(), &other), Err(Error::ConfigMismatch(_))));
        assert!(Model::from_bytes(b"JUNKJUNK", &cfg).is_err());
    }
}
