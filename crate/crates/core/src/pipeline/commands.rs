//! The batch stages. Each reads its inputs from and writes its outputs to a
//! [`Workspace`] directory.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::bundle::{source_hash, FeatureBundle};
use super::config::{ClassifierKind, KernelChoice, LocalKind, NnThresholds, PipelineConfig};
use super::manifest::{Entry, Manifest};
use super::model::{Model, NnModel};
use crate::bovw::{encode_image, incremental_vocab, kmeans, subsample, BowVector, VocabMethod, Vocabulary};
use crate::classify::{
    ga_optimize_thresholds, median_heuristic, GaParams, ova_train, CompositeFeature, KernelSpec, Labeled, PartKind, ThresholdSet,
};
use crate::error::{Error, Result};
use crate::eval::{confusion_matrix, pr_curve, write_report, EvalReport, ScoreDirection, UNKNOWN};
use crate::histogram::{hsv_histogram, rgb_histogram, Binning, FeatureHistogram};
use crate::local::{extract_asift, extract_rgb_sift, extract_sift, AsiftParams};
use crate::pnm::decode_pnm;

/// Where every stage keeps its artifacts.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn features_dir(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn bow_dir(&self) -> PathBuf {
        self.root.join("bow")
    }

    pub fn vocab_path(&self) -> PathBuf {
        self.root.join("vocab.bin")
    }

    pub fn model_path(&self) -> PathBuf {
        self.root.join("model.bin")
    }

    pub fn predictions_path(&self) -> PathBuf {
        self.root.join("predictions.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    /// Artifact stem for an image: file stem plus a digest of the full path,
    /// so equal file names in different folders do not collide.
    pub fn stem(entry: &Entry) -> String {
        let digest = Sha256::digest(entry.path.to_string_lossy().as_bytes());
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        let name = entry.path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        format!("{name}-{hex}")
    }

    pub fn bundle_path(&self, entry: &Entry) -> PathBuf {
        self.features_dir().join(format!("{}.prfb", Self::stem(entry)))
    }

    pub fn bow_path(&self, entry: &Entry) -> PathBuf {
        self.bow_dir().join(format!("{}.csv", Self::stem(entry)))
    }
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FeatureStats {
    pub written: usize,
    pub unchanged: usize,
    pub failed: usize,
}

enum Outcome {
    Written,
    Unchanged,
    Failed(Error),
}

fn extract_one(entry: &Entry, cfg: &PipelineConfig, out: &Path) -> Outcome {
    let bytes = match read_file(&entry.path) {
        Ok(b) => b,
        Err(e) => return Outcome::Failed(e),
    };
    let extraction_id = cfg.extraction_id();
    let hash = source_hash(&bytes, &extraction_id);
    if let Ok(existing) = fs::read(out) {
        if FeatureBundle::peek_hash(&existing).is_ok_and(|h| h == hash) {
            return Outcome::Unchanged;
        }
    }
    let result = (|| {
        let img = decode_pnm(&bytes)?;
        let [r0, r1, r2] = cfg.rgb_bins;
        let [h0, h1, h2] = cfg.hsv_bins;
        let sift = cfg.sift_params();
        let local = match cfg.local {
            LocalKind::Sift => extract_sift(&img.to_grayscale(), &sift)?,
            LocalKind::RgbSift => extract_rgb_sift(&img, &sift)?,
            LocalKind::Asift => extract_asift(
                &img.to_grayscale(),
                &AsiftParams {
                    sift,
                    ..AsiftParams::default()
                },
            )?,
        };
        let bundle = FeatureBundle {
            source_hash: hash,
            extraction_id,
            rgb: rgb_histogram(&img, r0, r1, r2)?,
            hsv: hsv_histogram(&img, h0, h1, h2)?,
            descriptors: local.into_iter().map(|f| f.descriptor).collect(),
        };
        write_file(out, bundle.to_bytes()?)
    })();
    match result {
        Ok(()) => Outcome::Written,
        Err(e) => Outcome::Failed(e),
    }
}

/// Extracts color histograms and local descriptors for every manifest image.
/// Images whose bytes and settings match an existing bundle are skipped;
/// unreadable images are reported and left out.
pub fn cmd_features(manifest: &Manifest, cfg: &PipelineConfig, ws: &Workspace) -> Result<FeatureStats> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no images"));
    }
    let outcomes: Vec<Outcome> = manifest
        .entries()
        .par_iter()
        .map(|e| extract_one(e, cfg, &ws.bundle_path(e)))
        .collect();
    let mut stats = FeatureStats::default();
    for (entry, outcome) in manifest.entries().iter().zip(outcomes) {
        match outcome {
            Outcome::Written => stats.written += 1,
            Outcome::Unchanged => stats.unchanged += 1,
            Outcome::Failed(e) => {
                warn!("skipping {}: {e}", entry.path.display());
                // a stale bundle must not outlive its image
                let _ = fs::remove_file(ws.bundle_path(entry));
                stats.failed += 1;
            }
        }
    }
    info!(
        "features: {} written, {} unchanged, {} failed",
        stats.written, stats.unchanged, stats.failed
    );
    if stats.written + stats.unchanged == 0 {
        return Err(Error::EmptyInput("no image could be processed"));
    }
    Ok(stats)
}

/// Bundles of the manifest entries, in manifest order; entries without a
/// bundle are skipped with a warning.
pub fn load_bundles(manifest: &Manifest, cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<(Entry, FeatureBundle)>> {
    let expected = cfg.extraction_id();
    let loaded = manifest
        .entries()
        .par_iter()
        .map(|e| {
            let path = ws.bundle_path(e);
            if !path.exists() {
                return Ok(None);
            }
            let b = FeatureBundle::from_bytes(&read_file(&path)?)?;
            if b.extraction_id != expected {
                return Err(Error::ConfigMismatch(format!(
                    "{} was extracted with {:?}, configuration wants {:?}; rerun features",
                    path.display(),
                    b.extraction_id,
                    expected
                )));
            }
            Ok(Some((e.clone(), b)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(loaded.len());
    for (entry, b) in manifest.entries().iter().zip(loaded) {
        match b {
            Some(b) => out.push(b),
            None => warn!("no features for {}", entry.path.display()),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no feature bundles found; run the features stage first"));
    }
    Ok(out)
}

/// Builds the visual vocabulary from the descriptors of the manifest images.
pub fn cmd_vocab(manifest: &Manifest, cfg: &PipelineConfig, ws: &Workspace) -> Result<Vocabulary> {
    let bundles = load_bundles(manifest, cfg, ws)?;
    let all: Vec<Vec<f64>> = bundles.into_iter().flat_map(|(_, b)| b.descriptors).collect();
    if all.is_empty() {
        return Err(Error::EmptyInput("no local descriptors to cluster"));
    }
    let sample = subsample(&all, cfg.vocab_sample_cap, cfg.seed);
    let start = Instant::now();
    let vocab = match cfg.vocab_method {
        VocabMethod::KMeans => kmeans(&sample, cfg.vocab_k, cfg.vocab_distance, cfg.seed, cfg.vocab_max_iter)?,
        VocabMethod::Incremental => incremental_vocab(&sample, cfg.vocab_threshold, cfg.vocab_distance)?,
    };
    info!(
        "vocabulary: {} words from {} of {} descriptors in {:.2?}",
        vocab.k(),
        sample.len(),
        all.len(),
        start.elapsed()
    );
    write_file(&ws.vocab_path(), vocab.to_bytes())?;
    Ok(vocab)
}

pub fn load_vocab(ws: &Workspace) -> Result<Vocabulary> {
    Vocabulary::from_bytes(&read_file(&ws.vocab_path())?)
}

/// Word histogram of one image; an image without local features gets the
/// uniform histogram, which carries no evidence for any word.
fn bow_of(descriptors: &[Vec<f64>], vocab: &Vocabulary) -> Result<BowVector> {
    if descriptors.is_empty() {
        return FeatureHistogram::new(vec![1.0; vocab.k()], Binning::Bovw(vocab.k()))?.normalize_l1();
    }
    encode_image(descriptors, vocab)
}

/// Writes one BoVW histogram per image. Returns the number encoded.
pub fn cmd_encode(manifest: &Manifest, cfg: &PipelineConfig, ws: &Workspace) -> Result<usize> {
    let vocab = load_vocab(ws)?;
    let bundles = load_bundles(manifest, cfg, ws)?;
    bundles
        .par_iter()
        .map(|(entry, b)| {
            if b.descriptors.is_empty() {
                warn!("{} has no local features; using a flat word histogram", entry.path.display());
            }
            let bow = bow_of(&b.descriptors, &vocab)?;
            write_file(&ws.bow_path(entry), bow.to_csv())
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(bundles.len())
}

/// Composite features of the manifest images, in manifest order.
pub fn load_features(manifest: &Manifest, cfg: &PipelineConfig, ws: &Workspace) -> Result<Vec<(Entry, CompositeFeature)>> {
    let bundles = load_bundles(manifest, cfg, ws)?;
    let needs_bow = cfg.features.has(PartKind::Bovw);
    bundles
        .into_par_iter()
        .map(|(entry, b)| {
            let parts = cfg
                .features
                .parts()
                .iter()
                .map(|p| match p.kind {
                    PartKind::Rgb => b.rgb.normalize_l1(),
                    PartKind::Hsv => b.hsv.normalize_l1(),
                    PartKind::Bovw => {
                        debug_assert!(needs_bow);
                        let path = ws.bow_path(&entry);
                        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                        FeatureHistogram::from_csv(&text)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((entry, cfg.features.compose(parts)?))
        })
        .collect()
}

/// Every `stride`-th item of each class goes to validation.
fn split_validation(items: Vec<Labeled>, stride: usize) -> (Vec<Labeled>, Vec<Labeled>) {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for item in items {
        let n = seen.entry(item.0.clone()).or_default();
        *n += 1;
        if *n % stride == 0 {
            validation.push(item);
        } else {
            train.push(item);
        }
    }
    (train, validation)
}

/// Trains the configured classifier on the manifest images and writes it
/// to `model_path`.
pub fn cmd_train(manifest: &Manifest, cfg: &PipelineConfig, ws: &Workspace, model_path: &Path) -> Result<Model> {
    let items: Vec<Labeled> = load_features(manifest, cfg, ws)?
        .into_iter()
        .map(|(e, f)| (e.label, f))
        .collect();
    let config_id = cfg.features.id();
    let start = Instant::now();
    let model = match cfg.classifier {
        ClassifierKind::Svm => {
            let x: Vec<Vec<f64>> = items.iter().map(|(_, f)| f.to_vector()).collect();
            let labels: Vec<String> = items.iter().map(|(l, _)| l.clone()).collect();
            let kernel = match cfg.kernel {
                KernelChoice::Fixed(k) => k,
                KernelChoice::RbfMedian => KernelSpec::Rbf {
                    sigma: median_heuristic(&x, cfg.seed)?,
                },
            };
            info!("training one-vs-all SVM, kernel {kernel}, C = {}", cfg.c);
            Model::Svm(ova_train(&x, &labels, kernel, cfg.c, &config_id)?)
        }
        ClassifierKind::Nn => {
            let classes: Vec<String> = manifest.classes();
            let thresholds = match cfg.nn_thresholds {
                NnThresholds::Open => ThresholdSet::uniform(&classes, f64::MAX)?,
                NnThresholds::Ga => {
                    let (train, validation) = split_validation(items.clone(), cfg.validation_stride);
                    if train.is_empty() || validation.is_empty() {
                        return Err(Error::NotEnoughPoints {
                            needed: cfg.validation_stride,
                            have: items.len(),
                        });
                    }
                    let params = GaParams {
                        seed: cfg.seed,
                        ..cfg.ga.clone()
                    };
                    let outcome = ga_optimize_thresholds(&train, &validation, &params)?;
                    info!("threshold search: validation F = {:.4}", outcome.best_fitness);
                    outcome.thresholds
                }
            };
            Model::Nn(NnModel {
                config_id,
                thresholds,
                gallery: items,
            })
        }
    };
    info!("trained in {:.2?}", start.elapsed());
    write_file(model_path, model.to_bytes())?;
    Ok(model)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Splits one CSV record, honoring double-quoted fields.
fn csv_split(line: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match (c, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', _) => quoted = !quoted,
            (',', false) => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub path: PathBuf,
    pub label: String,
    pub score: f64,
}

pub fn predictions_to_csv(predictions: &[Prediction]) -> String {
    let mut out = String::from("path,label,score\n");
    for p in predictions {
        out.push_str(&format!(
            "{},{},{:.6}\n",
            csv_field(&p.path.to_string_lossy()),
            csv_field(&p.label),
            p.score
        ));
    }
    out
}

pub fn predictions_from_csv(text: &str) -> Result<Vec<Prediction>> {
    let mut lines = text.lines();
    if lines.next() != Some("path,label,score") {
        return Err(Error::Format("predictions file must start with path,label,score".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f = csv_split(l);
            let [path, label, score] = &f[..] else {
                return Err(Error::Format(format!("bad prediction row {l:?}")));
            };
            Ok(Prediction {
                path: PathBuf::from(path),
                label: label.clone(),
                score: score.parse().map_err(|_| Error::Format(format!("bad score in {l:?}")))?,
            })
        })
        .collect()
}

/// Classifies the manifest images with a saved model and writes
/// `path,label,score` rows to `out`.
pub fn cmd_predict(
    manifest: &Manifest,
    cfg: &PipelineConfig,
    ws: &Workspace,
    model_path: &Path,
    out: &Path,
) -> Result<Vec<Prediction>> {
    let model = Model::from_bytes(&read_file(model_path)?, &cfg.features)?;
    let feats = load_features(manifest, cfg, ws)?;
    let predictions = feats
        .par_iter()
        .map(|(entry, f)| {
            let (label, score) = model.predict(f)?;
            Ok(Prediction {
                path: entry.path.clone(),
                label,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_file(out, predictions_to_csv(&predictions))?;
    Ok(predictions)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    predictions_from_csv(&text)
}

/// Scores predictions against the manifest labels. Images without a
/// prediction count as rejected.
pub fn cmd_evaluate(manifest: &Manifest, predictions: &[Prediction], out_dir: &Path) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::EmptyInput("manifest has no images"));
    }
    let by_path: HashMap<&Path, &Prediction> = predictions.iter().map(|p| (p.path.as_path(), p)).collect();
    let mut truths = Vec::with_capacity(manifest.len());
    let mut preds = Vec::with_capacity(manifest.len());
    let mut scored = Vec::new();
    for e in manifest.entries() {
        truths.push(e.label.clone());
        match by_path.get(e.path.as_path()) {
            Some(p) => {
                preds.push(p.label.clone());
                scored.push((p.score, p.label == e.label));
            }
            None => {
                warn!("no prediction for {}; counted as {UNKNOWN}", e.path.display());
                preds.push(UNKNOWN.to_string());
            }
        }
    }
    let mut classes = manifest.classes();
    for p in &preds {
        if p != UNKNOWN && !classes.contains(p) {
            classes.push(p.clone());
        }
    }
    let confusion = confusion_matrix(&preds, &truths, &classes)?;
    let curve = if scored.is_empty() {
        Vec::new()
    } else {
        pr_curve(&scored, ScoreDirection::HigherIsBetter)?
    };
    let report = EvalReport::new(confusion, curve);
    write_report(&report, out_dir)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting() {
        let preds = vec![
            Prediction {
                path: "/a,b/\"x\".ppm".into(),
                label: "Corridor".into(),
                score: 0.5,
            },
            Prediction {
                path: "/plain.ppm".into(),
                label: UNKNOWN.into(),
                score: -1.25,
            },
        ];
        let text = predictions_to_csv(&preds);
        assert_eq!(predictions_from_csv(&text).unwrap(), preds);
        assert!(predictions_from_csv("nope\n").is_err());
    }

    #[test]
    fn validation_split_is_per_class() {
        let cfg = crate::classify::FeatureConfig::equal(&[PartKind::Rgb]).unwrap();
        let f = cfg.compose(vec![FeatureHistogram::from_values(vec![1.0]).unwrap()]).unwrap();
        let items: Vec<Labeled> = (0..12).map(|i| (format!("c{}", i % 2), f.clone())).collect();
        let (train, val) = split_validation(items, 3);
        assert_eq!((train.len(), val.len()), (8, 4));
        assert_eq!(val.iter().filter(|(l, _)| l == "c0").count(), 2);
    }
}
