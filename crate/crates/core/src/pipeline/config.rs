//! Flat `section.key = value` pipeline configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::bovw::{VocabMethod, DEFAULT_K, DEFAULT_SAMPLE_CAP};
use crate::classify::{FeatureConfig, GaParams, KernelSpec, PartKind, PartSpec, DEFAULT_C};
use crate::dissimilarity::Measure;
use crate::error::{Error, Result};
use crate::histogram::{DEFAULT_HSV_BINS, DEFAULT_RGB_BINS};
use crate::local::SiftParams;

/// Which local descriptor feeds the vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalKind {
    Sift,
    RgbSift,
    Asift,
}

impl LocalKind {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "sift" => Ok(LocalKind::Sift),
            "rgbsift" => Ok(LocalKind::RgbSift),
            "asift" => Ok(LocalKind::Asift),
            _ => Err(Error::Config(format!("unknown local descriptor {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LocalKind::Sift => "sift",
            LocalKind::RgbSift => "rgbsift",
            LocalKind::Asift => "asift",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassifierKind {
    Svm,
    /// Thresholded nearest neighbor tuned by the GA.
    Nn,
}

/// How NN rejection thresholds are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnThresholds {
    /// Tuned by the GA on a held-out part of the training set.
    Ga,
    /// Accept every match.
    Open,
}

/// `rbf` alone means the sigma comes from the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelChoice {
    Fixed(KernelSpec),
    RbfMedian,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    pub rgb_bins: [usize; 3],
    pub hsv_bins: [usize; 3],
    pub local: LocalKind,
    pub contrast_threshold: f64,
    pub vocab_k: usize,
    pub vocab_method: VocabMethod,
    pub vocab_distance: Measure,
    pub vocab_threshold: f64,
    pub vocab_max_iter: usize,
    pub vocab_sample_cap: usize,
    pub classifier: ClassifierKind,
    pub kernel: KernelChoice,
    pub c: f64,
    pub nn_thresholds: NnThresholds,
    pub ga: GaParams,
    /// Every n-th training item per class is held out to tune NN thresholds.
    pub validation_stride: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            features: FeatureConfig::equal(&[PartKind::Rgb, PartKind::Hsv, PartKind::Bovw]).expect("valid"),
            rgb_bins: DEFAULT_RGB_BINS,
            hsv_bins: DEFAULT_HSV_BINS,
            local: LocalKind::Sift,
            contrast_threshold: SiftParams::default().contrast_threshold,
            vocab_k: DEFAULT_K,
            vocab_method: VocabMethod::KMeans,
            vocab_distance: Measure::Euclidean,
            vocab_threshold: 0.5,
            vocab_max_iter: 100,
            vocab_sample_cap: DEFAULT_SAMPLE_CAP,
            classifier: ClassifierKind::Svm,
            kernel: KernelChoice::RbfMedian,
            c: DEFAULT_C,
            nn_thresholds: NnThresholds::Ga,
            ga: GaParams::default(),
            validation_stride: 4,
            seed: 0,
        }
    }
}

fn bins(s: &str) -> Result<[usize; 3]> {
    let v: Vec<usize> = s
        .split('x')
        .map(|p| p.trim().parse::<usize>().ok().filter(|n| *n > 0))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Config(format!("bad bin layout {s:?}")))?;
    v.try_into().map_err(|_| Error::Config(format!("bin layout {s:?} needs three axes")))
}

fn num<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {s:?}")))
}

impl PipelineConfig {
    /// Reads `key = value` lines; `#` starts a comment. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {}", n + 1, k.trim())));
            }
        }
        Self::from_pairs(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn from_pairs(mut kv: BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        let mut take = |k: &str| kv.remove(k);

        let kinds: Vec<PartKind> = match take("features.parts") {
            Some(s) => s.split(',').map(|p| p.trim().parse()).collect::<Result<_>>()?,
            None => cfg.features.parts().iter().map(|p| p.kind).collect(),
        };
        let mut specs = Vec::new();
        let mut weights = Vec::new();
        for &kind in &kinds {
            let measure = match take(&format!("features.{kind}.measure")) {
                Some(m) => m.parse()?,
                None => kind.default_measure(),
            };
            weights.push(take(&format!("features.{kind}.weight")));
            specs.push(PartSpec { kind, measure, weight: 0.0 });
        }
        let explicit = weights.iter().filter(|w| w.is_some()).count();
        if explicit != 0 && explicit != weights.len() {
            return Err(Error::Config("give a weight for every part or for none".into()));
        }
        for (spec, w) in specs.iter_mut().zip(&weights) {
            spec.weight = match w {
                Some(w) => num("weight", w)?,
                None => 1.0 / kinds.len().max(1) as f64,
            };
        }
        cfg.features = FeatureConfig::new(specs)?;

        if let Some(v) = take("features.rgb.bins") {
            cfg.rgb_bins = bins(&v)?;
        }
        if let Some(v) = take("features.hsv.bins") {
            cfg.hsv_bins = bins(&v)?;
        }
        if let Some(v) = take("features.local") {
            cfg.local = LocalKind::parse(&v)?;
        }
        if let Some(v) = take("features.contrast_threshold") {
            cfg.contrast_threshold = num("features.contrast_threshold", &v)?;
        }
        if let Some(v) = take("vocab.k") {
            cfg.vocab_k = num("vocab.k", &v)?;
        }
        if let Some(v) = take("vocab.method") {
            cfg.vocab_method = v.parse()?;
        }
        if let Some(v) = take("vocab.distance") {
            cfg.vocab_distance = v.parse()?;
        }
        if let Some(v) = take("vocab.threshold") {
            cfg.vocab_threshold = num("vocab.threshold", &v)?;
        }
        if let Some(v) = take("vocab.max_iter") {
            cfg.vocab_max_iter = num("vocab.max_iter", &v)?;
        }
        if let Some(v) = take("vocab.sample_cap") {
            cfg.vocab_sample_cap = num("vocab.sample_cap", &v)?;
        }
        if let Some(v) = take("classifier.kind") {
            cfg.classifier = match v.as_str() {
                "svm" => ClassifierKind::Svm,
                "nn" => ClassifierKind::Nn,
                _ => return Err(Error::Config(format!("unknown classifier {v:?}"))),
            };
        }
        if let Some(v) = take("classifier.kernel") {
            cfg.kernel = if v == "rbf" { KernelChoice::RbfMedian } else { KernelChoice::Fixed(v.parse()?) };
        }
        if let Some(v) = take("classifier.c") {
            cfg.c = num("classifier.c", &v)?;
        }
        if let Some(v) = take("classifier.thresholds") {
            cfg.nn_thresholds = match v.as_str() {
                "ga" => NnThresholds::Ga,
                "open" => NnThresholds::Open,
                _ => return Err(Error::Config(format!("unknown threshold mode {v:?}"))),
            };
        }
        if let Some(v) = take("ga.population") {
            cfg.ga.population = num("ga.population", &v)?;
        }
        if let Some(v) = take("ga.mutation") {
            cfg.ga.mutation_rate = num("ga.mutation", &v)?;
        }
        if let Some(v) = take("ga.crossover") {
            cfg.ga.crossover_rate = num("ga.crossover", &v)?;
        }
        if let Some(v) = take("ga.generations") {
            cfg.ga.generations = num("ga.generations", &v)?;
        }
        if let Some(v) = take("ga.elitism") {
            cfg.ga.elitism = num("ga.elitism", &v)?;
        }
        if let Some(v) = take("ga.validation_stride") {
            cfg.validation_stride = num("ga.validation_stride", &v)?;
        }
        if let Some(v) = take("run.seed") {
            cfg.seed = num("run.seed", &v)?;
        }
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!("unknown configuration key {k:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_k == 0 || self.vocab_max_iter == 0 || self.vocab_sample_cap == 0 {
            return Err(Error::Config("vocabulary size, iterations and sample cap must be positive".into()));
        }
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::Config(format!("C must be positive, got {}", self.c)));
        }
        if self.validation_stride < 2 {
            return Err(Error::Config("ga.validation_stride must be at least 2".into()));
        }
        if !(self.contrast_threshold >= 0.0) {
            return Err(Error::Config("contrast threshold must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sift_params(&self) -> SiftParams {
        SiftParams {
            contrast_threshold: self.contrast_threshold,
            ..SiftParams::default()
        }
    }

    /// Everything that affects per-image feature extraction.
    pub fn extraction_id(&self) -> String {
        let [r0, r1, r2] = self.rgb_bins;
        let [h0, h1, h2] = self.hsv_bins;
        format!(
            "rgb={r0}x{r1}x{r2};hsv={h0}x{h1}x{h2};local={};contrast={:?}",
            self.local.name(),
            self.contrast_threshold
        )
    }

    /// Renders the configuration in the file format `parse` accepts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let kinds: Vec<String> = self.features.parts().iter().map(|p| p.kind.to_string()).collect();
        let _ = writeln!(out, "features.parts = {}", kinds.join(","));
        for p in self.features.parts() {
            let _ = writeln!(out, "features.{}.measure = {}", p.kind, p.measure);
            let _ = writeln!(out, "features.{}.weight = {:?}", p.kind, p.weight);
        }
        let [r0, r1, r2] = self.rgb_bins;
        let [h0, h1, h2] = self.hsv_bins;
        let _ = writeln!(out, "features.rgb.bins = {r0}x{r1}x{r2}");
        let _ = writeln!(out, "features.hsv.bins = {h0}x{h1}x{h2}");
        let _ = writeln!(out, "features.local = {}", self.local.name());
        let _ = writeln!(out, "features.contrast_threshold = {:?}", self.contrast_threshold);
        let _ = writeln!(out, "vocab.k = {}", self.vocab_k);
        let _ = writeln!(out, "vocab.method = {}", self.vocab_method);
        let _ = writeln!(out, "vocab.distance = {}", self.vocab_distance);
        let _ = writeln!(out, "vocab.threshold = {:?}", self.vocab_threshold);
        let _ = writeln!(out, "vocab.max_iter = {}", self.vocab_max_iter);
        let _ = writeln!(out, "vocab.sample_cap = {}", self.vocab_sample_cap);
        let kind = match self.classifier {
            ClassifierKind::Svm => "svm",
            ClassifierKind::Nn => "nn",
        };
        let _ = writeln!(out, "classifier.kind = {kind}");
        match self.kernel {
            KernelChoice::RbfMedian => out.push_str("classifier.kernel = rbf\n"),
            KernelChoice::Fixed(k) => {
                let _ = writeln!(out, "classifier.kernel = {k}");
            }
        }
        let _ = writeln!(out, "classifier.c = {:?}", self.c);
        let mode = match self.nn_thresholds {
            NnThresholds::Ga => "ga",
            NnThresholds::Open => "open",
        };
        let _ = writeln!(out, "classifier.thresholds = {mode}");
        let _ = writeln!(out, "ga.population = {}", self.ga.population);
        let _ = writeln!(out, "ga.mutation = {:?}", self.ga.mutation_rate);
        let _ = writeln!(out, "ga.crossover = {:?}", self.ga.crossover_rate);
        let _ = writeln!(out, "ga.generations = {}", self.ga.generations);
        let _ = writeln!(out, "ga.elitism = {}", self.ga.elitism);
        let _ = writeln!(out, "ga.validation_stride = {}", self.validation_stride);
        let _ = writeln!(out, "run.seed = {}", self.seed);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_roundtrip() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.vocab_k, 100);
        assert_eq!(cfg.features.parts().len(), 3);
        assert_eq!(PipelineConfig::parse(&cfg.to_text()).unwrap(), cfg);
        assert_eq!(PipelineConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn overrides() {
        let text = "# rgb only\nfeatures.parts = rgb\nfeatures.rgb.measure = chi2sym\nvocab.k = 7  # small\n\
                    classifier.kind = nn\nclassifier.kernel = rbf:0.5\nrun.seed = 3\n";
        let cfg = PipelineConfig::parse(text).unwrap();
        assert_eq!(cfg.features.id(), "rgb:chi2sym:1");
        assert_eq!(cfg.vocab_k, 7);
        assert_eq!(cfg.classifier, ClassifierKind::Nn);
        assert_eq!(cfg.kernel, KernelChoice::Fixed(KernelSpec::Rbf { sigma: 0.5 }));
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn rejects_bad_config() {
        for bad in [
            "nonsense",
            "foo.bar = 1",
            "vocab.k = many",
            "vocab.k = 0",
            "features.parts = rgb,hsv\nfeatures.rgb.weight = 1",
            "features.parts = rgb,hsv\nfeatures.rgb.weight = 0.7\nfeatures.hsv.weight = 0.7",
            "features.parts = rgb,rgb",
            "features.rgb.measure = cosine",
            "classifier.kernel = poly",
            "features.hsv.bins = 18x10",
            "vocab.k = 5\nvocab.k = 6",
        ] {
            assert!(PipelineConfig::parse(bad).is_err(), "{bad}");
        }
    }
}
