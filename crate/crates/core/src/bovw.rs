//! Visual vocabularies and bag-of-visual-words encoding.
//!
//! Two vocabulary builders: Lloyd's k-means with k-means++ seeding, and a
//! single-pass incremental scheme that opens a new word whenever a descriptor
//! is farther than a threshold from every existing word.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::binio::{Reader, Writer};
use crate::dissimilarity::Measure;
use crate::error::{Error, Result};
use crate::histogram::{Binning, FeatureHistogram};

/// Default vocabulary size.
pub const DEFAULT_K: usize = 100;
/// Default cap on descriptors sampled for vocabulary building.
pub const DEFAULT_SAMPLE_CAP: usize = 200_000;

pub const VOCAB_MAGIC: &[u8; 4] = b"PRVB";
pub const VOCAB_VERSION: u32 = 1;

/// Normalized word-frequency vector (`bovw:<k>` binning).
pub type BowVector = FeatureHistogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabMethod {
    KMeans,
    Incremental,
}

impl fmt::Display for VocabMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VocabMethod::KMeans => "kmeans",
            VocabMethod::Incremental => "incremental",
        })
    }
}

impl FromStr for VocabMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(VocabMethod::KMeans),
            "incremental" => Ok(VocabMethod::Incremental),
            _ => Err(Error::Config(format!("unknown vocabulary method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    centers: Vec<Vec<f64>>,
    distance: Measure,
    built_by: VocabMethod,
    seed: u64,
}

impl Vocabulary {
    pub fn new(centers: Vec<Vec<f64>>, distance: Measure, built_by: VocabMethod, seed: u64) -> Result<Self> {
        let dim = centers
            .first()
            .map(Vec::len)
            .ok_or(Error::EmptyInput("vocabulary needs at least one word"))?;
        if centers.iter().any(|c| c.len() != dim) {
            return Err(Error::InvalidParameter("vocabulary words differ in dimension".into()));
        }
        if centers.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("vocabulary words must be finite".into()));
        }
        Ok(Self {
            centers,
            distance,
            built_by,
            seed,
        })
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    pub fn distance(&self) -> Measure {
        self.distance
    }

    pub fn built_by(&self) -> VocabMethod {
        self.built_by
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Binary form: magic `PRVB`, `u32` version, `u32` k, `u32` dim, `u32`
    /// distance-id length and its UTF-8 bytes, `u64` seed, `u8` builder
    /// (0 = k-means, 1 = incremental), then `k * dim` `f32` values; all
    /// little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(VOCAB_MAGIC, VOCAB_VERSION);
        w.len(self.k());
        w.len(self.dim());
        w.str(&self.distance.to_string());
        w.u64(self.seed);
        w.u8(match self.built_by {
            VocabMethod::KMeans => 0,
            VocabMethod::Incremental => 1,
        });
        for v in self.centers.iter().flatten() {
            w.f32(*v as f32);
        }
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, VOCAB_MAGIC, VOCAB_VERSION, "vocabulary")?;
        let k = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let distance: Measure = r.str()?.parse()?;
        let seed = r.u64()?;
        let built_by = match r.u8()? {
            0 => VocabMethod::KMeans,
            1 => VocabMethod::Incremental,
            b => return Err(Error::Format(format!("unknown vocabulary builder tag {b}"))),
        };
        if k.checked_mul(dim).and_then(|n| n.checked_mul(4)).is_none() {
            return Err(Error::Format("vocabulary size overflows".into()));
        }
        let values = (0..k * dim).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<f64>>>()?;
        r.finish()?;
        let centers = values.chunks(dim.max(1)).map(<[f64]>::to_vec).collect();
        Vocabulary::new(centers, distance, built_by, seed)
    }

    /// One row per word, comma-separated.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in &self.centers {
            for (i, v) in c.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

fn point_distance(measure: Measure, a: &[f64], b: &[f64]) -> f64 {
    match measure {
        // fast path, no allocation or validation
        Measure::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        Measure::Minkowski(r) if r == 1.0 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        m => m.eval(a, b).unwrap_or(f64::INFINITY),
    }
}

/// Per-point contribution to the clustering cost: squared distance for
/// Euclidean assignment, the raw distance otherwise.
fn cost_of(measure: Measure, d: f64) -> f64 {
    if measure == Measure::Euclidean {
        d * d
    } else {
        d
    }
}

/// Index of the closest center; ties go to the lowest index.
fn nearest_center(measure: Measure, x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = point_distance(measure, x, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn count_distinct_up_to(points: &[Vec<f64>], limit: usize) -> usize {
    let mut seen = HashSet::new();
    for p in points {
        seen.insert(p.iter().map(|v| v.to_bits()).collect::<Vec<u64>>());
        if seen.len() >= limit {
            break;
        }
    }
    seen.len()
}

/// Result of a k-means run.
#[derive(Debug, Clone)]
pub struct KMeansRun {
    pub vocabulary: Vocabulary,
    /// Clustering cost after each assignment step.
    pub costs: Vec<f64>,
    pub assignments: Vec<usize>,
}

/// Lloyd's k-means. Centers are rounded to `f32` precision at the end so a
/// saved and reloaded vocabulary is identical to the returned one.
pub fn kmeans(descriptors: &[Vec<f64>], k: usize, distance: Measure, seed: u64, max_iter: usize) -> Result<Vocabulary> {
    kmeans_run(descriptors, k, distance, seed, max_iter).map(|r| r.vocabulary)
}

pub fn kmeans_run(descriptors: &[Vec<f64>], k: usize, distance: Measure, seed: u64, max_iter: usize) -> Result<KMeansRun> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if max_iter == 0 {
        return Err(Error::InvalidParameter("max_iter must be at least 1".into()));
    }
    let dim = descriptors
        .first()
        .map(Vec::len)
        .ok_or(Error::EmptyInput("no descriptors to cluster"))?;
    if descriptors.iter().any(|d| d.len() != dim) {
        return Err(Error::InvalidParameter("descriptors differ in dimension".into()));
    }
    let distinct = count_distinct_up_to(descriptors, k);
    if distinct < k {
        return Err(Error::NotEnoughPoints {
            needed: k,
            have: distinct,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = seed_plus_plus(descriptors, k, distance, &mut rng);
    let mut assignments = vec![usize::MAX; descriptors.len()];
    let mut costs = Vec::new();

    for _ in 0..max_iter {
        let nearest: Vec<(usize, f64)> = descriptors
            .par_iter()
            .map(|x| nearest_center(distance, x, &centers))
            .collect();
        let cost: f64 = nearest.iter().map(|&(_, d)| cost_of(distance, d)).sum();
        let changed = nearest.iter().zip(&assignments).any(|(n, &a)| n.0 != a);
        for (a, n) in assignments.iter_mut().zip(&nearest) {
            *a = n.0;
        }
        if let Some(&prev) = costs.last() {
            if distance == Measure::Euclidean {
                debug_assert!(cost <= prev * (1.0 + 1e-12) + 1e-12, "k-means cost rose: {prev} -> {cost}");
            }
        }
        costs.push(cost);
        if !changed {
            break;
        }

        // arithmetic-mean update, summed in index order
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in descriptors.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        for (j, (sum, &n)) in sums.into_iter().zip(&counts).enumerate() {
            if n > 0 {
                centers[j] = sum.into_iter().map(|s| s / n as f64).collect();
            }
        }
        // empty clusters take the point farthest from its center
        let mut taken: HashSet<usize> = HashSet::new();
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = nearest
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken.contains(i))
                .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
                .expect("at least k points");
            taken.insert(far);
            centers[j] = descriptors[far].clone();
        }
    }

    for c in &mut centers {
        c.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
    Ok(KMeansRun {
        vocabulary: Vocabulary::new(centers, distance, VocabMethod::KMeans, seed)?,
        costs,
        assignments,
    })
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, distance: Measure, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = rng.gen_range(0..points.len());
    let mut centers = vec![points[first].clone()];
    let mut weight: Vec<f64> = points
        .par_iter()
        .map(|p| cost_of(distance, point_distance(distance, p, &centers[0])))
        .collect();
    while centers.len() < k {
        let total: f64 = weight.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut idx = weight.iter().rposition(|&w| w > 0.0).expect("positive weight exists");
            for (i, &w) in weight.iter().enumerate() {
                if w > 0.0 && target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[chosen].clone();
        let update: Vec<f64> = points
            .par_iter()
            .map(|p| cost_of(distance, point_distance(distance, p, &c)))
            .collect();
        for (w, u) in weight.iter_mut().zip(update) {
            *w = w.min(u);
        }
        centers.push(c);
    }
    centers
}

fn l1_normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().map(|x| x.abs()).sum();
    if s > 0.0 {
        v.iter().map(|x| x / s).collect()
    } else {
        v.to_vec()
    }
}

/// Single-pass vocabulary: each L1-normalized descriptor either matches a word
/// within `threshold` or becomes a new word. Sensitive to input order.
pub fn incremental_vocab(descriptors: &[Vec<f64>], threshold: f64, distance: Measure) -> Result<Vocabulary> {
    if descriptors.is_empty() {
        return Err(Error::EmptyInput("no descriptors for incremental vocabulary"));
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be >= 0, got {threshold}")));
    }
    let mut words: Vec<Vec<f64>> = Vec::new();
    for d in descriptors {
        let x = l1_normalized(d);
        let known = !words.is_empty() && nearest_center(distance, &x, &words).1 <= threshold;
        if !known {
            words.push(x);
        }
    }
    Vocabulary::new(words, distance, VocabMethod::Incremental, 0)
}

/// Closest word under the vocabulary's distance; ties go to the lowest index.
pub fn quantize(x: &[f64], vocab: &Vocabulary) -> Result<usize> {
    if x.len() != vocab.dim() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: vocab.dim(),
        });
    }
    Ok(nearest_center(vocab.distance, x, &vocab.centers).0)
}

/// Fraction of descriptors assigned to each word.
pub fn encode_image(descriptors: &[Vec<f64>], vocab: &Vocabulary) -> Result<BowVector> {
    if descriptors.is_empty() {
        return Err(Error::EmptyInput("image has no local features to encode"));
    }
    let words = descriptors
        .par_iter()
        .map(|d| quantize(d, vocab))
        .collect::<Result<Vec<_>>>()?;
    let mut counts = vec![0.0; vocab.k()];
    for w in words {
        counts[w] += 1.0;
    }
    FeatureHistogram::new(counts, Binning::Bovw(vocab.k()))?.normalize_l1()
}

/// Seeded uniform subsample of at most `cap` items, original order preserved.
pub fn subsample<T: Clone>(items: &[T], cap: usize, seed: u64) -> Vec<T> {
    if items.len() <= cap {
        return items.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, items.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[[f64; 2]]) -> Vec<Vec<f64>> {
        v.iter().map(|p| p.to_vec()).collect()
    }

    #[test]
    fn k_equal_to_distinct_points_is_exact() {
        let data = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [5.0, 5.0]]);
        let run = kmeans_run(&data, 4, Measure::Euclidean, 3, 50).unwrap();
        assert_eq!(*run.costs.last().unwrap(), 0.0);
        let mut centers = run.vocabulary.centers().to_vec();
        centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(centers, pts(&[[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [5.0, 5.0]]));
    }

    #[test]
    fn too_few_distinct_points() {
        let data = pts(&[[0.0, 0.0], [0.0, 0.0], [1.0, 1.0]]);
        assert!(matches!(
            kmeans(&data, 3, Measure::Euclidean, 0, 10),
            Err(Error::NotEnoughPoints { needed: 3, have: 2 })
        ));
        assert!(kmeans(&data, 2, Measure::Euclidean, 0, 0).is_err());
    }

    #[test]
    fn kmeans_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<Vec<f64>> = (0..300).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
        let a = kmeans(&data, 7, Measure::Euclidean, 99, 30).unwrap();
        let b = kmeans(&data, 7, Measure::Euclidean, 99, 30).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let c = kmeans(&data, 7, Measure::Euclidean, 100, 30).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn incremental_extremes() {
        let data = pts(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.0]]);
        let one = incremental_vocab(&data, f64::INFINITY, Measure::Euclidean).unwrap();
        assert_eq!(one.k(), 1);
        // [2, 0] normalizes onto [1, 0]
        let all = incremental_vocab(&data, 0.0, Measure::Euclidean).unwrap();
        assert_eq!(all.k(), 3);
        assert!(incremental_vocab(&[], 1.0, Measure::Euclidean).is_err());
    }

    #[test]
    fn incremental_depends_on_order() {
        let a = pts(&[[1.0, 0.0], [0.6, 0.4], [0.2, 0.8]]);
        let b = pts(&[[0.6, 0.4], [1.0, 0.0], [0.2, 0.8]]);
        let va = incremental_vocab(&a, 0.6, Measure::Euclidean).unwrap();
        let vb = incremental_vocab(&b, 0.6, Measure::Euclidean).unwrap();
        assert_eq!(va.k(), 2);
        assert_eq!(vb.k(), 1);
    }

    #[test]
    fn quantize_ties_and_exact_hits() {
        let centers: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 0.0]).collect();
        let v = Vocabulary::new(centers, Measure::Euclidean, VocabMethod::KMeans, 0).unwrap();
        assert_eq!(quantize(&[7.0, 0.0], &v).unwrap(), 7);
        let tie = Vocabulary::new(
            pts(&[[9.0, 9.0], [9.0, 9.0], [0.0, 1.0], [9.0, 9.0], [9.0, 9.0], [0.0, -1.0]]),
            Measure::Euclidean,
            VocabMethod::KMeans,
            0,
        )
        .unwrap();
        assert_eq!(quantize(&[0.0, 0.0], &tie).unwrap(), 2);
        assert!(quantize(&[0.0], &v).is_err());
    }

    #[test]
    fn encode_counts_and_errors() {
        let v = Vocabulary::new(pts(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]), Measure::Euclidean, VocabMethod::KMeans, 0).unwrap();
        let h = encode_image(&vec![vec![3.1, 0.0]; 5], &v).unwrap();
        assert_eq!(h.bins(), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(h.binning(), &Binning::Bovw(4));
        assert!(matches!(encode_image(&[], &v), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn vocabulary_file_roundtrip() {
        let v = Vocabulary::new(pts(&[[0.5, 0.25], [1.0, -2.0]]), "minkowski:1".parse().unwrap(), VocabMethod::Incremental, 77).unwrap();
        let bytes = v.to_bytes();
        assert_eq!(&bytes[..4], b"PRVB");
        assert_eq!(Vocabulary::from_bytes(&bytes).unwrap(), v);
        assert!(Vocabulary::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        assert_eq!(v.to_csv(), "0.5,0.25\n1,-2\n");
    }

    #[test]
    fn subsample_caps_and_keeps_order() {
        let items: Vec<usize> = (0..100).collect();
        let s = subsample(&items, 10, 4);
        assert_eq!(s.len(), 10);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s, subsample(&items, 10, 4));
        assert_eq!(subsample(&items, 200, 4), items);
    }
}
