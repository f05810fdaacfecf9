//! Histogram dissimilarity measures, bin-by-bin and cross-bin.
//!
//! All functions take plain slices so they apply equally to color histograms
//! and bag-of-words vectors. [`Measure`] selects one by its string id.

mod emd;

use std::fmt;
use std::str::FromStr;

pub use emd::{emd, FlowMatrix, GroundDistanceMatrix};

use crate::error::{Error, Result};
use crate::histogram::Binning;

/// Default floor applied to `K_i` inside the KL divergence.
pub const KL_EPSILON: f64 = 1e-10;

/// Value reported for an infinite Bhattacharyya distance.
pub const BHATTACHARYYA_INFINITY: f64 = f64::MAX;

const NORMALIZED_TOLERANCE: f64 = 1e-6;

fn check_len(h: &[f64], k: &[f64]) -> Result<()> {
    if h.len() != k.len() {
        return Err(Error::LengthMismatch {
            left: h.len(),
            right: k.len(),
        });
    }
    Ok(())
}

fn check_normalized(v: &[f64]) -> Result<()> {
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > NORMALIZED_TOLERANCE || v.iter().any(|&x| x < 0.0) {
        return Err(Error::NotNormalized(s));
    }
    Ok(())
}

/// `x * ln(x / y)` with `0 * ln(.) = 0`.
#[inline]
fn xlogx_over(x: f64, y: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

/// Minkowski distance `(sum |H_i - K_i|^r)^(1/r)`, `r >= 1`.
pub fn minkowski(h: &[f64], k: &[f64], r: f64) -> Result<f64> {
    check_len(h, k)?;
    if !(r >= 1.0) {
        return Err(Error::InvalidParameter(format!("Minkowski order must be >= 1, got {r}")));
    }
    let it = h.iter().zip(k).map(|(a, b)| (a - b).abs());
    Ok(if r == 1.0 {
        it.sum()
    } else if r == 2.0 {
        it.map(|d| d * d).sum::<f64>().sqrt()
    } else if r.is_infinite() {
        it.fold(0.0, f64::max)
    } else {
        it.map(|d| d.powf(r)).sum::<f64>().powf(1.0 / r)
    })
}

/// Which form of the Kullback-Leibler sum to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KlForm {
    /// `sum H_i ln(H_i / K_i)`
    #[default]
    Standard,
    /// `sum ln(H_i / K_i)` without the `H_i` weight; both sides are floored at epsilon.
    Unweighted,
}

/// Kullback-Leibler divergence of `k` from `h`; `K_i` is floored at `epsilon`.
pub fn kullback_leibler(h: &[f64], k: &[f64], epsilon: f64) -> Result<f64> {
    kullback_leibler_with(h, k, epsilon, KlForm::Standard)
}

pub fn kullback_leibler_with(h: &[f64], k: &[f64], epsilon: f64, form: KlForm) -> Result<f64> {
    check_len(h, k)?;
    check_normalized(h)?;
    check_normalized(k)?;
    Ok(match form {
        KlForm::Standard => h
            .iter()
            .zip(k)
            .map(|(&a, &b)| xlogx_over(a, b.max(epsilon)))
            .sum::<f64>()
            .max(0.0),
        KlForm::Unweighted => h
            .iter()
            .zip(k)
            .map(|(&a, &b)| (a.max(epsilon) / b.max(epsilon)).ln())
            .sum(),
    })
}

/// Jeffrey divergence, the symmetrized KL against the mean distribution.
pub fn jeffrey(h: &[f64], k: &[f64]) -> Result<f64> {
    check_len(h, k)?;
    let mut sum = 0.0;
    for (&a, &b) in h.iter().zip(k) {
        let m = 0.5 * (a + b);
        if m > 0.0 {
            sum += xlogx_over(a, m) + xlogx_over(b, m);
        }
    }
    Ok(sum.max(0.0))
}

/// `chi^2` statistic `sum (H_i - K_i)^2 / H_i`, skipping bins with `H_i = 0`.
pub fn chi_square(h: &[f64], k: &[f64]) -> Result<f64> {
    check_len(h, k)?;
    Ok(h.iter()
        .zip(k)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| (a - b) * (a - b) / a)
        .sum())
}

/// Symmetric `chi^2`: `sum (H_i - K_i)^2 / ((H_i + K_i) / 2)`, skipping empty bin pairs.
pub fn chi_square_symmetric(h: &[f64], k: &[f64]) -> Result<f64> {
    check_len(h, k)?;
    Ok(h.iter()
        .zip(k)
        .filter(|(&a, &b)| a + b > 0.0)
        .map(|(&a, &b)| (a - b) * (a - b) / (0.5 * (a + b)))
        .sum())
}

/// `-ln sum sqrt(H_i K_i)`; disjoint supports give [`BHATTACHARYYA_INFINITY`].
pub fn bhattacharyya(h: &[f64], k: &[f64]) -> Result<f64> {
    check_len(h, k)?;
    check_normalized(h)?;
    check_normalized(k)?;
    let bc: f64 = h.iter().zip(k).map(|(a, b)| (a * b).sqrt()).sum();
    if bc <= 0.0 {
        return Ok(BHATTACHARYYA_INFINITY);
    }
    Ok((-bc.ln()).max(0.0))
}

/// Match distance: L1 distance between the cumulative histograms.
/// Both inputs must carry the same total mass.
pub fn match_distance(h: &[f64], k: &[f64]) -> Result<f64> {
    check_len(h, k)?;
    let (mh, mk): (f64, f64) = (h.iter().sum(), k.iter().sum());
    if (mh - mk).abs() > 1e-9 * mh.abs().max(mk.abs()).max(1.0) {
        return Err(Error::UnequalMass(mh, mk));
    }
    let (mut ch, mut ck, mut sum) = (0.0, 0.0, 0.0);
    for (a, b) in h.iter().zip(k) {
        ch += a;
        ck += b;
        sum += (ch - ck).abs();
    }
    Ok(sum)
}

/// Ground distance implied by a histogram layout: Euclidean distance between
/// bin-center coordinates on a color grid, `|i - j|` otherwise.
pub fn ground_distance_for(binning: &Binning) -> GroundDistanceMatrix {
    match binning {
        Binning::Color3(axes) => {
            let n = binning.len();
            let coord = |t: usize| {
                let a = t % axes[0];
                let b = (t / axes[0]) % axes[1];
                let c = t / (axes[0] * axes[1]);
                [
                    (a as f64 + 0.5) / axes[0] as f64,
                    (b as f64 + 0.5) / axes[1] as f64,
                    (c as f64 + 0.5) / axes[2] as f64,
                ]
            };
            GroundDistanceMatrix::from_fn(n, |i, j| {
                let (p, q) = (coord(i), coord(j));
                p.iter()
                    .zip(&q)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .expect("grid distances are a valid ground matrix")
        }
        other => GroundDistanceMatrix::linear(other.len()),
    }
}

/// A dissimilarity measure selected by id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    Euclidean,
    Minkowski(f64),
    KullbackLeibler,
    Jeffrey,
    ChiSquare,
    ChiSquareSymmetric,
    Bhattacharyya,
    /// EMD with a linear `|i - j|` ground distance.
    Emd,
    Match,
}

impl Measure {
    /// Evaluates the measure on two equal-length vectors.
    pub fn eval(&self, h: &[f64], k: &[f64]) -> Result<f64> {
        match *self {
            Measure::Euclidean => minkowski(h, k, 2.0),
            Measure::Minkowski(r) => minkowski(h, k, r),
            Measure::KullbackLeibler => kullback_leibler(h, k, KL_EPSILON),
            Measure::Jeffrey => jeffrey(h, k),
            Measure::ChiSquare => chi_square(h, k),
            Measure::ChiSquareSymmetric => chi_square_symmetric(h, k),
            Measure::Bhattacharyya => bhattacharyya(h, k),
            Measure::Emd => {
                check_len(h, k)?;
                emd(h, k, &GroundDistanceMatrix::linear(h.len())).map(|(d, _)| d)
            }
            Measure::Match => match_distance(h, k),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Measure::KullbackLeibler | Measure::ChiSquare)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Euclidean => f.write_str("euclidean"),
            Measure::Minkowski(r) => write!(f, "minkowski:{r}"),
            Measure::KullbackLeibler => f.write_str("kl"),
            Measure::Jeffrey => f.write_str("jeffrey"),
            Measure::ChiSquare => f.write_str("chi2"),
            Measure::ChiSquareSymmetric => f.write_str("chi2sym"),
            Measure::Bhattacharyya => f.write_str("bhattacharyya"),
            Measure::Emd => f.write_str("emd"),
            Measure::Match => f.write_str("match"),
        }
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "euclidean" => Measure::Euclidean,
            "kl" => Measure::KullbackLeibler,
            "jeffrey" => Measure::Jeffrey,
            "chi2" => Measure::ChiSquare,
            "chi2sym" => Measure::ChiSquareSymmetric,
            "bhattacharyya" => Measure::Bhattacharyya,
            "emd" => Measure::Emd,
            "match" => Measure::Match,
            _ => {
                let r = s
                    .strip_prefix("minkowski:")
                    .and_then(|r| r.parse::<f64>().ok())
                    .filter(|r| *r >= 1.0)
                    .ok_or_else(|| Error::UnknownMeasure(s.to_string()))?;
                Measure::Minkowski(r)
            }
        })
    }
}
