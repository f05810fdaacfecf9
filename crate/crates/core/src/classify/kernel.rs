use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::bovw::subsample;
use crate::error::{Error, Result};

/// Points used by the median heuristic.
pub const MEDIAN_SAMPLE: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    /// `x . y + c`
    Linear { c: f64 },
    /// `exp(-|x - y|^2 / (2 sigma^2))`
    Rbf { sigma: f64 },
    /// `1 - sum (x_i - y_i)^2 / ((x_i + y_i) / 2)`
    Chi2,
}

impl KernelSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear { c } if !c.is_finite() => Err(Error::InvalidParameter("linear offset must be finite".into())),
            KernelSpec::Rbf { sigma } if !(sigma > 0.0) || !sigma.is_finite() => {
                Err(Error::InvalidParameter(format!("RBF sigma must be positive, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    /// Kernel value without input validation.
    pub(crate) fn apply(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear { c } => x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + c,
            KernelSpec::Rbf { sigma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / (2.0 * sigma * sigma)).exp()
            }
            KernelSpec::Chi2 => {
                1.0 - x
                    .iter()
                    .zip(y)
                    .filter(|(a, b)| **a + **b > 0.0)
                    .map(|(a, b)| (a - b) * (a - b) / (0.5 * (a + b)))
                    .sum::<f64>()
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Linear { c } => write!(f, "linear:{c:?}"),
            KernelSpec::Rbf { sigma } => write!(f, "rbf:{sigma:?}"),
            KernelSpec::Chi2 => f.write_str("chi2"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// `linear`, `linear:<c>`, `rbf:<sigma>` or `chi2`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownKernel(s.to_string());
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a.parse::<f64>().map_err(|_| unknown())?)),
            None => (s, None),
        };
        let spec = match (name, arg) {
            ("linear", c) => KernelSpec::Linear { c: c.unwrap_or(0.0) },
            ("rbf", Some(sigma)) => KernelSpec::Rbf { sigma },
            ("chi2", None) => KernelSpec::Chi2,
            _ => return Err(unknown()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

pub fn kernel(x: &[f64], y: &[f64], spec: &KernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    spec.validate()?;
    if *spec == KernelSpec::Chi2 && x.iter().chain(y).any(|v| *v < 0.0) {
        return Err(Error::InvalidParameter("chi-square kernel needs non-negative inputs".into()));
    }
    Ok(spec.apply(x, y))
}

/// Full kernel matrix, rows computed in parallel.
pub fn gram_matrix(xs: &[Vec<f64>], spec: &KernelSpec) -> Vec<Vec<f64>> {
    xs.par_iter()
        .map(|a| xs.iter().map(|b| spec.apply(a, b)).collect())
        .collect()
}

/// Median pairwise Euclidean distance over a seeded subsample of at most
/// [`MEDIAN_SAMPLE`] points; 1 when every sampled point coincides.
pub fn median_heuristic(xs: &[Vec<f64>], seed: u64) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::NotEnoughPoints {
            needed: 2,
            have: xs.len(),
        });
    }
    let sample = subsample(xs, MEDIAN_SAMPLE, seed);
    let mut d: Vec<f64> = (0..sample.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let sample = &sample;
            (i + 1..sample.len()).map(move |j| {
                sample[i]
                    .iter()
                    .zip(&sample[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 { d[mid] } else { 0.5 * (d[mid - 1] + d[mid]) };
    Ok(if median > 0.0 { median } else { 1.0 })
}
