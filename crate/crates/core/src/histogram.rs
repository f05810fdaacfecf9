//! Global color histograms and the shared histogram container.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{rgb_to_hsv, Image};

/// Default RGB grid.
pub const DEFAULT_RGB_BINS: [usize; 3] = [10, 10, 10];
/// Default HSV grid.
pub const DEFAULT_HSV_BINS: [usize; 3] = [18, 10, 10];

/// Layout of the bins of a [`FeatureHistogram`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binning {
    /// Three color axes flattened with the first axis fastest.
    Color3([usize; 3]),
    /// One bin per visual word.
    Bovw(usize),
    Generic(usize),
}

impl Binning {
    pub fn len(&self) -> usize {
        match self {
            Binning::Color3(a) => a[0] * a[1] * a[2],
            Binning::Bovw(k) | Binning::Generic(k) => *k,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Binning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Binning::Color3([a, b, c]) => write!(f, "{a}x{b}x{c}"),
            Binning::Bovw(k) => write!(f, "bovw:{k}"),
            Binning::Generic(n) => write!(f, "generic:{n}"),
        }
    }
}

impl FromStr for Binning {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("bad binning descriptor {s:?}"));
        let count = |v: &str| v.parse::<usize>().map_err(|_| bad());
        if let Some(k) = s.strip_prefix("bovw:") {
            return Ok(Binning::Bovw(count(k)?));
        }
        if let Some(n) = s.strip_prefix("generic:") {
            return Ok(Binning::Generic(count(n)?));
        }
        let axes: Vec<usize> = s.split('x').map(count).collect::<Result<_>>()?;
        match axes[..] {
            [a, b, c] => Ok(Binning::Color3([a, b, c])),
            _ => Err(bad()),
        }
    }
}

/// Fixed-length non-negative bin vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHistogram {
    bins: Vec<f64>,
    binning: Binning,
    normalized: bool,
}

impl FeatureHistogram {
    pub fn new(bins: Vec<f64>, binning: Binning) -> Result<Self> {
        if bins.len() != binning.len() {
            return Err(Error::LengthMismatch {
                left: bins.len(),
                right: binning.len(),
            });
        }
        if bins.iter().any(|&b| !(b >= 0.0) || !b.is_finite()) {
            return Err(Error::InvalidParameter("histogram bins must be finite and non-negative".into()));
        }
        Ok(Self {
            bins,
            binning,
            normalized: false,
        })
    }

    /// Generic 1-D histogram from raw values.
    pub fn from_values(bins: Vec<f64>) -> Result<Self> {
        let n = bins.len();
        Self::new(bins, Binning::Generic(n))
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn binning(&self) -> &Binning {
        &self.binning
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// Scales the bins to sum to one.
    pub fn normalize_l1(&self) -> Result<FeatureHistogram> {
        let sum = self.total();
        if !(sum > 0.0) {
            return Err(Error::ZeroHistogram);
        }
        Ok(FeatureHistogram {
            bins: self.bins.iter().map(|b| b / sum).collect(),
            binning: self.binning.clone(),
            normalized: true,
        })
    }

    /// Running sum over the bins in storage order.
    pub fn cumulative(&self) -> FeatureHistogram {
        let mut acc = 0.0;
        FeatureHistogram {
            bins: self
                .bins
                .iter()
                .map(|b| {
                    acc += b;
                    acc
                })
                .collect(),
            binning: self.binning.clone(),
            normalized: false,
        }
    }

    /// CSV form: a header line `axes=<binning>,normalized=<0|1>` followed by
    /// one bin per line, written with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "axes={},normalized={}\n",
            self.binning,
            u8::from(self.normalized)
        );
        for b in &self.bins {
            out.push_str(&format_g17(*b));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty histogram file".into()))?;
        let mut binning = None;
        let mut normalized = None;
        for field in header.split(',') {
            match field.split_once('=') {
                Some(("axes", v)) => binning = Some(v.parse::<Binning>()?),
                Some(("normalized", "0")) => normalized = Some(false),
                Some(("normalized", "1")) => normalized = Some(true),
                _ => return Err(Error::Format(format!("bad histogram header field {field:?}"))),
            }
        }
        let (Some(binning), Some(normalized)) = (binning, normalized) else {
            return Err(Error::Format(format!("incomplete histogram header {header:?}")));
        };
        let bins = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Format(format!("bad bin value {l:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut h = FeatureHistogram::new(bins, binning)?;
        h.normalized = normalized;
        Ok(h)
    }
}

/// Shortest-form decimal with at most 17 significant digits; parses back to
/// the same `f64`.
pub fn format_g17(v: f64) -> String {
    // Rust's Display already emits the shortest round-tripping representation,
    // which never needs more than 17 significant digits.
    format!("{v:?}")
}

#[inline]
fn axis_bin(v: f64, n: usize) -> usize {
    ((v * n as f64).floor().max(0.0) as usize).min(n - 1)
}

fn check_axes(axes: [usize; 3]) -> Result<()> {
    if axes.contains(&0) {
        return Err(Error::InvalidParameter(format!("zero-sized histogram axis in {axes:?}")));
    }
    Ok(())
}

/// Joint RGB histogram with `n_r * n_g * n_b` bins; index `r + n_r*g + n_r*n_g*b`.
/// Counts are unnormalized.
pub fn rgb_histogram(img: &Image, n_r: usize, n_g: usize, n_b: usize) -> Result<FeatureHistogram> {
    check_axes([n_r, n_g, n_b])?;
    let mut bins = vec![0.0; n_r * n_g * n_b];
    for p in img.pixels() {
        let t = axis_bin(p[0], n_r) + n_r * axis_bin(p[1], n_g) + n_r * n_g * axis_bin(p[2], n_b);
        bins[t] += 1.0;
    }
    FeatureHistogram::new(bins, Binning::Color3([n_r, n_g, n_b]))
}

/// Joint HSV histogram; hue spans `[0, 360)`, saturation and value `[0, 1]`.
pub fn hsv_histogram(img: &Image, n_h: usize, n_s: usize, n_v: usize) -> Result<FeatureHistogram> {
    check_axes([n_h, n_s, n_v])?;
    let mut bins = vec![0.0; n_h * n_s * n_v];
    for p in img.pixels() {
        let hsv = rgb_to_hsv(p[0], p[1], p[2]);
        let t = axis_bin(hsv.h / 360.0, n_h) + n_h * axis_bin(hsv.s, n_s) + n_h * n_s * axis_bin(hsv.v, n_v);
        bins[t] += 1.0;
    }
    FeatureHistogram::new(bins, Binning::Color3([n_h, n_s, n_v]))
}
