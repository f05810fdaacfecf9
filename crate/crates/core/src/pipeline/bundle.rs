//! Per-image feature bundles.
//!
//! Binary layout, little-endian: magic `PRFB`, `u32` version, 32-byte
//! SHA-256 of the source image bytes and extraction settings, the settings
//! string, raw RGB and HSV histogram counts (binning string + `f64` bins), then the
//! local descriptors as `u32` count, `u32` dim and `f32` values.

use sha2::{Digest, Sha256};

use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::histogram::{Binning, FeatureHistogram};

pub const BUNDLE_MAGIC: &[u8; 4] = b"PRFB";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub source_hash: [u8; 32],
    pub extraction_id: String,
    pub rgb: FeatureHistogram,
    pub hsv: FeatureHistogram,
    pub descriptors: Vec<Vec<f64>>,
}

/// Hash identifying an extraction: image bytes plus settings.
pub fn source_hash(image_bytes: &[u8], extraction_id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(image_bytes);
    h.update([0u8]);
    h.update(extraction_id.as_bytes());
    h.finalize().into()
}

fn write_hist(w: &mut Writer, h: &FeatureHistogram) {
    w.str(&h.binning().to_string());
    w.f64s(h.bins());
}

fn read_hist(r: &mut Reader) -> Result<FeatureHistogram> {
    let binning: Binning = r.str()?.parse()?;
    FeatureHistogram::new(r.f64s()?, binning)
}

impl FeatureBundle {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let dim = self.descriptors.first().map_or(0, Vec::len);
        if self.descriptors.iter().any(|d| d.len() != dim) {
            return Err(Error::InvalidParameter("descriptors of mixed dimension".into()));
        }
        let mut w = Writer::new(BUNDLE_MAGIC, BUNDLE_VERSION);
        w.buf.extend_from_slice(&self.source_hash);
        w.str(&self.extraction_id);
        write_hist(&mut w, &self.rgb);
        write_hist(&mut w, &self.hsv);
        w.len(self.descriptors.len());
        w.len(dim);
        for v in self.descriptors.iter().flatten() {
            w.f32(*v as f32);
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Self::header(bytes)?;
        let source_hash = r.take(32)?.try_into().expect("32 bytes");
        let extraction_id = r.str()?;
        let rgb = read_hist(&mut r)?;
        let hsv = read_hist(&mut r)?;
        let count = r.len()?;
        let dim = r.u32()? as usize;
        let descriptors = (0..count)
            .map(|_| (0..dim).map(|_| r.f32().map(f64::from)).collect())
            .collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            source_hash,
            extraction_id,
            rgb,
            hsv,
            descriptors,
        })
    }

    fn header(bytes: &[u8]) -> Result<Reader<'_>> {
        Reader::open(bytes, BUNDLE_MAGIC, BUNDLE_VERSION, "feature bundle")
    }

    /// Source hash of an encoded bundle without decoding the rest.
    pub fn peek_hash(bytes: &[u8]) -> Result<[u8; 32]> {
        Ok(Self::header(bytes)?.take(32)?.try_into().expect("32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let rgb = FeatureHistogram::new(vec![0.25, 0.75, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], Binning::Color3([2, 2, 2])).unwrap();
        let hsv = FeatureHistogram::new(vec![1.0; 8], Binning::Color3([2, 2, 2])).unwrap();
        let b = FeatureBundle {
            source_hash: source_hash(b"pixels", "cfg"),
            extraction_id: "cfg".into(),
            rgb,
            hsv,
            descriptors: vec![vec![0.5, 0.25], vec![0.0, 1.0]],
        };
        let bytes = b.to_bytes().unwrap();
        assert_eq!(FeatureBundle::from_bytes(&bytes).unwrap(), b);
        assert_eq!(FeatureBundle::peek_hash(&bytes).unwrap(), b.source_hash);
        assert!(FeatureBundle::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        assert_ne!(source_hash(b"pixels", "cfg"), source_hash(b"pixels", "cfg2"));
    }
}
