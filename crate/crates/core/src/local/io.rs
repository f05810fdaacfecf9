//! Descriptor files.
//!
//! Binary layout, little-endian: magic `PRKD`, `u32` version, `u32` record
//! count, `u32` descriptor dimension, then per record `x, y, sigma,
//! orientation` followed by `dim` values, all `f32`.

use std::fmt::Write as _;

use super::{Keypoint, LocalFeature};
use crate::error::{Error, Result};

pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"PRKD";
pub const DESCRIPTOR_VERSION: u32 = 1;

pub fn encode_descriptors(features: &[LocalFeature]) -> Result<Vec<u8>> {
    let dim = features.first().map_or(0, |f| f.descriptor.len());
    if features.iter().any(|f| f.descriptor.len() != dim) {
        return Err(Error::InvalidParameter("descriptors of mixed dimension".into()));
    }
    let mut out = Vec::with_capacity(16 + features.len() * (4 + dim) * 4);
    out.extend_from_slice(DESCRIPTOR_MAGIC);
    out.extend_from_slice(&DESCRIPTOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(features.len() as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for f in features {
        let k = &f.keypoint;
        for v in [k.x, k.y, k.sigma, k.orientation].into_iter().chain(f.descriptor.iter().copied()) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("descriptor header truncated".into()))
}

/// Decodes a descriptor file. Octave, layer and response are not stored and
/// come back as zero.
pub fn decode_descriptors(bytes: &[u8]) -> Result<Vec<LocalFeature>> {
    if bytes.get(..4) != Some(DESCRIPTOR_MAGIC.as_slice()) {
        return Err(Error::Format("not a descriptor file".into()));
    }
    let version = read_u32(bytes, 4)?;
    if version != DESCRIPTOR_VERSION {
        return Err(Error::Format(format!("unsupported descriptor file version {version}")));
    }
    let count = read_u32(bytes, 8)? as usize;
    let dim = read_u32(bytes, 12)? as usize;
    let record = (4 + dim) * 4;
    let body = &bytes[16..];
    if body.len() != count * record {
        return Err(Error::Format(format!(
            "descriptor payload is {} bytes, expected {}",
            body.len(),
            count * record
        )));
    }
    Ok(body
        .chunks_exact(record)
        .map(|rec| {
            let vals: Vec<f64> = rec
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
                .collect();
            LocalFeature {
                keypoint: Keypoint {
                    x: vals[0],
                    y: vals[1],
                    sigma: vals[2],
                    orientation: vals[3],
                    octave: 0,
                    layer: 0,
                    response: 0.0,
                },
                descriptor: vals[4..].to_vec(),
            }
        })
        .collect())
}

/// Human-readable dump: header `x,y,sigma,orientation,d0,...` then one row per feature.
pub fn descriptors_to_csv(features: &[LocalFeature]) -> String {
    let dim = features.first().map_or(0, |f| f.descriptor.len());
    let mut out = String::from("x,y,sigma,orientation");
    for i in 0..dim {
        let _ = write!(out, ",d{i}");
    }
    out.push('\n');
    for f in features {
        let k = &f.keypoint;
        let _ = write!(out, "{},{},{},{}", k.x, k.y, k.sigma, k.orientation);
        for v in &f.descriptor {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feature(x: f32, d: Vec<f32>) -> LocalFeature {
        LocalFeature {
            keypoint: Keypoint {
                x: x as f64,
                y: 2.5,
                sigma: 1.5,
                orientation: 0.25,
                octave: 0,
                layer: 0,
                response: 0.0,
            },
            descriptor: d.into_iter().map(f64::from).collect(),
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_descriptors(&[feature(1.0, vec![0.5; 3])]).unwrap();
        assert_eq!(&bytes[..4], b"PRKD");
        assert_eq!(read_u32(&bytes, 4).unwrap(), 1);
        assert_eq!(read_u32(&bytes, 8).unwrap(), 1);
        assert_eq!(read_u32(&bytes, 12).unwrap(), 3);
        assert_eq!(bytes.len(), 16 + 7 * 4);
        assert!(decode_descriptors(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_descriptors(b"NOPE").is_err());
        let csv = descriptors_to_csv(&[feature(1.0, vec![0.5; 3])]);
        assert_eq!(csv.lines().next().unwrap(), "x,y,sigma,orientation,d0,d1,d2");
    }

    proptest! {
        #[test]
        fn f32_records_roundtrip(xs in proptest::collection::vec((any::<f32>(), proptest::collection::vec(0.0f32..1.0, 5)), 0..8)) {
            let feats: Vec<_> = xs.into_iter().filter(|(x, _)| x.is_finite()).map(|(x, d)| feature(x, d)).collect();
            let back = decode_descriptors(&encode_descriptors(&feats).unwrap()).unwrap();
            prop_assert_eq!(back, feats);
        }
    }
}
