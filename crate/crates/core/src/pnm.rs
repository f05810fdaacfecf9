//! Netpbm reader/writer for PGM (P2/P5) and PPM (P3/P6).
//!
//! Samples are scaled by `1 / maxval` on load. Binary files with `maxval > 255`
//! use two big-endian bytes per sample.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnmKind {
    /// P2
    GrayAscii,
    /// P3
    RgbAscii,
    /// P5
    GrayBinary,
    /// P6
    RgbBinary,
}

impl PnmKind {
    fn magic(self) -> &'static str {
        match self {
            PnmKind::GrayAscii => "P2",
            PnmKind::RgbAscii => "P3",
            PnmKind::GrayBinary => "P5",
            PnmKind::RgbBinary => "P6",
        }
    }

    fn channels(self) -> usize {
        match self {
            PnmKind::GrayAscii | PnmKind::GrayBinary => 1,
            PnmKind::RgbAscii | PnmKind::RgbBinary => 3,
        }
    }

    fn is_binary(self) -> bool {
        matches!(self, PnmKind::GrayBinary | PnmKind::RgbBinary)
    }
}

pub fn load_pnm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            let c = self.buf[self.pos];
            if c == b'#' {
                while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&'a [u8]> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && !self.buf[self.pos].is_ascii_whitespace() && self.buf[self.pos] != b'#' {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.buf[start..self.pos])
    }

    fn header_uint(&mut self, what: &str) -> Result<u32> {
        let tok = self
            .token()
            .ok_or_else(|| Error::MalformedHeader(format!("missing {what}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<u32>().ok())
            .ok_or_else(|| {
                Error::MalformedHeader(format!("{what} is not an unsigned integer: {:?}", String::from_utf8_lossy(tok)))
            })
    }
}

/// Decodes an in-memory PNM file.
pub fn decode_pnm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        let shown = String::from_utf8_lossy(&bytes[..bytes.len().min(2)]).into_owned();
        return Err(Error::UnsupportedMagic(shown));
    }
    let kind = match bytes[1] {
        b'2' => PnmKind::GrayAscii,
        b'3' => PnmKind::RgbAscii,
        b'5' => PnmKind::GrayBinary,
        b'6' => PnmKind::RgbBinary,
        _ => {
            return Err(Error::UnsupportedMagic(
                String::from_utf8_lossy(&bytes[..2]).into_owned(),
            ))
        }
    };
    let mut cur = Cursor { buf: bytes, pos: 2 };
    if cur.pos < bytes.len() && !bytes[cur.pos].is_ascii_whitespace() && bytes[cur.pos] != b'#' {
        return Err(Error::UnsupportedMagic(
            String::from_utf8_lossy(&bytes[..3]).into_owned(),
        ));
    }
    let width = cur.header_uint("width")? as usize;
    let height = cur.header_uint("height")? as usize;
    let maxval = cur.header_uint("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!("zero dimension {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("maxval {maxval} outside 1..=65535")));
    }
    let channels = kind.channels();
    let expected = width * height * channels;
    let mut samples = Vec::with_capacity(expected);
    if kind.is_binary() {
        // exactly one whitespace byte separates maxval from the raster
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err(Error::MalformedHeader("missing whitespace before raster".into()));
        }
        let data = &bytes[cur.pos + 1..];
        if maxval < 256 {
            if data.len() < expected {
                return Err(Error::TruncatedPayload {
                    expected,
                    found: data.len(),
                });
            }
            samples.extend(data[..expected].iter().map(|&b| b as u32));
        } else {
            if data.len() < 2 * expected {
                return Err(Error::TruncatedPayload {
                    expected,
                    found: data.len() / 2,
                });
            }
            samples.extend(
                data[..2 * expected]
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32),
            );
        }
    } else {
        while samples.len() < expected {
            match cur.token() {
                Some(tok) => {
                    let v = std::str::from_utf8(tok)
                        .ok()
                        .and_then(|s| s.parse::<u32>().ok())
                        .ok_or_else(|| {
                            Error::MalformedHeader(format!(
                                "non-numeric sample {:?}",
                                String::from_utf8_lossy(tok)
                            ))
                        })?;
                    samples.push(v);
                }
                None => {
                    return Err(Error::TruncatedPayload {
                        expected,
                        found: samples.len(),
                    })
                }
            }
        }
    }
    if let Some(&bad) = samples.iter().find(|&&s| s > maxval) {
        return Err(Error::InvalidImage(format!("sample {bad} exceeds maxval {maxval}")));
    }
    let maxval = maxval as f64;
    let pixels = if channels == 1 {
        samples
            .iter()
            .map(|&s| {
                let v = s as f64 / maxval;
                [v, v, v]
            })
            .collect()
    } else {
        samples
            .chunks_exact(3)
            .map(|c| [c[0] as f64 / maxval, c[1] as f64 / maxval, c[2] as f64 / maxval])
            .collect()
    };
    Image::new(width, height, pixels)
}

/// Encodes an image. Gray kinds store the red channel.
pub fn encode_pnm(img: &Image, kind: PnmKind, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(Error::InvalidParameter("maxval must be at least 1".into()));
    }
    let mut out = format!("{}\n{} {}\n{}\n", kind.magic(), img.width(), img.height(), maxval).into_bytes();
    let quant = |v: f64| -> u16 { (v * maxval as f64).round().clamp(0.0, maxval as f64) as u16 };
    let channels = kind.channels();
    let samples = img
        .pixels()
        .iter()
        .flat_map(|p| p[..channels].iter().copied())
        .map(quant);
    if kind.is_binary() {
        if maxval < 256 {
            out.extend(samples.map(|s| s as u8));
        } else {
            out.extend(samples.flat_map(|s| s.to_be_bytes()));
        }
    } else {
        let per_line = img.width() * channels;
        for (i, s) in samples.enumerate() {
            out.extend_from_slice(s.to_string().as_bytes());
            out.push(if (i + 1) % per_line == 0 { b'\n' } else { b' ' });
        }
    }
    Ok(out)
}

pub fn write_pnm(img: &Image, path: impl AsRef<Path>, kind: PnmKind, maxval: u16) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pnm(img, kind, maxval)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_ppm_single_red_pixel() {
        let img = decode_pnm(b"P3\n1 1\n255\n255 0 0\n").unwrap();
        assert_eq!(img.pixels(), &[[1.0, 0.0, 0.0]]);
    }

    #[test]
    fn binary_pgm_replicates_gray() {
        let mut bytes = b"P5 1 1 255\n".to_vec();
        bytes.push(128);
        let img = decode_pnm(&bytes).unwrap();
        let v = 128.0 / 255.0;
        assert_eq!(img.pixels(), &[[v, v, v]]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let img = decode_pnm(b"P2\n# a comment\n2 1 # trailing\n10\n0 10\n").unwrap();
        assert_eq!(img.pixels()[1], [1.0, 1.0, 1.0]);
    }

    #[test]
    fn sixteen_bit_binary() {
        let mut bytes = b"P5\n1 1\n65535\n".to_vec();
        bytes.extend_from_slice(&[0x80, 0x00]);
        let img = decode_pnm(&bytes).unwrap();
        assert!((img.pixels()[0][0] - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn distinct_diagnostics() {
        assert!(matches!(decode_pnm(b"P7\n1 1\n255\n"), Err(Error::UnsupportedMagic(_))));
        assert!(matches!(decode_pnm(b"GIF89a"), Err(Error::UnsupportedMagic(_))));
        assert!(matches!(decode_pnm(b"P3\n1 x\n255\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode_pnm(b"P3\n1 1\n70000\n1 1 1"), Err(Error::MalformedHeader(_))));
        assert!(matches!(
            decode_pnm(b"P3\n2 1\n255\n1 2 3 4\n"),
            Err(Error::TruncatedPayload { expected: 6, found: 4 })
        ));
        assert!(matches!(
            decode_pnm(b"P6\n2 2\n255\n\x01\x02"),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    fn raster(max: u16) -> impl Strategy<Value = (usize, usize, Vec<u16>)> {
        (1usize..6, 1usize..6).prop_flat_map(move |(w, h)| {
            (Just(w), Just(h), proptest::collection::vec(0..=max, w * h * 3))
        })
    }

    fn image_from_samples(w: usize, h: usize, s: &[u16], max: u16) -> Image {
        Image::from_fn(w, h, |x, y| {
            let i = 3 * (y * w + x);
            [
                s[i] as f64 / max as f64,
                s[i + 1] as f64 / max as f64,
                s[i + 2] as f64 / max as f64,
            ]
        })
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity_8bit((w, h, s) in raster(255), binary in any::<bool>()) {
            let img = image_from_samples(w, h, &s, 255);
            let kind = if binary { PnmKind::RgbBinary } else { PnmKind::RgbAscii };
            let bytes = encode_pnm(&img, kind, 255).unwrap();
            let back = decode_pnm(&bytes).unwrap();
            prop_assert_eq!(back, img.clone());
            // bit-exact bytes on re-encode
            prop_assert_eq!(encode_pnm(&decode_pnm(&bytes).unwrap(), kind, 255).unwrap(), bytes);
        }

        #[test]
        fn roundtrip_is_identity_16bit((w, h, s) in raster(65535)) {
            let img = image_from_samples(w, h, &s, 65535);
            let bytes = encode_pnm(&img, PnmKind::RgbBinary, 65535).unwrap();
            prop_assert_eq!(decode_pnm(&bytes).unwrap(), img);
        }
    }
}
