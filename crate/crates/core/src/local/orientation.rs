use std::f64::consts::TAU;

use super::scale_space::ScaleSpace;
use super::{Keypoint, SiftParams};
use crate::image::GrayImage;

pub const ORIENTATION_BINS: usize = 36;

/// Central-difference gradient `(magnitude, angle)` at an interior pixel.
/// Angles follow `atan2(dy, dx)` with y pointing down, wrapped into `[0, 2pi)`.
#[inline]
pub(crate) fn gradient(img: &GrayImage, x: usize, y: usize) -> (f64, f64) {
    let dx = img.get(x + 1, y) - img.get(x - 1, y);
    let dy = img.get(x, y + 1) - img.get(x, y - 1);
    let mut angle = dy.atan2(dx);
    if angle < 0.0 {
        angle += TAU;
    }
    ((dx * dx + dy * dy).sqrt(), angle)
}

/// Level of the keypoint's octave whose blur is closest to the keypoint scale.
pub(crate) fn closest_level(kp: &Keypoint, ss: &ScaleSpace) -> usize {
    let oct = &ss.octaves[kp.octave];
    (0..oct.sigmas.len())
        .min_by(|&a, &b| {
            (oct.sigmas[a] - kp.sigma)
                .abs()
                .total_cmp(&(oct.sigmas[b] - kp.sigma).abs())
        })
        .unwrap_or(0)
}

/// Gaussian-weighted 36-bin gradient orientation histogram around the keypoint,
/// smoothed circularly.
pub fn orientation_histogram(kp: &Keypoint, ss: &ScaleSpace, params: &SiftParams) -> [f64; ORIENTATION_BINS] {
    let img = &ss.octaves[kp.octave].levels[closest_level(kp, ss)];
    let scale = (1usize << kp.octave) as f64;
    let (px, py) = ((kp.x / scale).round() as isize, (kp.y / scale).round() as isize);
    let sigma_w = params.orientation_sigma_factor * kp.sigma / scale;
    let radius = (3.0 * sigma_w).round() as isize;
    let denom = 2.0 * sigma_w * sigma_w;
    let (w, h) = (img.width() as isize, img.height() as isize);

    let mut raw = [0.0; ORIENTATION_BINS];
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (x, y) = (px + dx, py + dy);
            if x < 1 || y < 1 || x > w - 2 || y > h - 2 {
                continue;
            }
            let (mag, angle) = gradient(img, x as usize, y as usize);
            let weight = (-((dx * dx + dy * dy) as f64) / denom).exp();
            let bin = ((angle / TAU * ORIENTATION_BINS as f64).round() as usize) % ORIENTATION_BINS;
            raw[bin] += weight * mag;
        }
    }
    let n = ORIENTATION_BINS;
    let mut smoothed = [0.0; ORIENTATION_BINS];
    for i in 0..n {
        smoothed[i] = (raw[(i + n - 2) % n] + raw[(i + 2) % n]) * (1.0 / 16.0)
            + (raw[(i + n - 1) % n] + raw[(i + 1) % n]) * (4.0 / 16.0)
            + raw[i] * (6.0 / 16.0);
    }
    smoothed
}

/// One oriented copy of the keypoint per histogram peak reaching
/// `peak_ratio * max`, each peak refined by a parabola through its neighbors.
pub fn assign_orientations(kp: &Keypoint, ss: &ScaleSpace, params: &SiftParams) -> Vec<Keypoint> {
    let hist = orientation_histogram(kp, ss, params);
    let n = ORIENTATION_BINS;
    let max = hist.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    for i in 0..n {
        let (l, c, r) = (hist[(i + n - 1) % n], hist[i], hist[(i + 1) % n]);
        if c > l && c > r && c >= params.peak_ratio * max {
            let offset = 0.5 * (l - r) / (l - 2.0 * c + r);
            let mut angle = (i as f64 + offset) / n as f64 * TAU;
            angle = angle.rem_euclid(TAU);
            if angle >= TAU {
                angle = 0.0;
            }
            out.push(Keypoint {
                orientation: angle,
                ..*kp
            });
        }
    }
    out
}
