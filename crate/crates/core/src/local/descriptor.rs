use std::f64::consts::TAU;

use super::orientation::{closest_level, gradient};
use super::scale_space::ScaleSpace;
use super::{Keypoint, SiftParams};

/// Spatial cells per side.
pub const DESCRIPTOR_CELLS: usize = 4;
/// Orientation bins per cell.
pub const DESCRIPTOR_ORIENTATIONS: usize = 8;
pub const DESCRIPTOR_LEN: usize = DESCRIPTOR_CELLS * DESCRIPTOR_CELLS * DESCRIPTOR_ORIENTATIONS;
/// Spatial cell width in units of the keypoint scale.
const CELL_WIDTH_FACTOR: f64 = 3.0;

/// L2-normalize, clamp every entry at `clamp`, L2-normalize again.
/// A zero vector is left untouched.
pub fn normalize_descriptor(v: &mut [f64], clamp: f64) {
    let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n = l2(v);
    if n <= 0.0 {
        return;
    }
    v.iter_mut().for_each(|x| *x = (*x / n).min(clamp));
    let n = l2(v);
    v.iter_mut().for_each(|x| *x /= n);
}

/// Half-width, in octave pixels, of the square window the descriptor samples.
pub(crate) fn window_radius(kp: &Keypoint) -> isize {
    let scale = (1usize << kp.octave) as f64;
    let cell = CELL_WIDTH_FACTOR * kp.sigma / scale;
    (cell * std::f64::consts::SQRT_2 * (DESCRIPTOR_CELLS as f64 + 1.0) * 0.5).round() as isize
}

/// Raw (unnormalized) 4x4x8 gradient histogram around an oriented keypoint,
/// or `None` if the sampling window leaves the image.
pub fn descriptor_histogram(kp: &Keypoint, ss: &ScaleSpace) -> Option<Vec<f64>> {
    let img = &ss.octaves[kp.octave].levels[closest_level(kp, ss)];
    let scale = (1usize << kp.octave) as f64;
    let (px, py) = ((kp.x / scale).round() as isize, (kp.y / scale).round() as isize);
    let radius = window_radius(kp);
    let (w, h) = (img.width() as isize, img.height() as isize);
    if px - radius < 1 || py - radius < 1 || px + radius > w - 2 || py + radius > h - 2 {
        return None;
    }

    let d = DESCRIPTOR_CELLS;
    let nbins = DESCRIPTOR_ORIENTATIONS;
    let cell = CELL_WIDTH_FACTOR * kp.sigma / scale;
    let (sin_t, cos_t) = kp.orientation.sin_cos();
    let half = d as f64 / 2.0;
    let weight_denom = 2.0 * half * half;
    let mut hist = vec![0.0; d * d * nbins];

    for dy in -radius..=radius {
        for dx in -radius..=radius {
            // offsets expressed in the keypoint frame, in cell units
            let c_rot = (dx as f64 * cos_t + dy as f64 * sin_t) / cell;
            let r_rot = (-dx as f64 * sin_t + dy as f64 * cos_t) / cell;
            let cbin = c_rot + half - 0.5;
            let rbin = r_rot + half - 0.5;
            if cbin <= -1.0 || rbin <= -1.0 || cbin >= d as f64 || rbin >= d as f64 {
                continue;
            }
            let (mag, angle) = gradient(img, (px + dx) as usize, (py + dy) as usize);
            let weight = (-(c_rot * c_rot + r_rot * r_rot) / weight_denom).exp();
            let obin = ((angle - kp.orientation).rem_euclid(TAU)) / TAU * nbins as f64;
            trilinear_add(&mut hist, rbin, cbin, obin, mag * weight);
        }
    }
    Some(hist)
}

fn trilinear_add(hist: &mut [f64], rbin: f64, cbin: f64, obin: f64, value: f64) {
    let d = DESCRIPTOR_CELLS as isize;
    let nbins = DESCRIPTOR_ORIENTATIONS;
    let (r0, c0, o0) = (rbin.floor(), cbin.floor(), obin.floor());
    let (fr, fc, fo) = (rbin - r0, cbin - c0, obin - o0);
    for (ri, wr) in [(r0 as isize, 1.0 - fr), (r0 as isize + 1, fr)] {
        if ri < 0 || ri >= d {
            continue;
        }
        for (ci, wc) in [(c0 as isize, 1.0 - fc), (c0 as isize + 1, fc)] {
            if ci < 0 || ci >= d {
                continue;
            }
            for (oi, wo) in [(o0 as usize, 1.0 - fo), (o0 as usize + 1, fo)] {
                let idx = ((ri * d + ci) as usize) * nbins + oi % nbins;
                hist[idx] += value * wr * wc * wo;
            }
        }
    }
}

/// 128-d SIFT descriptor of an oriented keypoint; `None` when the window
/// exceeds the image.
pub fn compute_descriptor(kp: &Keypoint, ss: &ScaleSpace, params: &SiftParams) -> Option<Vec<f64>> {
    let mut v = descriptor_histogram(kp, ss)?;
    normalize_descriptor(&mut v, params.descriptor_clamp);
    Some(v)
}
