//! SIFT keypoints and descriptors, plus the affine-simulating (ASIFT) and
//! per-channel color (RGB-SIFT) variants.
//!
//! The pipeline is: Gaussian scale space, difference-of-Gaussian pyramid,
//! strict 26-neighbor extrema, quadratic refinement with contrast and edge
//! rejection, orientation assignment, and a 4x4x8 gradient descriptor.
//! Keypoint coordinates are always reported in the input image frame.

mod asift;
mod descriptor;
pub mod io;
mod keypoints;
pub mod matching;
mod orientation;
mod scale_space;

use std::cmp::Ordering;

use rayon::prelude::*;

pub use asift::{asift_views, extract_asift, longitude_count, AffineView, AsiftParams, DEFAULT_PHI_STEP_DEG, DEFAULT_TILTS};
pub use descriptor::{compute_descriptor, descriptor_histogram, normalize_descriptor, DESCRIPTOR_LEN};
pub use keypoints::{detect_extrema, refine_keypoint, Candidate};
pub use orientation::{assign_orientations, orientation_histogram, ORIENTATION_BINS};
pub use scale_space::{build_dog, build_scale_space, max_octaves, DogPyramid, Octave, ScaleSpace};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Image};

/// RGB-SIFT descriptor length (three concatenated 128-d blocks).
pub const RGB_DESCRIPTOR_LEN: usize = 3 * DESCRIPTOR_LEN;

#[derive(Debug, Clone, PartialEq)]
pub struct SiftParams {
    pub octaves: usize,
    /// DoG scales compared per octave; the octave holds this many plus three blur levels.
    pub scales_per_octave: usize,
    pub sigma0: f64,
    /// Minimum `|D|` at the refined extremum, for intensities in `[0, 1]`.
    pub contrast_threshold: f64,
    /// Principal curvature ratio bound.
    pub edge_ratio: f64,
    /// Orientation window sigma relative to the keypoint scale.
    pub orientation_sigma_factor: f64,
    pub peak_ratio: f64,
    pub max_refine_steps: usize,
    pub descriptor_clamp: f64,
}

impl Default for SiftParams {
    fn default() -> Self {
        Self {
            octaves: 4,
            scales_per_octave: 2,
            sigma0: 1.6,
            contrast_threshold: 0.03,
            edge_ratio: 10.0,
            orientation_sigma_factor: 1.5,
            peak_ratio: 0.8,
            max_refine_steps: 5,
            descriptor_clamp: 0.2,
        }
    }
}

impl SiftParams {
    fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold >= 0.0) || !(self.edge_ratio > 0.0) || !(self.orientation_sigma_factor > 0.0) {
            return Err(Error::InvalidParameter("SIFT thresholds must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.peak_ratio) || !(self.descriptor_clamp > 0.0) {
            return Err(Error::InvalidParameter("SIFT ratios out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    /// Absolute scale in input-image pixels.
    pub sigma: f64,
    /// Radians in `[0, 2pi)`, measured as `atan2(dy, dx)` with y pointing down.
    pub orientation: f64,
    pub octave: usize,
    pub layer: usize,
    /// Interpolated DoG value at the extremum.
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalFeature {
    pub keypoint: Keypoint,
    pub descriptor: Vec<f64>,
}

fn canonical_order(a: &Keypoint, b: &Keypoint) -> Ordering {
    (a.octave, a.layer)
        .cmp(&(b.octave, b.layer))
        .then(a.y.total_cmp(&b.y))
        .then(a.x.total_cmp(&b.x))
        .then(a.orientation.total_cmp(&b.orientation))
}

/// Oriented keypoints of a grayscale image together with the scale space they
/// were found in.
pub fn detect_keypoints(img: &GrayImage, params: &SiftParams) -> Result<(Vec<Keypoint>, ScaleSpace)> {
    params.validate()?;
    let octaves = params.octaves.min(max_octaves(img.width(), img.height())).max(1);
    let ss = build_scale_space(img, octaves, params.scales_per_octave, params.sigma0)?;
    let dog = build_dog(&ss);
    let mut kps: Vec<Keypoint> = detect_extrema(&dog)
        .into_iter()
        .filter_map(|c| refine_keypoint(c, &dog, params))
        .flat_map(|kp| assign_orientations(&kp, &ss, params))
        .collect();
    kps.sort_by(canonical_order);
    Ok((kps, ss))
}

/// SIFT keypoints and 128-d descriptors. Octaves beyond what the image size
/// supports are skipped. Output is sorted by `(octave, layer, y, x, orientation)`.
pub fn extract_sift(img: &GrayImage, params: &SiftParams) -> Result<Vec<LocalFeature>> {
    let (kps, ss) = detect_keypoints(img, params)?;
    Ok(kps
        .into_iter()
        .filter_map(|kp| {
            compute_descriptor(&kp, &ss, params).map(|descriptor| LocalFeature { keypoint: kp, descriptor })
        })
        .collect())
}

/// RGB-SIFT: keypoints from the grayscale image, descriptors computed on each
/// color plane separately (each block normalized on its own) and concatenated.
pub fn extract_rgb_sift(img: &Image, params: &SiftParams) -> Result<Vec<LocalFeature>> {
    let (kps, gray_ss) = detect_keypoints(&img.to_grayscale(), params)?;
    let octaves = gray_ss.octaves.len();
    let planes = (0..3)
        .into_par_iter()
        .map(|c| build_scale_space(&img.channel(c), octaves, params.scales_per_octave, params.sigma0))
        .collect::<Result<Vec<_>>>()?;
    Ok(kps
        .into_iter()
        .filter_map(|kp| {
            let mut descriptor = Vec::with_capacity(RGB_DESCRIPTOR_LEN);
            for ss in &planes {
                descriptor.extend(compute_descriptor(&kp, ss, params)?);
            }
            Some(LocalFeature { keypoint: kp, descriptor })
        })
        .collect())
}
