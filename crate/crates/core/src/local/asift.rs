use rayon::prelude::*;

use super::{extract_sift, LocalFeature, SiftParams};
use crate::error::{Error, Result};
use crate::image::{gaussian_blur_x, GrayImage};

/// Tilt levels: a geometric `sqrt(2)` progression starting at the identity.
pub const DEFAULT_TILTS: [f64; 5] = [1.0, std::f64::consts::SQRT_2, 2.0, 2.0 * std::f64::consts::SQRT_2, 4.0];
pub const DEFAULT_PHI_STEP_DEG: f64 = 72.0;
/// Anti-aliasing blur applied before subsampling, times `sqrt(t^2 - 1)`.
const ANTIALIAS_FACTOR: f64 = 0.8;
/// Keypoints mapped back closer than this to the original border come from
/// the padding introduced by rotation and are dropped.
const BORDER_MARGIN: f64 = 3.0;

/// One simulated camera view.
#[derive(Debug, Clone)]
pub struct AffineView {
    pub tilt: f64,
    /// Longitude rotation in degrees.
    pub phi: f64,
    pub image: GrayImage,
    /// Row-major 2x3 affine map taking view pixel `(u, v)` to the original frame.
    pub inverse: [f64; 6],
}

impl AffineView {
    /// Latitude angle in degrees, `acos(1 / t)`.
    pub fn latitude(&self) -> f64 {
        (1.0 / self.tilt).acos().to_degrees()
    }

    pub fn to_original(&self, u: f64, v: f64) -> (f64, f64) {
        let a = &self.inverse;
        (a[0] * u + a[1] * v + a[2], a[3] * u + a[4] * v + a[5])
    }
}

/// Number of longitudes sampled for one tilt: `ceil(180 / (step / t))`.
pub fn longitude_count(tilt: f64, phi_step_deg: f64) -> usize {
    if tilt == 1.0 {
        return 1;
    }
    (180.0 / (phi_step_deg / tilt) - 1e-9).ceil() as usize
}

/// Rotates by `phi` degrees about the image center onto a canvas large enough
/// to hold the whole result. Returns the image and the map from canvas to
/// source coordinates.
fn rotate(img: &GrayImage, phi_deg: f64, fill: f64) -> (GrayImage, [f64; 6]) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let (s, c) = phi_deg.to_radians().sin_cos();
    let nw = (w * c.abs() + h * s.abs() - 1e-9).ceil().max(1.0);
    let nh = (w * s.abs() + h * c.abs() - 1e-9).ceil().max(1.0);
    let (cx, cy) = ((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let (ncx, ncy) = ((nw - 1.0) / 2.0, (nh - 1.0) / 2.0);
    // source = R^T (p - nc) + c
    let map = [c, s, cx - c * ncx - s * ncy, -s, c, cy + s * ncx - c * ncy];
    let out = GrayImage::from_fn(nw as usize, nh as usize, |x, y| {
        let (x, y) = (x as f64, y as f64);
        let sx = map[0] * x + map[1] * y + map[2];
        let sy = map[3] * x + map[4] * y + map[5];
        if sx < -0.5 || sy < -0.5 || sx > w - 0.5 || sy > h - 0.5 {
            fill
        } else {
            img.sample_bilinear(sx, sy)
        }
    });
    (out, map)
}

/// Simulated views: the identity for `t = 1`, and for every other tilt the
/// longitudes `0, step/t, 2 step/t, ...` below 180 degrees. Each view is
/// rotated, blurred along x by `0.8 sqrt(t^2 - 1)` and subsampled along x by `t`.
pub fn asift_views(img: &GrayImage, tilts: &[f64], phi_step_deg: f64) -> Result<Vec<AffineView>> {
    if tilts.iter().any(|&t| !(t >= 1.0) || !t.is_finite()) {
        return Err(Error::InvalidParameter("tilts must be finite and >= 1".into()));
    }
    if !tilts.contains(&1.0) {
        return Err(Error::InvalidParameter("tilt levels must include 1".into()));
    }
    if !(phi_step_deg > 0.0) {
        return Err(Error::InvalidParameter("longitude step must be positive".into()));
    }
    let fill = img.data().iter().sum::<f64>() / img.data().len() as f64;
    let mut views = Vec::new();
    for &t in tilts {
        if t == 1.0 {
            views.push(AffineView {
                tilt: 1.0,
                phi: 0.0,
                image: img.clone(),
                inverse: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
            });
            continue;
        }
        let step = phi_step_deg / t;
        for i in 0..longitude_count(t, phi_step_deg) {
            let phi = i as f64 * step;
            let (rotated, map) = rotate(img, phi, fill);
            let blurred = gaussian_blur_x(&rotated, ANTIALIAS_FACTOR * (t * t - 1.0).sqrt())?;
            let nw = ((blurred.width() as f64 / t).floor() as usize).max(1);
            let image = GrayImage::from_fn(nw, blurred.height(), |u, v| blurred.sample_bilinear(u as f64 * t, v as f64));
            // (u, v) -> (t u, v) -> source
            let inverse = [map[0] * t, map[1], map[2], map[3] * t, map[4], map[5]];
            views.push(AffineView {
                tilt: t,
                phi,
                image,
                inverse,
            });
        }
    }
    Ok(views)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsiftParams {
    pub sift: SiftParams,
    pub tilts: Vec<f64>,
    pub phi_step_deg: f64,
}

impl Default for AsiftParams {
    fn default() -> Self {
        Self {
            sift: SiftParams::default(),
            tilts: DEFAULT_TILTS.to_vec(),
            phi_step_deg: DEFAULT_PHI_STEP_DEG,
        }
    }
}

/// SIFT over every simulated view, keypoints mapped back to the input frame.
/// Views are processed in order; their features are concatenated.
pub fn extract_asift(img: &GrayImage, params: &AsiftParams) -> Result<Vec<LocalFeature>> {
    let views = asift_views(img, &params.tilts, params.phi_step_deg)?;
    let (w, h) = (img.width() as f64, img.height() as f64);
    let per_view = views
        .par_iter()
        .map(|view| {
            let feats = extract_sift(&view.image, &params.sift)?;
            if view.tilt == 1.0 {
                return Ok(feats);
            }
            Ok(feats
                .into_iter()
                .filter_map(|mut f| {
                    let (x, y) = view.to_original(f.keypoint.x, f.keypoint.y);
                    let inside = x >= BORDER_MARGIN
                        && y >= BORDER_MARGIN
                        && x <= w - 1.0 - BORDER_MARGIN
                        && y <= h - 1.0 - BORDER_MARGIN;
                    inside.then(|| {
                        f.keypoint.x = x;
                        f.keypoint.y = y;
                        f
                    })
                })
                .collect())
        })
        .collect::<Result<Vec<Vec<LocalFeature>>>>()?;
    Ok(per_view.into_iter().flatten().collect())
}
