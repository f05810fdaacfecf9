use super::scale_space::DogPyramid;
use super::{Keypoint, SiftParams};

/// Integer DoG extremum before sub-pixel refinement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    pub octave: usize,
    /// DoG layer index, never the first or last of its octave.
    pub layer: usize,
    pub x: usize,
    pub y: usize,
}

/// Pixels strictly above or strictly below all 26 neighbors in the 3x3x3
/// block spanning the adjacent DoG layers. Border pixels and the outermost
/// layers are never candidates.
pub fn detect_extrema(dog: &DogPyramid) -> Vec<Candidate> {
    let mut out = Vec::new();
    for (o, layers) in dog.octaves.iter().enumerate() {
        if layers.len() < 3 {
            continue;
        }
        let (w, h) = (layers[0].width(), layers[0].height());
        if w < 3 || h < 3 {
            continue;
        }
        for l in 1..layers.len() - 1 {
            let (below, here, above) = (&layers[l - 1], &layers[l], &layers[l + 1]);
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let v = here.get(x, y);
                    if v == 0.0 {
                        continue;
                    }
                    let mut is_max = true;
                    let mut is_min = true;
                    'scan: for img in [below, here, above] {
                        for yy in y - 1..=y + 1 {
                            for xx in x - 1..=x + 1 {
                                if std::ptr::eq(img, here) && xx == x && yy == y {
                                    continue;
                                }
                                let n = img.get(xx, yy);
                                is_max &= v > n;
                                is_min &= v < n;
                                if !is_max && !is_min {
                                    break 'scan;
                                }
                            }
                        }
                    }
                    if is_max || is_min {
                        out.push(Candidate { octave: o, layer: l, x, y });
                    }
                }
            }
        }
    }
    out
}

/// Solves the 3x3 system `a * x = b` by Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = b[row];
        for c in row + 1..3 {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

/// Quadratic sub-pixel fit followed by the contrast and edge-response tests.
pub fn refine_keypoint(c: Candidate, dog: &DogPyramid, params: &SiftParams) -> Option<Keypoint> {
    let layers = dog.octaves.get(c.octave)?;
    let (w, h) = (layers[0].width() as isize, layers[0].height() as isize);
    let (mut x, mut y, mut l) = (c.x as isize, c.y as isize, c.layer as isize);
    let last_layer = layers.len() as isize - 2;

    let mut converged = None;
    for _ in 0..params.max_refine_steps {
        if l < 1 || l > last_layer || x < 1 || y < 1 || x > w - 2 || y > h - 2 {
            return None;
        }
        let d = |dl: isize, dx: isize, dy: isize| layers[(l + dl) as usize].get((x + dx) as usize, (y + dy) as usize);
        let v = d(0, 0, 0);
        let g = [
            0.5 * (d(0, 1, 0) - d(0, -1, 0)),
            0.5 * (d(0, 0, 1) - d(0, 0, -1)),
            0.5 * (d(1, 0, 0) - d(-1, 0, 0)),
        ];
        let dxx = d(0, 1, 0) + d(0, -1, 0) - 2.0 * v;
        let dyy = d(0, 0, 1) + d(0, 0, -1) - 2.0 * v;
        let dss = d(1, 0, 0) + d(-1, 0, 0) - 2.0 * v;
        let dxy = 0.25 * (d(0, 1, 1) - d(0, -1, 1) - d(0, 1, -1) + d(0, -1, -1));
        let dxs = 0.25 * (d(1, 1, 0) - d(1, -1, 0) - d(-1, 1, 0) + d(-1, -1, 0));
        let dys = 0.25 * (d(1, 0, 1) - d(1, 0, -1) - d(-1, 0, 1) + d(-1, 0, -1));
        let hess = [[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]];
        let offset = solve3(hess, [-g[0], -g[1], -g[2]])?;
        if offset.iter().all(|o| o.abs() < 0.5) {
            let value = v + 0.5 * (g[0] * offset[0] + g[1] * offset[1] + g[2] * offset[2]);
            converged = Some((offset, value, dxx, dyy, dxy));
            break;
        }
        if offset.iter().any(|o| o.abs() > 1e6 || !o.is_finite()) {
            return None;
        }
        x += offset[0].round() as isize;
        y += offset[1].round() as isize;
        l += offset[2].round() as isize;
    }
    let (offset, value, dxx, dyy, dxy) = converged?;

    if value.abs() < params.contrast_threshold {
        return None;
    }
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    let r = params.edge_ratio;
    if det <= 0.0 || tr * tr * r >= (r + 1.0) * (r + 1.0) * det {
        return None;
    }

    let scale = (1usize << c.octave) as f64;
    let s = dog.scales_per_octave as f64;
    let sub_layer = l as f64 + offset[2];
    Some(Keypoint {
        x: (x as f64 + offset[0]) * scale,
        y: (y as f64 + offset[1]) * scale,
        sigma: dog.sigma0 * 2f64.powf(sub_layer / s) * scale,
        orientation: 0.0,
        octave: c.octave,
        layer: l as usize,
        response: value,
    })
}

#[cfg(test)]
mod tests {
    use super::super::scale_space::{build_dog, build_scale_space};
    use super::*;
    use crate::image::GrayImage;

    fn blob(size: usize, cx: f64, cy: f64, sigma: f64, amp: f64) -> GrayImage {
        GrayImage::from_fn(size, size, |x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            0.2 + amp * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
        })
    }

    #[test]
    fn flat_and_plateau_give_nothing() {
        let dog = build_dog(&build_scale_space(&GrayImage::constant(32, 32, 0.5), 2, 2, 1.6).unwrap());
        assert!(detect_extrema(&dog).is_empty());
        // a plateau of equal values in the middle layer is not an extremum
        let mut dog = dog;
        let plateau = GrayImage::from_fn(32, 32, |x, y| if (10..13).contains(&x) && (10..13).contains(&y) { 1.0 } else { 0.0 });
        dog.octaves[0][1] = plateau;
        assert!(detect_extrema(&dog).is_empty());
    }

    #[test]
    fn solve3_matches_known_solution() {
        let a = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]];
        let x = [0.3, -1.2, 0.7];
        let b = [
            a[0][0] * x[0] + a[0][1] * x[1] + a[0][2] * x[2],
            a[1][0] * x[0] + a[1][1] * x[1] + a[1][2] * x[2],
            a[2][0] * x[0] + a[2][1] * x[1] + a[2][2] * x[2],
        ];
        let got = solve3(a, b).unwrap();
        for i in 0..3 {
            assert!((got[i] - x[i]).abs() < 1e-12);
        }
        assert!(solve3([[0.0; 3]; 3], [1.0; 3]).is_none());
    }

    #[test]
    fn isolated_blob_is_refined_near_center() {
        let params = SiftParams::default();
        let (cx, cy) = (32.3, 30.6);
        let img = blob(64, cx, cy, 3.0, 0.6);
        let dog = build_dog(&build_scale_space(&img, 2, 2, 1.6).unwrap());
        let kps: Vec<_> = detect_extrema(&dog)
            .into_iter()
            .filter_map(|c| refine_keypoint(c, &dog, &params))
            .collect();
        assert!(!kps.is_empty());
        let best = kps
            .iter()
            .max_by(|a, b| a.response.abs().total_cmp(&b.response.abs()))
            .unwrap();
        assert!((best.x - cx).abs() < 0.5 && (best.y - cy).abs() < 0.5, "{best:?}");
    }

    #[test]
    fn flat_candidate_fails_contrast() {
        let params = SiftParams::default();
        let dog = build_dog(&build_scale_space(&GrayImage::constant(32, 32, 0.5), 2, 2, 1.6).unwrap());
        let c = Candidate { octave: 0, layer: 1, x: 16, y: 16 };
        assert!(refine_keypoint(c, &dog, &params).is_none());
    }

    #[test]
    fn straight_edge_is_rejected() {
        let params = SiftParams::default();
        // hard vertical step edge whose contrast ripples slowly along y, so the
        // DoG has strict extrema along the edge
        let img = GrayImage::from_fn(64, 64, |x, y| {
            let ripple = 1.0 + 0.05 * (y as f64 * std::f64::consts::TAU / 32.0).cos();
            if x < 32 { 0.1 } else { 0.1 + 0.6 * ripple }
        });
        let dog = build_dog(&build_scale_space(&img, 1, 2, 1.6).unwrap());
        let candidates: Vec<_> = detect_extrema(&dog)
            .into_iter()
            .filter(|c| (c.x as isize - 32).abs() <= 8 && (10..54).contains(&c.y))
            .collect();
        assert!(!candidates.is_empty(), "edge should produce raw candidates");
        for c in candidates {
            assert!(refine_keypoint(c, &dog, &params).is_none(), "{c:?} survived");
        }
    }
}
