//! Seeded procedural imagery used by tests and the synthetic dataset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::GrayImage;

/// Texture of randomly placed, sized and signed Gaussian blobs over a mid-gray
/// background, squashed into `[lo, hi]`.
pub fn blob_texture(width: usize, height: usize, seed: u64, lo: f64, hi: f64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let area = (width * height) as f64;
    let count = (area / 120.0).ceil() as usize;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..count)
        .map(|_| {
            let x = rng.gen_range(0.0..width as f64);
            let y = rng.gen_range(0.0..height as f64);
            let s = rng.gen_range(1.2f64..6.0);
            let a = if rng.gen_bool(0.5) { 1.0 } else { -1.0 } * rng.gen_range(0.4..1.0);
            (x, y, s, a)
        })
        .collect();
    let mut raw = vec![0.0; width * height];
    for &(bx, by, s, a) in &blobs {
        let r = (3.5 * s).ceil() as isize;
        let (cx, cy) = (bx as isize, by as isize);
        let denom = 2.0 * s * s;
        for y in (cy - r).max(0)..(cy + r + 1).min(height as isize) {
            for x in (cx - r).max(0)..(cx + r + 1).min(width as isize) {
                let (dx, dy) = (x as f64 - bx, y as f64 - by);
                raw[y as usize * width + x as usize] += a * (-(dx * dx + dy * dy) / denom).exp();
            }
        }
    }
    // soft saturation keeps local contrast where blobs pile up
    GrayImage::new(width, height, raw.iter().map(|v| lo + (hi - lo) * 0.5 * (1.0 + (1.5 * v).tanh())).collect())
        .expect("dimensions match")
}
