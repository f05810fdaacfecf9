//! Seeded synthetic "rooms" standing in for a real place-recognition set.
//!
//! Each class is a wide panorama with its own palette and layout style;
//! images are crops of it under per-sequence lighting, with jitter and noise.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::manifest::{Entry, Manifest};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::pnm::{write_pnm, PnmKind};
use crate::synth::blob_texture;

/// Room names used for the first nine classes.
pub const ROOM_NAMES: [&str; 9] = [
    "Corridor",
    "ElevatorArea",
    "LoungeArea",
    "PrinterRoom",
    "ProfessorOffice",
    "StudentOffice",
    "TechnicalRoom",
    "Toilet",
    "VisioConference",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: usize,
    pub images_per_class: usize,
    pub sequences: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 9,
            images_per_class: 60,
            sequences: 3,
            width: 256,
            height: 192,
            seed: 0,
        }
    }
}

fn class_name(c: usize) -> String {
    ROOM_NAMES.get(c).map_or_else(|| format!("Room{c}"), |s| s.to_string())
}

#[derive(Clone, Copy)]
enum Layout {
    Blobs,
    Stripes,
    Tiles,
}

struct Room {
    panorama: Image,
}

fn hsv_color(h: f64, s: f64, v: f64) -> [f64; 3] {
    crate::image::hsv_to_rgb(crate::image::HsvPixel { h: h.rem_euclid(360.0), s, v })
}

fn build_room(class: usize, spec: &SynthSpec) -> Room {
    let mix = |k: u64| spec.seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k + 1);
    // classes come in pairs sharing one palette, so color alone is ambiguous
    let mut prng = ChaCha8Rng::seed_from_u64(mix(1000 + class as u64 / 2));
    let base = prng.gen_range(0.0..360.0);
    let palette: Vec<[f64; 3]> = (0..4)
        .map(|_| {
            hsv_color(
                base + prng.gen_range(-40.0..40.0),
                prng.gen_range(0.2..0.8),
                prng.gen_range(0.5..1.0),
            )
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix(class as u64));
    let (w, h) = (spec.width * 3, spec.height);
    let layout = [Layout::Blobs, Layout::Stripes, Layout::Tiles][class % 3];
    let shade = blob_texture(w, h, rng.gen(), 0.05, 1.0);
    let field = blob_texture(w, h, rng.gen(), 0.0, 1.0);
    let cell = rng.gen_range(10..20usize);
    let mut stripes = Vec::new();
    let mut x = 0;
    while x < w {
        let width = rng.gen_range(5..18usize);
        stripes.push((x + width, rng.gen_range(0..palette.len())));
        x += width;
    }
    let tiles: Vec<usize> = (0..(w / cell + 1) * (h / cell + 1)).map(|_| rng.gen_range(0..palette.len())).collect();
    let panorama = Image::from_fn(w, h, |x, y| {
        let (color, edge) = match layout {
            Layout::Blobs => {
                let v = field.get(x, y);
                (palette[((v * 4.0) as usize).min(3)], 1.0)
            }
            Layout::Stripes => {
                let i = stripes.iter().position(|&(end, _)| x < end).unwrap_or(stripes.len() - 1);
                (palette[stripes[i].1], if y % 24 < 2 { 0.4 } else { 1.0 })
            }
            Layout::Tiles => {
                let (cx, cy) = (x / cell, y / cell);
                let grout = x % cell < 2 || y % cell < 2;
                (palette[tiles[cy * (w / cell + 1) + cx]], if grout { 0.3 } else { 1.0 })
            }
        };
        let s = shade.get(x, y) * edge;
        [color[0] * s, color[1] * s, color[2] * s]
    });
    Room { panorama }
}

fn render_view(room: &Room, spec: &SynthSpec, sequence: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // capture runs differ in overall lighting
    let lighting = [1.0, 0.9, 1.1, 0.8, 1.2][sequence % 5];
    let gain = lighting * (1.0 + rng.gen_range(-0.05..0.05));
    let tint: [f64; 3] = std::array::from_fn(|_| 1.0 + rng.gen_range(-0.03..0.03));
    let dx = rng.gen_range(0..=room.panorama.width() - spec.width);
    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    Image::from_fn(spec.width, spec.height, |x, y| {
        let p = room.panorama.get(x + dx, y);
        std::array::from_fn(|c| (p[c] * gain * tint[c] + noise.sample(&mut rng)).clamp(0.0, 1.0))
    })
}

/// Writes the images as binary PPM under `dir/images` and returns the
/// manifest (also written to `dir/manifest.tsv`). Sequences are numbered
/// from 1 and images are spread round-robin over them.
pub fn synth_dataset(dir: &Path, spec: &SynthSpec) -> Result<Manifest> {
    if spec.classes == 0 || spec.images_per_class == 0 || spec.sequences == 0 {
        return Err(Error::InvalidParameter("dataset needs classes, images and sequences".into()));
    }
    if spec.width < 32 || spec.height < 32 {
        return Err(Error::InvalidParameter("synthetic images must be at least 32x32".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..spec.classes)
        .flat_map(|c| (0..spec.images_per_class).map(move |i| (c, i)))
        .collect();
    let rooms: Vec<Room> = (0..spec.classes).into_par_iter().map(|c| build_room(c, spec)).collect();
    let entries = jobs
        .par_iter()
        .map(|&(c, i)| {
            let name = class_name(c);
            let sequence = i % spec.sequences;
            let rel = PathBuf::from("images").join(&name).join(format!("{:03}.ppm", i));
            let path = dir.join(&rel);
            let view_seed = spec.seed.wrapping_add(((c as u64) << 32) | i as u64).wrapping_mul(0x2545_f491_4f6c_dd1d);
            let img = render_view(&rooms[c], spec, sequence, view_seed);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_pnm(&img, &path, PnmKind::RgbBinary, 255)?;
            Ok(Entry {
                path,
                label: name,
                sequence: (sequence + 1).to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(entries)?;
    let mpath = dir.join("manifest.tsv");
    fs::write(&mpath, manifest.to_tsv(dir)).map_err(|e| Error::io(&mpath, e))?;
    Ok(manifest)
}
