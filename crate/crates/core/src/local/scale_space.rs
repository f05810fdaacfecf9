use crate::error::{Error, Result};
use crate::image::{downsample2, gaussian_blur, GrayImage};

/// Smallest side an octave may have.
pub const MIN_OCTAVE_SIDE: usize = 8;

#[derive(Debug, Clone)]
pub struct Octave {
    /// Blurred images of this octave, finest first.
    pub levels: Vec<GrayImage>,
    /// Absolute blur of each level, in base-image pixels.
    pub sigmas: Vec<f64>,
}

/// Gaussian scale space: `scales_per_octave + 3` levels per octave with blur
/// growing by `k = 2^(1/s)`; each octave halves the resolution.
#[derive(Debug, Clone)]
pub struct ScaleSpace {
    pub octaves: Vec<Octave>,
    pub scales_per_octave: usize,
    pub sigma0: f64,
}

impl ScaleSpace {
    pub fn k(&self) -> f64 {
        2f64.powf(1.0 / self.scales_per_octave as f64)
    }
}

/// Number of octaves an image of this size can support.
pub fn max_octaves(width: usize, height: usize) -> usize {
    let mut side = width.min(height);
    let mut n = 0;
    while side >= MIN_OCTAVE_SIDE {
        n += 1;
        side /= 2;
    }
    n
}

pub fn build_scale_space(img: &GrayImage, octaves: usize, scales_per_octave: usize, sigma0: f64) -> Result<ScaleSpace> {
    if octaves == 0 || scales_per_octave == 0 {
        return Err(Error::InvalidParameter(
            "octave and scale counts must be positive".into(),
        ));
    }
    if !(sigma0 > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma0 must be positive, got {sigma0}")));
    }
    if max_octaves(img.width(), img.height()) < octaves {
        return Err(Error::ImageTooSmall(format!(
            "{}x{} image cannot hold {octaves} octaves (min side {MIN_OCTAVE_SIDE} px)",
            img.width(),
            img.height()
        )));
    }
    let s = scales_per_octave;
    let k = 2f64.powf(1.0 / s as f64);
    let local: Vec<f64> = (0..s + 3).map(|i| sigma0 * k.powi(i as i32)).collect();

    let mut out: Vec<Octave> = Vec::with_capacity(octaves);
    for o in 0..octaves {
        let levels = if o == 0 {
            local
                .iter()
                .map(|&sig| gaussian_blur(img, sig))
                .collect::<Result<Vec<_>>>()?
        } else {
            // the level at twice the base blur, decimated, is at sigma0 in the new frame
            let seed = downsample2(&out[o - 1].levels[s])?;
            let mut levels = vec![seed.clone()];
            for &sig in &local[1..] {
                let extra = (sig * sig - sigma0 * sigma0).sqrt();
                levels.push(gaussian_blur(&seed, extra)?);
            }
            levels
        };
        let scale = (1usize << o) as f64;
        out.push(Octave {
            levels,
            sigmas: local.iter().map(|s| s * scale).collect(),
        });
    }
    Ok(ScaleSpace {
        octaves: out,
        scales_per_octave,
        sigma0,
    })
}

/// Adjacent differences `L(k sigma) - L(sigma)` per octave.
#[derive(Debug, Clone)]
pub struct DogPyramid {
    pub octaves: Vec<Vec<GrayImage>>,
    pub scales_per_octave: usize,
    pub sigma0: f64,
}

pub fn build_dog(ss: &ScaleSpace) -> DogPyramid {
    DogPyramid {
        octaves: ss
            .octaves
            .iter()
            .map(|o| o.levels.windows(2).map(|w| w[1].sub(&w[0])).collect())
            .collect(),
        scales_per_octave: ss.scales_per_octave,
        sigma0: ss.sigma0,
    }
}
