//! Raster types, color conversion and the Gaussian/decimation primitives
//! used by every feature extractor.

use crate::error::{Error, Result};

/// Row-major RGB raster with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[f64; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[f64; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero dimension {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels
            .iter()
            .flatten()
            .any(|c| !(0.0..=1.0).contains(c) || c.is_nan())
        {
            return Err(Error::InvalidImage("channel value outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)`; values are clamped into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        assert!(width > 0 && height > 0);
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let p = f(x, y);
                pixels.push([clamp01(p[0]), clamp01(p[1]), clamp01(p[2])]);
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixels[y * self.width + x]
    }

    /// Single channel plane (0 = r, 1 = g, 2 = b).
    pub fn channel(&self, c: usize) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.pixels.iter().map(|p| p[c]).collect(),
        }
    }

    /// Grayscale view: unweighted mean `(r + g + b) / 3`.
    pub fn to_grayscale(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .pixels
                .iter()
                .map(|p| (p[0] + p[1] + p[2]) / 3.0)
                .collect(),
        }
    }
}

impl From<&GrayImage> for Image {
    fn from(g: &GrayImage) -> Self {
        Image::from_fn(g.width, g.height, |x, y| {
            let v = g.get(x, y);
            [v, v, v]
        })
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Row-major single-channel raster.
///
/// Intensities loaded from files or derived from an [`Image`] live in `[0, 1]`;
/// intermediate results (difference-of-Gaussian layers) may be signed.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("zero dimension {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0);
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with clamp-to-border addressing.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    /// Bilinear sample at a real-valued position, clamping at the borders.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.get_clamped(xi, yi);
        let b = self.get_clamped(xi + 1, yi);
        let c = self.get_clamped(xi, yi + 1);
        let d = self.get_clamped(xi + 1, yi + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise `self - other`.
    pub fn sub(&self, other: &GrayImage) -> GrayImage {
        assert_eq!((self.width, self.height), (other.width, other.height));
        GrayImage {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Quarter-turn counter-clockwise rotation (as displayed with y pointing down):
    /// the pixel at `(x, y)` moves to `(y, w - 1 - x)`.
    pub fn rotate90(&self) -> GrayImage {
        let (w, h) = (self.width, self.height);
        GrayImage::from_fn(h, w, |nx, ny| self.get(w - 1 - ny, nx))
    }
}

/// Color in hue/saturation/value form: `h` in degrees `[0, 360)`, `s` and `v` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HsvPixel {
    pub h: f64,
    pub s: f64,
    pub v: f64,
}

/// Hexcone RGB to HSV conversion.
///
/// Achromatic input (max == min) yields `h = 0, s = 0`; black additionally has `v = 0`.
pub fn rgb_to_hsv(r: f64, g: f64, b: f64) -> HsvPixel {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if max <= 0.0 {
        return HsvPixel {
            h: 0.0,
            s: 0.0,
            v: 0.0,
        };
    }
    if delta <= 0.0 {
        return HsvPixel {
            h: 0.0,
            s: 0.0,
            v: max,
        };
    }
    let sector = if max == r {
        (g - b) / delta
    } else if max == g {
        2.0 + (b - r) / delta
    } else {
        4.0 + (r - g) / delta
    };
    let mut h = 60.0 * sector;
    if h < 0.0 {
        h += 360.0;
    }
    if h >= 360.0 {
        h -= 360.0;
    }
    HsvPixel {
        h,
        s: delta / max,
        v: max,
    }
}

/// Standard inverse of [`rgb_to_hsv`].
pub fn hsv_to_rgb(p: HsvPixel) -> [f64; 3] {
    let c = p.v * p.s;
    let hp = p.h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = p.v - c;
    [r + m, g + m, b + m]
}

/// Normalized 1-D Gaussian kernel truncated at radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gaussian sigma must be positive, got {sigma}"
        )));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    Ok(k)
}

fn convolve_rows(img: &GrayImage, kernel: &[f64]) -> GrayImage {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width, img.height);
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (i, k) in kernel.iter().enumerate() {
                let sx = (x as isize + i as isize - r).clamp(0, w as isize - 1) as usize;
                acc += k * row[sx];
            }
            out[y * w + x] = acc;
        }
    }
    GrayImage {
        width: w,
        height: h,
        data: out,
    }
}

fn convolve_cols(img: &GrayImage, kernel: &[f64]) -> GrayImage {
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (img.width, img.height);
    let mut out = vec![0.0; w * h];
    for (i, k) in kernel.iter().enumerate() {
        let off = i as isize - r;
        for y in 0..h {
            let sy = (y as isize + off).clamp(0, h as isize - 1) as usize;
            let src = &img.data[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += k * s;
            }
        }
    }
    GrayImage {
        width: w,
        height: h,
        data: out,
    }
}

/// Separable Gaussian blur with clamp-to-border edges.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let kernel = gaussian_kernel(sigma)?;
    Ok(convolve_cols(&convolve_rows(img, &kernel), &kernel))
}

/// Blur along the x axis only.
pub fn gaussian_blur_x(img: &GrayImage, sigma: f64) -> Result<GrayImage> {
    let kernel = gaussian_kernel(sigma)?;
    Ok(convolve_rows(img, &kernel))
}

/// Decimation by two: output pixel `(x, y)` is source pixel `(2x, 2y)`.
pub fn downsample2(img: &GrayImage) -> Result<GrayImage> {
    if img.width < 2 || img.height < 2 {
        return Err(Error::ImageTooSmall(format!(
            "cannot downsample {}x{}",
            img.width, img.height
        )));
    }
    let (w, h) = (img.width / 2, img.height / 2);
    Ok(GrayImage::from_fn(w, h, |x, y| img.get(2 * x, 2 * y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_is_channel_mean() {
        let img = Image::new(2, 1, vec![[1.0, 1.0, 1.0], [1.0, 0.0, 0.0]]).unwrap();
        let g = img.to_grayscale();
        assert_eq!(g.get(0, 0), 1.0);
        assert!((g.get(1, 0) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_image_grays_to_constant() {
        let img = Image::from_fn(5, 4, |_, _| [0.2, 0.4, 0.6]);
        let g = img.to_grayscale();
        assert!(g.data().iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn image_rejects_bad_input() {
        assert!(Image::new(0, 1, vec![]).is_err());
        assert!(Image::new(2, 2, vec![[0.0; 3]; 3]).is_err());
        assert!(Image::new(1, 1, vec![[1.5, 0.0, 0.0]]).is_err());
    }

    #[test]
    fn hsv_reference_colors() {
        let red = rgb_to_hsv(1.0, 0.0, 0.0);
        assert_eq!((red.h, red.s, red.v), (0.0, 1.0, 1.0));
        let blue = rgb_to_hsv(0.0, 0.0, 1.0);
        assert_eq!((blue.h, blue.s, blue.v), (240.0, 1.0, 1.0));
        let gray = rgb_to_hsv(0.5, 0.5, 0.5);
        assert_eq!((gray.h, gray.s, gray.v), (0.0, 0.0, 0.5));
        let black = rgb_to_hsv(0.0, 0.0, 0.0);
        assert_eq!((black.h, black.s, black.v), (0.0, 0.0, 0.0));
    }

    #[test]
    fn hsv_negative_sector_wraps() {
        // max = r with g < b gives a negative sector
        let p = rgb_to_hsv(1.0, 0.0, 0.5);
        assert!((p.h - 330.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_sums_to_one() {
        for sigma in [0.3, 0.8, 1.6, 2.5, 7.0] {
            let k = gaussian_kernel(sigma).unwrap();
            let s: f64 = k.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert_eq!(k.len(), 2 * (3.0 * sigma).ceil() as usize + 1);
        }
        assert!(gaussian_kernel(0.0).is_err());
        assert!(gaussian_kernel(-1.0).is_err());
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let img = GrayImage::constant(17, 9, 0.37);
        let out = gaussian_blur(&img, 2.3).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-12));
    }

    #[test]
    fn blurred_impulse_follows_gaussian() {
        let sigma = 1.6;
        let n = 41;
        let c = n / 2;
        let img = GrayImage::from_fn(n, n, |x, y| if x == c && y == c { 1.0 } else { 0.0 });
        let out = gaussian_blur(&img, sigma).unwrap();
        // Separable kernel is a renormalized sampled 2-D Gaussian, so ratios to the
        // center sample follow exp(-r^2 / 2 sigma^2) exactly.
        let center = out.get(c, c);
        let radius = (3.0 * sigma).ceil() as usize;
        let mut max_rel: f64 = 0.0;
        for y in c - radius..=c + radius {
            for x in c - radius..=c + radius {
                let dx = x as f64 - c as f64;
                let dy = y as f64 - c as f64;
                let expected = center * (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                max_rel = max_rel.max((out.get(x, y) - expected).abs() / expected);
            }
        }
        assert!(max_rel < 1e-6, "max relative error {max_rel}");
    }

    #[test]
    fn downsample_dims_and_phase() {
        let img = GrayImage::from_fn(4, 4, |x, y| ((x + y) % 2) as f64);
        let d = downsample2(&img).unwrap();
        assert_eq!((d.width(), d.height()), (2, 2));
        assert!(d.data().iter().all(|&v| v == 0.0));
        let odd = GrayImage::from_fn(5, 7, |x, y| ((x + y + 1) % 2) as f64);
        let d = downsample2(&odd).unwrap();
        assert_eq!((d.width(), d.height()), (2, 3));
        assert!(d.data().iter().all(|&v| v == 1.0));
        assert!(downsample2(&GrayImage::constant(1, 5, 0.0)).is_err());
    }

    #[test]
    fn rotate90_roundtrip() {
        let img = GrayImage::from_fn(5, 3, |x, y| (x * 10 + y) as f64);
        let r = img.rotate90();
        assert_eq!((r.width(), r.height()), (3, 5));
        assert_eq!(r.get(2, 4 - 1), img.get(1, 2));
        let back = r.rotate90().rotate90().rotate90();
        assert_eq!(back, img);
    }
}
