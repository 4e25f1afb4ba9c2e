use std::path::Path;

use crate::align::{read_ppm, Image};
use crate::error::{Error, Result};
use crate::numerics::{symmetric_eigen3, Prng};

use super::DatasetManifest;

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentSpec {
    pub hflip: bool,
    pub hflip_prob: f64,
    pub hsb: bool,
    /// Coefficient range for hue, saturation and brightness.
    pub hsb_range: (f64, f64),
    pub pca: bool,
    pub pca_sigma: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        AugmentSpec {
            hflip: true,
            hflip_prob: 0.5,
            hsb: true,
            hsb_range: (0.6, 1.4),
            pca: true,
            pca_sigma: 0.1,
        }
    }
}

impl AugmentSpec {
    pub fn disabled() -> Self {
        AugmentSpec {
            hflip: false,
            hsb: false,
            pca: false,
            ..AugmentSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::invalid(format!(
                "hflip_prob must lie in [0, 1], got {}",
                self.hflip_prob
            )));
        }
        let (lo, hi) = self.hsb_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= 0.0) {
            return Err(Error::invalid(format!(
                "hsb_range must satisfy 0 <= lo <= hi, got [{lo}, {hi}]"
            )));
        }
        if !(self.pca_sigma >= 0.0 && self.pca_sigma.is_finite()) {
            return Err(Error::invalid(format!(
                "pca_sigma must be >= 0, got {}",
                self.pca_sigma
            )));
        }
        Ok(())
    }
}

/// Principal axes of RGB colour: `vectors[row][k]` is component `row` of
/// axis `k`; eigenvalues descending.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PcaBasis {
    pub vectors: [[f64; 3]; 3],
    pub values: [f64; 3],
}

pub fn rgb_to_hsv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    [h, s, max]
}

pub fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Random flip, hue/saturation/brightness jitter and PCA colour noise,
/// applied in that order.
pub fn augment(
    img: &Image,
    spec: &AugmentSpec,
    rng: &mut Prng,
    pca: Option<&PcaBasis>,
) -> Result<Image> {
    spec.validate()?;
    if (spec.hsb || spec.pca) && img.channels() != 3 {
        return Err(Error::invalid(
            "colour augmentation needs a 3-channel image",
        ));
    }
    if spec.pca && pca.is_none() {
        return Err(Error::invalid(
            "PCA noise is enabled but no PCA basis was supplied",
        ));
    }
    let mut out = img.clone();
    if spec.hflip && rng.next_f64() < spec.hflip_prob {
        out = out.flip_horizontal();
    }
    if spec.hsb {
        let (lo, hi) = spec.hsb_range;
        let ch = rng.uniform(lo, hi);
        let cs = rng.uniform(lo, hi);
        let cv = rng.uniform(lo, hi);
        let shift = (ch - 1.0) * 360.0;
        for y in 0..out.height() {
            for x in 0..out.width() {
                let px = out.pixel_mut(y, x);
                let [h, s, v] = rgb_to_hsv([px[0], px[1], px[2]]);
                let rgb = hsv_to_rgb([
                    (h + shift).rem_euclid(360.0),
                    (s * cs).clamp(0.0, 1.0),
                    (v * cv).clamp(0.0, 1.0),
                ]);
                for (p, q) in px.iter_mut().zip(rgb) {
                    *p = q.clamp(0.0, 1.0);
                }
            }
        }
    }
    if let (true, Some(basis)) = (spec.pca, pca) {
        let alpha = [0; 3].map(|_| rng.normal() * spec.pca_sigma);
        let mut delta = [0.0; 3];
        for (c, d) in delta.iter_mut().enumerate() {
            for k in 0..3 {
                *d += alpha[k] * basis.values[k] * basis.vectors[c][k];
            }
        }
        for y in 0..out.height() {
            for x in 0..out.width() {
                for (p, d) in out.pixel_mut(y, x).iter_mut().zip(delta) {
                    *p = (*p + d).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(out)
}

/// Covariance eigenbasis of a set of RGB samples (Jacobi eigensolver).
pub fn rgb_pca_from_pixels(pixels: &[[f64; 3]]) -> Result<PcaBasis> {
    if pixels.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 pixels for RGB PCA, got {}",
            pixels.len()
        )));
    }
    let n = pixels.len() as f64;
    let mut mean = [0.0; 3];
    for p in pixels {
        for c in 0..3 {
            mean[c] += p[c];
        }
    }
    mean = mean.map(|m| m / n);
    let mut cov = [[0.0; 3]; 3];
    for p in pixels {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += d[i] * d[j];
            }
        }
    }
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n - 1.0;
        }
    }
    let (values, vectors) = symmetric_eigen3(cov);
    Ok(PcaBasis {
        vectors,
        values: values.map(|v| v.max(0.0)),
    })
}

/// RGB PCA over at most `sample_cap` pixels taken at an even stride across
/// all images.
pub fn rgb_pca_from_images(images: &[Image], sample_cap: usize) -> Result<PcaBasis> {
    if images.iter().any(|im| im.channels() != 3) {
        return Err(Error::invalid("RGB PCA needs 3-channel images"));
    }
    let total: usize = images.iter().map(|im| im.height() * im.width()).sum();
    let take = total.min(sample_cap);
    let mut wanted = (0..take)
        .map(|k| (k as u128 * total as u128 / take.max(1) as u128) as usize)
        .peekable();
    let mut pixels = Vec::with_capacity(take);
    let mut base = 0;
    for im in images {
        let n = im.height() * im.width();
        while let Some(&g) = wanted.peek() {
            if g >= base + n {
                break;
            }
            let local = g - base;
            let p = im.pixel(local / im.width(), local % im.width());
            pixels.push([p[0], p[1], p[2]]);
            wanted.next();
        }
        base += n;
    }
    rgb_pca_from_pixels(&pixels)
}

/// Loads every manifest image (PPM, relative to `root`) and computes the
/// RGB PCA basis over at most `sample_cap` pixels.
pub fn compute_rgb_pca(m: &DatasetManifest, root: &Path, sample_cap: usize) -> Result<PcaBasis> {
    let images = m
        .records()
        .iter()
        .map(|r| read_ppm(&root.join(&r.path)))
        .collect::<Result<Vec<_>>>()?;
    rgb_pca_from_images(&images, sample_cap)
}
