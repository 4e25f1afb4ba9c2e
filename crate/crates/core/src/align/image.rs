use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major image with interleaved channels and values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::from_vec(
            height,
            width,
            channels,
            vec![0.0; height * width * channels],
        )
    }

    /// Builds an image from raw values, clamping them into [0, 1].
    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        mut data: Vec<f64>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "image dims must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(
                "Image::from_vec",
                format!("{} values for {height}x{width}x{channels}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image pixel".into()));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::from_vec(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f64) {
        self.data[(y * self.width + x) * self.channels + c] = v.clamp(0.0, 1.0);
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn clamp_in_place(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Bilinear sample at continuous coordinates (pixel centers sit on
    /// integers); neighbours outside the image count as zero.
    pub fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let fetch = |yy: f64, xx: f64| -> f64 {
            if xx < 0.0 || yy < 0.0 || xx >= self.width as f64 || yy >= self.height as f64 {
                0.0
            } else {
                self.get(yy as usize, xx as usize, c)
            }
        };
        let top = (1.0 - fx) * fetch(y0, x0) + fx * fetch(y0, x0 + 1.0);
        let bottom = (1.0 - fx) * fetch(y0 + 1.0, x0) + fx * fetch(y0 + 1.0, x0 + 1.0);
        (1.0 - fy) * top + fy * bottom
    }

    /// Luma conversion (ITU-R BT.601 weights); single-channel images pass through.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        Image::from_vec(self.height, self.width, 1, data).expect("same dims")
    }

    /// Bilinear resize mapping corner pixel centers onto corner pixel centers.
    pub fn resize(&self, height: usize, width: usize) -> Result<Image> {
        let sy = if height > 1 {
            (self.height - 1) as f64 / (height - 1) as f64
        } else {
            0.0
        };
        let sx = if width > 1 {
            (self.width - 1) as f64 / (width - 1) as f64
        } else {
            0.0
        };
        Image::from_fn(height, width, self.channels, |y, x, c| {
            let yy = (y as f64 * sy).min((self.height - 1) as f64);
            let xx = (x as f64 * sx).min((self.width - 1) as f64);
            self.sample_clamped(xx, yy, c)
        })
    }

    fn sample_clamped(&self, x: f64, y: f64, c: usize) -> f64 {
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = (1.0 - fx) * self.get(y0, x0, c) + fx * self.get(y0, x1, c);
        let bottom = (1.0 - fx) * self.get(y1, x0, c) + fx * self.get(y1, x1, c);
        (1.0 - fy) * top + fy * bottom
    }

    /// Horizontal mirror.
    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.pixel_mut(y, x)
                    .copy_from_slice(self.pixel(y, self.width - 1 - x));
            }
        }
        out
    }
}

/// Reads a binary NetPBM image: P6 (RGB) or P5 (gray), maxval 255.
pub fn read_ppm(path: &Path) -> Result<Image> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|msg| Error::Format {
        path: path.display().to_string(),
        msg,
    })
}

pub fn decode_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() && bytes[pos] != b'#' {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let channels = match fields[0].as_str() {
        "P6" => 3,
        "P5" => 1,
        other => return Err(format!("unsupported magic '{other}' (expected P6 or P5)")),
    };
    let parse = |s: &str, what: &str| -> std::result::Result<usize, String> {
        s.parse().map_err(|_| format!("bad {what} '{s}'"))
    };
    let width = parse(&fields[1], "width")?;
    let height = parse(&fields[2], "height")?;
    let maxval = parse(&fields[3], "maxval")?;
    if maxval != 255 {
        return Err(format!("maxval {maxval} unsupported (expected 255)"));
    }
    let n = width * height * channels;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or("raster shorter than header promises")?;
    let data = raster.iter().map(|&b| b as f64 / 255.0).collect();
    Image::from_vec(height, width, channels, data).map_err(|e| e.to_string())
}

pub fn encode_ppm(img: &Image) -> Vec<u8> {
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.as_slice().iter().map(|v| (v * 255.0).round() as u8));
    out
}

pub fn write_ppm(path: &Path, img: &Image) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_ppm(img))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip_is_byte_exact() {
        let mut bytes = b"P6\n# comment\n3 2\n255\n".to_vec();
        bytes.extend((0u8..18).map(|b| b.wrapping_mul(37)));
        let img = decode_ppm(&bytes).unwrap();
        assert_eq!(img.channels(), 3);
        assert_eq!((img.height(), img.width()), (2, 3));
        let again = encode_ppm(&img);
        assert_eq!(decode_ppm(&again).unwrap(), img);
        assert_eq!(&again[again.len() - 18..], &bytes[bytes.len() - 18..]);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(decode_ppm(b"P3\n1 1\n255\n").is_err());
        assert!(decode_ppm(b"P6\n1 1\n65535\n\0\0\0").is_err());
        assert!(decode_ppm(b"P6\n2 2\n255\n\0").is_err());
    }

    #[test]
    fn values_are_clamped() {
        let img = Image::from_vec(1, 2, 1, vec![-0.5, 1.5]).unwrap();
        assert_eq!(img.as_slice(), &[0.0, 1.0]);
        assert!(Image::new(0, 3, 1).is_err());
        assert!(Image::new(2, 3, 2).is_err());
    }

    #[test]
    fn flip_is_involution() {
        let img = Image::from_fn(4, 5, 3, |y, x, c| (y * 15 + x * 3 + c) as f64 / 60.0).unwrap();
        assert_ne!(img.flip_horizontal(), img);
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
    }

    #[test]
    fn bilinear_on_linear_ramp() {
        let img = Image::from_fn(5, 5, 1, |_, x, _| x as f64 / 8.0).unwrap();
        assert!((img.sample_bilinear(1.25, 2.5, 0) - 1.25 / 8.0).abs() < 1e-15);
        assert_eq!(img.sample_bilinear(-3.0, 0.0, 0), 0.0);
    }
}
