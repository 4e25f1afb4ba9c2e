//! Five-point face alignment: similarity estimation, bilinear warping and
//! the image and landmark file formats it consumes.

mod image;
mod transform;

use std::path::Path;

pub use image::{decode_ppm, encode_ppm, read_ppm, write_ppm, Image};
pub use transform::{estimate_similarity, residual, svd2, LandmarkSet, Point, SimilarityTransform};

use crate::error::{Error, Result};

/// Output side length of [`align_face`].
pub const ALIGNED_SIZE: usize = 112;

/// Canonical landmark positions in a 112×112 crop.
pub const CANONICAL_TEMPLATE: [Point; 5] = [
    [38.2946, 51.6963],
    [73.5318, 51.5014],
    [56.0252, 71.7366],
    [41.5493, 92.3655],
    [70.7299, 92.2041],
];

/// Resamples `img` so that input point p lands at `xf.apply(p)`.
///
/// Each output pixel is pulled back through the inverse transform and
/// bilinearly interpolated; samples outside the input are zero.
pub fn warp_image(
    img: &Image,
    xf: &SimilarityTransform,
    out_h: usize,
    out_w: usize,
) -> Result<Image> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid(format!(
            "output dims must be positive, got {out_h}x{out_w}"
        )));
    }
    if !(xf.scale > 0.0 && xf.scale.is_finite()) {
        return Err(Error::invalid(format!(
            "transform scale must be positive, got {}",
            xf.scale
        )));
    }
    let inv = xf.inverse();
    let mut out = Image::new(out_h, out_w, img.channels())?;
    for y in 0..out_h {
        for x in 0..out_w {
            let [sx, sy] = inv.apply([x as f64, y as f64]);
            for c in 0..img.channels() {
                out.set(y, x, c, img.sample_bilinear(sx, sy, c));
            }
        }
    }
    Ok(out)
}

/// Aligns a face to the canonical 112×112 template.
pub fn align_face(img: &Image, lm: &LandmarkSet) -> Result<Image> {
    let template = LandmarkSet::new(CANONICAL_TEMPLATE)?;
    align_face_with_template(img, lm, &template, ALIGNED_SIZE, ALIGNED_SIZE)
}

pub fn align_face_with_template(
    img: &Image,
    lm: &LandmarkSet,
    template: &LandmarkSet,
    out_h: usize,
    out_w: usize,
) -> Result<Image> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if lm
        .points()
        .iter()
        .any(|p| p[0] < 0.0 || p[1] < 0.0 || p[0] > w - 1.0 || p[1] > h - 1.0)
    {
        log::warn!(
            "landmarks fall outside the {}x{} image",
            img.width(),
            img.height()
        );
    }
    let xf = estimate_similarity(lm, template)?;
    warp_image(img, &xf, out_h, out_w)
}

/// One row of a landmark file.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkRecord {
    pub path: String,
    pub landmarks: LandmarkSet,
}

const LANDMARK_HEADER: [&str; 11] = [
    "path", "x1", "y1", "x2", "y2", "x3", "y3", "x4", "y4", "x5", "y5",
];

/// Reads `path,x1,y1,…,x5,y5` rows; the header line is required.
pub fn read_landmarks(path: &Path) -> Result<Vec<LandmarkRecord>> {
    let shown = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format {
            path: shown.clone(),
            msg: e.to_string(),
        })?;
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: shown.clone(),
        line: 1,
        msg: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != LANDMARK_HEADER {
        return Err(Error::Parse {
            path: shown,
            line: 1,
            msg: format!("expected header '{}'", LANDMARK_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let perr = |msg: String| Error::Parse {
            path: shown.clone(),
            line,
            msg,
        };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != 11 {
            return Err(perr(format!("expected 11 fields, found {}", rec.len())));
        }
        let mut v = [0.0; 10];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = rec[k + 1]
                .parse()
                .map_err(|_| perr(format!("bad coordinate '{}'", &rec[k + 1])))?;
        }
        let pts = [0, 1, 2, 3, 4].map(|k| [v[2 * k], v[2 * k + 1]]);
        let landmarks = LandmarkSet::new(pts).map_err(|e| perr(e.to_string()))?;
        out.push(LandmarkRecord {
            path: rec[0].to_string(),
            landmarks,
        });
    }
    Ok(out)
}

pub fn write_landmarks(path: &Path, records: &[LandmarkRecord]) -> Result<()> {
    let ioerr = |e: csv::Error| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(ioerr)?;
    w.write_record(LANDMARK_HEADER).map_err(ioerr)?;
    for r in records {
        let mut row = vec![r.path.clone()];
        for p in r.landmarks.points() {
            row.push(p[0].to_string());
            row.push(p[1].to_string());
        }
        w.write_record(&row).map_err(ioerr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
