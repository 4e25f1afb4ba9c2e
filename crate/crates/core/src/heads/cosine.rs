use crate::error::{Error, Result};
use crate::numerics::{dot, gemm_nt, norm2, Mat, DEFAULT_NORM_EPS};

/// Cosine similarities between every embedding and every class weight.
#[derive(Clone, Debug)]
pub struct CosineLogits {
    /// B×C, clamped to `[-1, 1]`.
    pub cos: Mat,
    /// Number of embedding or weight rows whose norm fell under the
    /// normalization epsilon.
    pub warnings: usize,
}

/// Rows divided by `max(‖row‖, eps)` together with the original norms.
#[derive(Clone, Debug)]
pub(crate) struct Normalized {
    pub unit: Mat,
    pub norms: Vec<f64>,
}

impl Normalized {
    pub fn degenerate_rows(&self) -> usize {
        self.norms
            .iter()
            .filter(|&&n| n <= DEFAULT_NORM_EPS)
            .count()
    }
}

pub(crate) fn normalize_with_norms(m: &Mat) -> Normalized {
    let mut unit = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let row = unit.row_mut(r);
        let n = norm2(row);
        let d = n.max(DEFAULT_NORM_EPS);
        for v in row.iter_mut() {
            *v /= d;
        }
        norms.push(n);
    }
    Normalized { unit, norms }
}

/// Backward pass of `x ↦ x / max(‖x‖, eps)`, row by row:
/// `(I − x̂x̂ᵀ)·g / ‖x‖`, or `g / eps` inside the clamped region.
pub(crate) fn normalization_backward(n: &Normalized, d_unit: &Mat) -> Mat {
    let mut out = d_unit.clone();
    for r in 0..out.rows() {
        let norm = n.norms[r];
        let g = out.row_mut(r);
        if norm <= DEFAULT_NORM_EPS {
            for v in g.iter_mut() {
                *v /= DEFAULT_NORM_EPS;
            }
            continue;
        }
        let u = n.unit.row(r);
        let proj = dot(g, u);
        for (gv, uv) in g.iter_mut().zip(u) {
            *gv = (*gv - proj * uv) / norm;
        }
    }
    out
}

/// Clamps to `[-1, 1]` and returns the mask of entries that were inside.
pub(crate) fn clamp_cosines(raw: &mut Mat) -> Vec<bool> {
    raw.as_mut_slice()
        .iter_mut()
        .map(|v| {
            if *v > 1.0 {
                *v = 1.0;
                false
            } else if *v < -1.0 {
                *v = -1.0;
                false
            } else {
                true
            }
        })
        .collect()
}

pub fn cosine_logits(embeddings: &Mat, weights: &Mat) -> Result<CosineLogits> {
    if embeddings.cols() != weights.cols() {
        return Err(Error::shape(
            "cosine_logits",
            format!(
                "embedding dim {} != weight dim {}",
                embeddings.cols(),
                weights.cols()
            ),
        ));
    }
    let x = normalize_with_norms(embeddings);
    let w = normalize_with_norms(weights);
    let mut cos = gemm_nt(&x.unit, &w.unit)?;
    clamp_cosines(&mut cos);
    Ok(CosineLogits {
        cos,
        warnings: x.degenerate_rows() + w.degenerate_rows(),
    })
}
