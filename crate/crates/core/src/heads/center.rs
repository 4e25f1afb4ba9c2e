use super::check_labels;
use crate::error::{Error, Result};
use crate::numerics::Mat;

/// Result of one center-loss evaluation and center update.
#[derive(Clone, Debug, PartialEq)]
pub struct CenterStep {
    pub loss: f64,
    pub d_embeddings: Mat,
    pub new_centers: Mat,
}

/// Center loss `(1/2B)·Σ‖xᵢ − c_{yᵢ}‖²` with the running center update
/// `c_j ← c_j − α·Σ_{i: yᵢ=j}(c_j − xᵢ)/(1 + n_j)`.
pub fn center_loss_step(
    embeddings: &Mat,
    labels: &[usize],
    centers: &Mat,
    alpha: f64,
) -> Result<CenterStep> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "center update rate must lie in (0, 1], got {alpha}"
        )));
    }
    let (b, d) = embeddings.shape();
    if centers.cols() != d {
        return Err(Error::shape(
            "center_loss_step",
            format!("embedding dim {d} != center dim {}", centers.cols()),
        ));
    }
    check_labels(labels, centers.rows(), b)?;
    let bf = b as f64;
    let mut loss = 0.0;
    let mut d_embeddings = Mat::zeros(b, d);
    let mut pull = Mat::zeros(centers.rows(), d);
    let mut counts = vec![0usize; centers.rows()];
    for i in 0..b {
        let y = labels[i];
        counts[y] += 1;
        let (x, c) = (embeddings.row(i), centers.row(y));
        let g = d_embeddings.row_mut(i);
        for k in 0..d {
            let diff = x[k] - c[k];
            loss += diff * diff;
            g[k] = diff / bf;
        }
        for (p, (&cv, &xv)) in pull.row_mut(y).iter_mut().zip(c.iter().zip(x)) {
            *p += cv - xv;
        }
    }
    let mut new_centers = centers.clone();
    for (j, &n) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let denom = 1.0 + n as f64;
        for (c, p) in new_centers.row_mut(j).iter_mut().zip(pull.row(j)) {
            *c -= alpha * p / denom;
        }
    }
    Ok(CenterStep {
        loss: loss / (2.0 * bf),
        d_embeddings,
        new_centers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_point() {
        let c = Mat::from_rows(&[[1.0, 2.0], [-1.0, 0.5]]);
        let x = Mat::from_rows(&[[-1.0, 0.5], [1.0, 2.0]]);
        let s = center_loss_step(&x, &[1, 0], &c, 0.5).unwrap();
        assert_eq!(s.loss, 0.0);
        assert_eq!(s.new_centers, c);
    }

    #[test]
    fn single_sample_distance() {
        let c = Mat::from_rows(&[[0.0, 0.0]]);
        let x = Mat::from_rows(&[[3.0, 4.0]]);
        let s = center_loss_step(&x, &[0], &c, 1.0).unwrap();
        assert_eq!(s.loss, 12.5);
        assert_eq!(s.d_embeddings.row(0), &[3.0, 4.0]);
    }

    #[test]
    fn hand_update() {
        let c = Mat::from_rows(&[[0.0, 0.0]]);
        let x = Mat::from_rows(&[[2.0, 0.0]]);
        let s = center_loss_step(&x, &[0], &c, 0.5).unwrap();
        assert_eq!(s.new_centers.row(0), &[0.5, 0.0]);
    }

    #[test]
    fn missing_center_rejected() {
        let c = Mat::zeros(2, 2);
        assert!(center_loss_step(&Mat::zeros(1, 2), &[2], &c, 0.5).is_err());
        assert!(center_loss_step(&Mat::zeros(1, 2), &[0], &c, 0.0).is_err());
    }
}
