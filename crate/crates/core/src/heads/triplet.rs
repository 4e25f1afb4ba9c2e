use crate::error::{Error, Result};
use crate::numerics::Mat;

#[derive(Clone, Debug, PartialEq)]
pub struct TripletOutput {
    pub loss: f64,
    pub d_anchor: Mat,
    pub d_positive: Mat,
    pub d_negative: Mat,
}

/// Mean hinge `max(0, ‖a−p‖² − ‖a−n‖² + margin)` over rows.
pub fn triplet_loss(
    anchor: &Mat,
    positive: &Mat,
    negative: &Mat,
    margin: f64,
) -> Result<TripletOutput> {
    if anchor.shape() != positive.shape() || anchor.shape() != negative.shape() {
        return Err(Error::shape(
            "triplet_loss",
            format!(
                "anchor {:?}, positive {:?}, negative {:?}",
                anchor.shape(),
                positive.shape(),
                negative.shape()
            ),
        ));
    }
    if !(margin >= 0.0) {
        return Err(Error::invalid(format!(
            "triplet margin must be >= 0, got {margin}"
        )));
    }
    let (b, d) = anchor.shape();
    let bf = b as f64;
    let mut out = TripletOutput {
        loss: 0.0,
        d_anchor: Mat::zeros(b, d),
        d_positive: Mat::zeros(b, d),
        d_negative: Mat::zeros(b, d),
    };
    for i in 0..b {
        let (a, p, n) = (anchor.row(i), positive.row(i), negative.row(i));
        let dp: f64 = a.iter().zip(p).map(|(x, y)| (x - y) * (x - y)).sum();
        let dn: f64 = a.iter().zip(n).map(|(x, y)| (x - y) * (x - y)).sum();
        let hinge = dp - dn + margin;
        if hinge <= 0.0 {
            continue;
        }
        out.loss += hinge;
        for k in 0..d {
            out.d_anchor[(i, k)] = 2.0 * (n[k] - p[k]) / bf;
            out.d_positive[(i, k)] = -2.0 * (a[k] - p[k]) / bf;
            out.d_negative[(i, k)] = 2.0 * (a[k] - n[k]) / bf;
        }
    }
    out.loss /= bf;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, Prng};

    #[test]
    fn inactive_when_positive_coincides() {
        let a = Mat::from_rows(&[[1.0, 1.0]]);
        let n = Mat::from_rows(&[[2.0, 0.0]]); // ‖a−n‖² = 2
        let out = triplet_loss(&a, &a, &n, 0.2).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.d_anchor.frobenius(), 0.0);
    }

    #[test]
    fn equal_distances_give_margin() {
        let a = Mat::from_rows(&[[0.0, 0.0]]);
        let p = Mat::from_rows(&[[1.0, 0.0]]);
        let n = Mat::from_rows(&[[0.0, -1.0]]);
        let out = triplet_loss(&a, &p, &n, 0.2).unwrap();
        assert!((out.loss - 0.2).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Prng::new(12);
        let a = rng.normal_mat(5, 4);
        let p = rng.normal_mat(5, 4);
        let n = rng.normal_mat(5, 4);
        let g = triplet_loss(&a, &p, &n, 1.0).unwrap();
        let fa =
            finite_diff_grad(|m| triplet_loss(m, &p, &n, 1.0).unwrap().loss, &a, 1e-6).unwrap();
        let fp =
            finite_diff_grad(|m| triplet_loss(&a, m, &n, 1.0).unwrap().loss, &p, 1e-6).unwrap();
        let fneg =
            finite_diff_grad(|m| triplet_loss(&a, &p, m, 1.0).unwrap().loss, &n, 1e-6).unwrap();
        assert!(relative_error(&g.d_anchor, &fa, 1e-8) < 1e-5);
        assert!(relative_error(&g.d_positive, &fp, 1e-8) < 1e-5);
        assert!(relative_error(&g.d_negative, &fneg, 1e-8) < 1e-5);
    }
}
