use super::Mat;
use crate::error::{Error, Result};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Central-difference gradient of a scalar function of a matrix.
///
/// Entry `(r, c)` is `(f(x + h·e) − f(x − h·e)) / 2h`. Any non-finite
/// evaluation aborts with the offending entry named.
pub fn finite_diff_grad(mut f: impl FnMut(&Mat) -> f64, x: &Mat, h: f64) -> Result<Mat> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut probe = x.clone();
    let mut grad = Mat::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let orig = x[(r, c)];
            probe[(r, c)] = orig + h;
            let plus = f(&probe);
            probe[(r, c)] = orig - h;
            let minus = f(&probe);
            probe[(r, c)] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "f evaluated to {plus} / {minus} when perturbing entry ({r}, {c})"
                )));
            }
            grad[(r, c)] = (plus - minus) / (2.0 * h);
        }
    }
    Ok(grad)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)` in the Frobenius norm.
pub fn relative_error(a: &Mat, b: &Mat, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut diff = a.clone();
    diff.add_scaled(b, -1.0);
    diff.frobenius() / a.frobenius().max(b.frobenius()).max(floor)
}
