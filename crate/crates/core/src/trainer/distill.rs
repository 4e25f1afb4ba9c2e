use crate::error::{Error, Result};
use crate::heads::cross_entropy;
use crate::numerics::Mat;

fn log_softmax(z: &[f64], t: f64) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max) / t;
    let lse = max + z.iter().map(|v| (v / t - max).exp()).sum::<f64>().ln();
    z.iter().map(|v| v / t - lse).collect()
}

/// `(1−β)·CE(student, labels) + β·T²·KL(softmax(teacher/T) ‖ softmax(student/T))`,
/// batch-averaged, with its gradient w.r.t. the student logits.
pub fn distill_loss(
    student: &Mat,
    teacher: &Mat,
    temperature: f64,
    beta: f64,
    labels: &[usize],
) -> Result<(f64, Mat)> {
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    if student.shape() != teacher.shape() {
        return Err(Error::shape(
            "distill_loss",
            format!(
                "student {:?} vs teacher {:?}",
                student.shape(),
                teacher.shape()
            ),
        ));
    }
    let (ce, g_ce) = cross_entropy(student, labels)?;
    let (b, _) = student.shape();
    let bf = b as f64;
    let t = temperature;
    let mut kl = 0.0;
    let mut g = g_ce.scale(1.0 - beta);
    for i in 0..b {
        let lt = log_softmax(teacher.row(i), t);
        let ls = log_softmax(student.row(i), t);
        for (j, gv) in g.row_mut(i).iter_mut().enumerate() {
            let pt = lt[j].exp();
            if pt > 0.0 {
                kl += pt * (lt[j] - ls[j]);
            }
            // d(T²·KL)/dz_s = T·(p_s − p_t)
            *gv += beta * t * (ls[j].exp() - pt) / bf;
        }
    }
    kl = (kl / bf).max(0.0);
    Ok(((1.0 - beta) * ce + beta * t * t * kl, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, relative_error, Prng};

    #[test]
    fn identical_teacher_leaves_ce() {
        let mut rng = Prng::new(3);
        let z = rng.normal_mat(4, 5).scale(2.0);
        let y = [0, 3, 1, 4];
        let (ce, _) = cross_entropy(&z, &y).unwrap();
        let (l, _) = distill_loss(&z, &z, 3.0, 0.4, &y).unwrap();
        assert!((l - 0.6 * ce).abs() < 1e-12);
        let (l0, g0) = distill_loss(&z, &rng.normal_mat(4, 5), 2.0, 0.0, &y).unwrap();
        assert_eq!((l0, g0), cross_entropy(&z, &y).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Prng::new(4);
        for (t, beta) in [(1.0, 0.5), (4.0, 0.9), (0.5, 1.0)] {
            let s = rng.normal_mat(3, 6).scale(2.0);
            let te = rng.normal_mat(3, 6).scale(2.0);
            let y = [5, 0, 2];
            let (_, g) = distill_loss(&s, &te, t, beta, &y).unwrap();
            let fd = finite_diff_grad(|m| distill_loss(m, &te, t, beta, &y).unwrap().0, &s, 1e-6)
                .unwrap();
            assert!(relative_error(&g, &fd, 1e-8) < 1e-6, "T={t} beta={beta}");
        }
    }

    #[test]
    fn non_negative_and_validated() {
        let mut rng = Prng::new(5);
        for _ in 0..50 {
            let s = rng.normal_mat(2, 4).scale(5.0);
            let te = rng.normal_mat(2, 4).scale(5.0);
            assert!(distill_loss(&s, &te, 2.0, 0.7, &[1, 2]).unwrap().0 >= 0.0);
        }
        let z = Mat::zeros(1, 2);
        assert!(distill_loss(&z, &z, 0.0, 0.5, &[0]).is_err());
        assert!(distill_loss(&z, &z, 1.0, 1.5, &[0]).is_err());
    }
}
