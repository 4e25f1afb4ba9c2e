use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CircleOutput {
    pub loss: f64,
    pub d_sp: Vec<f64>,
    pub d_sn: Vec<f64>,
}

fn log_sum_exp(v: &[f64]) -> (f64, Vec<f64>) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    (max + sum.ln(), exps.into_iter().map(|e| e / sum).collect())
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Circle loss with self-paced weights `αₚ = [1 + m − sₚ]₊`, `αₙ = [sₙ + m]₊`.
///
/// The weights are detached: the returned gradients treat them as constants,
/// which equals the gradient of [`circle_loss_with_weights`] at the same α.
pub fn circle_loss(sp: &[f64], sn: &[f64], m: f64, gamma: f64) -> Result<CircleOutput> {
    let alpha_p: Vec<f64> = sp.iter().map(|s| (1.0 + m - s).max(0.0)).collect();
    let alpha_n: Vec<f64> = sn.iter().map(|s| (s + m).max(0.0)).collect();
    circle_loss_with_weights(sp, sn, &alpha_p, &alpha_n, m, gamma)
}

/// `log(1 + Σₙ exp(γαₙ(sₙ − m)) · Σₚ exp(−γαₚ(sₚ − 1 + m)))` for given weights.
pub fn circle_loss_with_weights(
    sp: &[f64],
    sn: &[f64],
    alpha_p: &[f64],
    alpha_n: &[f64],
    m: f64,
    gamma: f64,
) -> Result<CircleOutput> {
    if sp.is_empty() || sn.is_empty() {
        return Err(Error::invalid(
            "circle loss needs at least one positive and one negative score",
        ));
    }
    if alpha_p.len() != sp.len() || alpha_n.len() != sn.len() {
        return Err(Error::shape("circle_loss", "one weight per score required"));
    }
    if !(m > 0.0 && m < 1.0) || !(gamma > 0.0) {
        return Err(Error::invalid(format!(
            "circle loss needs m in (0, 1) and gamma > 0, got m={m}, gamma={gamma}"
        )));
    }
    let (delta_p, delta_n) = (1.0 - m, m);
    let lp: Vec<f64> = sp
        .iter()
        .zip(alpha_p)
        .map(|(s, a)| -gamma * a * (s - delta_p))
        .collect();
    let ln: Vec<f64> = sn
        .iter()
        .zip(alpha_n)
        .map(|(s, a)| gamma * a * (s - delta_n))
        .collect();
    let (lse_p, wp) = log_sum_exp(&lp);
    let (lse_n, wn) = log_sum_exp(&ln);
    let x = lse_p + lse_n;
    let outer = sigmoid(x);
    Ok(CircleOutput {
        loss: softplus(x),
        d_sp: wp
            .iter()
            .zip(alpha_p)
            .map(|(w, a)| outer * w * (-gamma * a))
            .collect(),
        d_sn: wn
            .iter()
            .zip(alpha_n)
            .map(|(w, a)| outer * w * (gamma * a))
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_rejected() {
        assert!(circle_loss(&[], &[0.1], 0.25, 64.0).is_err());
        assert!(circle_loss(&[0.5], &[], 0.25, 64.0).is_err());
    }

    #[test]
    fn monotone_in_scores() {
        let sp = [0.6, 0.3];
        let sn = [0.2, 0.05, 0.4];
        let base = circle_loss(&sp, &sn, 0.25, 32.0).unwrap().loss;
        for k in 0..sn.len() {
            let mut up = sn;
            up[k] += 0.05;
            assert!(circle_loss(&sp, &up, 0.25, 32.0).unwrap().loss >= base);
        }
        for k in 0..sp.len() {
            let mut up = sp;
            up[k] += 0.05;
            assert!(circle_loss(&up, &sn, 0.25, 32.0).unwrap().loss <= base);
        }
    }

    #[test]
    fn detached_gradient_signs() {
        let out = circle_loss(&[0.9, -0.5], &[-0.1, 0.3, -0.6], 0.25, 64.0).unwrap();
        assert!(out.d_sp.iter().all(|&g| g <= 0.0));
        assert!(out.d_sn.iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn single_pair_golden() {
        // x = 256·(0.35·(0.1 − 0.25) − 0.35·(0.9 − 0.75)) = −26.88; L = ln(1 + e^x)
        let out = circle_loss(&[0.9], &[0.1], 0.25, 256.0).unwrap();
        let want = 2.119162823098281e-12;
        assert!((out.loss - want).abs() < 1e-9 * want, "{}", out.loss);
    }

    #[test]
    fn fixed_weight_gradient_matches_finite_differences() {
        let sp = [0.7, 0.2, -0.1];
        let sn = [0.4, -0.3];
        let ap = [0.55, 0.3, 0.9];
        let an = [0.65, 0.2];
        let out = circle_loss_with_weights(&sp, &sn, &ap, &an, 0.25, 16.0).unwrap();
        let h = 1e-6;
        for k in 0..sp.len() {
            let (mut a, mut b) = (sp, sp);
            a[k] += h;
            b[k] -= h;
            let fa = circle_loss_with_weights(&a, &sn, &ap, &an, 0.25, 16.0)
                .unwrap()
                .loss;
            let fb = circle_loss_with_weights(&b, &sn, &ap, &an, 0.25, 16.0)
                .unwrap()
                .loss;
            let fd = (fa - fb) / (2.0 * h);
            assert!(
                (fd - out.d_sp[k]).abs() <= 1e-6 * fd.abs().max(1e-3),
                "sp {k}"
            );
        }
        for k in 0..sn.len() {
            let (mut a, mut b) = (sn, sn);
            a[k] += h;
            b[k] -= h;
            let fa = circle_loss_with_weights(&sp, &a, &ap, &an, 0.25, 16.0)
                .unwrap()
                .loss;
            let fb = circle_loss_with_weights(&sp, &b, &ap, &an, 0.25, 16.0)
                .unwrap()
                .loss;
            let fd = (fa - fb) / (2.0 * h);
            assert!(
                (fd - out.d_sn[k]).abs() <= 1e-6 * fd.abs().max(1e-3),
                "sn {k}"
            );
        }
    }
}
