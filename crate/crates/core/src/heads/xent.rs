use super::check_labels;
use crate::error::{Error, Result};
use crate::numerics::Mat;

pub(crate) fn validate_xent(epsilon: f64, gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "label smoothing must lie in [0, 1), got {epsilon}"
        )));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::invalid(format!(
            "focal gamma must be >= 0, got {gamma}"
        )));
    }
    if epsilon > 0.0 && gamma > 0.0 {
        return Err(Error::invalid(
            "focal modulation combined with label smoothing is not supported",
        ));
    }
    Ok(())
}

/// Per-sample softmax statistics and the resulting loss terms.
///
/// The dense and the sharded paths both reduce a row to these four numbers
/// and then call [`row_terms`], which keeps them in lockstep.
#[derive(Clone, Copy, Debug)]
pub(crate) struct RowTerms {
    pub loss: f64,
    /// Smoothed target mass on the label column.
    pub q_target: f64,
    /// Smoothed target mass on every other column.
    pub q_rest: f64,
    /// Focal multiplier on `p − q`; 1 without focal modulation.
    pub coef: f64,
}

/// `max`: row maximum; `sumexp`: Σ exp(z − max); `target`: z_y;
/// `rest_sum`: Σ_{j≠y} z_j.
pub(crate) fn row_terms(
    max: f64,
    sumexp: f64,
    target: f64,
    rest_sum: f64,
    classes: usize,
    epsilon: f64,
    gamma: f64,
) -> RowTerms {
    let lse = max + sumexp.ln();
    let q_rest = if epsilon > 0.0 {
        epsilon / (classes as f64 - 1.0)
    } else {
        0.0
    };
    let q_target = 1.0 - epsilon;
    if gamma == 0.0 {
        return RowTerms {
            loss: lse - q_target * target - q_rest * rest_sum,
            q_target,
            q_rest,
            coef: 1.0,
        };
    }
    // focal: (1 − p_y)^γ · CE
    let ce = lse - target;
    let p_y = (target - max).exp() / sumexp;
    let one_minus = 1.0 - p_y;
    let factor = one_minus.powf(gamma);
    let slope = if one_minus > 0.0 {
        ce * gamma * one_minus.powf(gamma - 1.0) * p_y
    } else {
        0.0
    };
    RowTerms {
        loss: factor * ce,
        q_target,
        q_rest,
        coef: factor + slope,
    }
}

fn row_stats(z: &[f64], y: usize) -> (f64, f64, f64) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sumexp = 0.0;
    let mut rest = 0.0;
    for (j, &v) in z.iter().enumerate() {
        sumexp += (v - max).exp();
        if j != y {
            rest += v;
        }
    }
    (max, sumexp, rest)
}

/// Softmax cross-entropy with optional label smoothing (`epsilon`) or focal
/// modulation (`gamma`), averaged over the batch.
///
/// Returns the loss and its exact gradient with respect to the logits.
pub fn softmax_xent(
    logits: &Mat,
    labels: &[usize],
    epsilon: f64,
    gamma: f64,
) -> Result<(f64, Mat)> {
    validate_xent(epsilon, gamma)?;
    let (b, k) = logits.shape();
    check_labels(labels, k, b)?;
    if epsilon > 0.0 && k < 2 {
        return Err(Error::invalid("label smoothing needs at least two classes"));
    }
    let mut total = 0.0;
    let mut grad = Mat::zeros(b, k);
    let bf = b as f64;
    for i in 0..b {
        let z = logits.row(i);
        let y = labels[i];
        let (max, sumexp, rest) = row_stats(z, y);
        let t = row_terms(max, sumexp, z[y], rest, k, epsilon, gamma);
        total += t.loss;
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            let p = (z[j] - max).exp() / sumexp;
            let q = if j == y { t.q_target } else { t.q_rest };
            *g = (p - q) * t.coef / bf;
        }
    }
    Ok((total / bf, grad))
}

/// Plain batch-mean softmax cross-entropy and its logit gradient.
pub fn cross_entropy(logits: &Mat, labels: &[usize]) -> Result<(f64, Mat)> {
    let (b, k) = logits.shape();
    check_labels(labels, k, b)?;
    let bf = b as f64;
    let mut total = 0.0;
    let mut grad = Mat::zeros(b, k);
    for i in 0..b {
        let z = logits.row(i);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sumexp = 0.0;
        for &v in z {
            sumexp += (v - max).exp();
        }
        let lse = max + sumexp.ln();
        total += lse - z[labels[i]];
        for (j, g) in grad.row_mut(i).iter_mut().enumerate() {
            let onehot = if j == labels[i] { 1.0 } else { 0.0 };
            *g = ((z[j] - max).exp() / sumexp - onehot) / bf;
        }
    }
    Ok((total / bf, grad))
}
