use super::cosine::clamp_cosines;
use super::margin::{effective_scale, RowTransform};
use super::{
    check_labels, normalization_backward, normalize_with_norms, softmax_xent, HeadConfig, HeadKind,
    HeadState, LossGrad,
};
use crate::error::{Error, Result};
use crate::numerics::{gemm, gemm_nt, Mat};

/// Loss and analytic gradients of a softmax-style head.
///
/// Chains `softmax_xent ∘ margin_transform ∘ cosine_logits` and backpropagates
/// through both L2 normalizations. MagFace adds its magnitude regularizer and
/// AdaMSoftmax its mean-margin reward, each with the matching gradient.
pub fn head_loss_and_grad(
    embeddings: &Mat,
    weights: &Mat,
    labels: &[usize],
    cfg: &HeadConfig,
    state: &HeadState,
) -> Result<LossGrad> {
    cfg.validate()?;
    let (b, d) = embeddings.shape();
    let c = weights.rows();
    if weights.cols() != d {
        return Err(Error::shape(
            "head_loss_and_grad",
            format!("embedding dim {d} != weight dim {}", weights.cols()),
        ));
    }
    check_labels(labels, c, b)?;
    if cfg.kind == HeadKind::AdaMSoftmax && state.adam_margins.len() != c {
        return Err(Error::shape(
            "head_loss_and_grad",
            format!("{} AdaM margins for {c} classes", state.adam_margins.len()),
        ));
    }

    let x = normalize_with_norms(embeddings);
    let w = normalize_with_norms(weights);
    let mut cos = gemm_nt(&x.unit, &w.unit)?;
    let inside = clamp_cosines(&mut cos);

    let xf = RowTransform { cfg, state };
    let scale = effective_scale(cfg, state);
    let mut logits = Mat::zeros(b, c);
    for i in 0..b {
        let v = xf.forward(cos.row(i), labels[i], x.norms[i]);
        for (o, vj) in logits.row_mut(i).iter_mut().zip(v) {
            *o = scale * vj;
        }
    }
    let (mut loss, d_logits) = softmax_xent(&logits, labels, cfg.epsilon, cfg.gamma)?;

    let mut d_cos = Mat::zeros(b, c);
    let mut d_mag = vec![0.0; b];
    let mut d_margins = (cfg.kind == HeadKind::AdaMSoftmax).then(|| vec![0.0; c]);
    for i in 0..b {
        let dv: Vec<f64> = d_logits.row(i).iter().map(|g| g * scale).collect();
        let rg = xf.backward(cos.row(i), labels[i], x.norms[i], &dv);
        let mask = &inside[i * c..(i + 1) * c];
        for ((o, g), &ok) in d_cos.row_mut(i).iter_mut().zip(rg.d_cos).zip(mask) {
            *o = if ok { g } else { 0.0 };
        }
        d_mag[i] = rg.d_magnitude;
        if let Some(dm) = d_margins.as_mut() {
            dm[labels[i]] += rg.d_margin;
        }
    }

    if cfg.kind == HeadKind::MagFace {
        // λ_g · mean g(a),  g(a) = 1/a + a/u_a²
        let p = &cfg.mag;
        let bf = b as f64;
        let mut reg = 0.0;
        for (i, &a) in x.norms.iter().enumerate() {
            let ac = a.clamp(p.lower_a, p.upper_a);
            reg += 1.0 / ac + ac / (p.upper_a * p.upper_a);
            if a > p.lower_a && a < p.upper_a {
                d_mag[i] += p.lambda_g / bf * (-1.0 / (a * a) + 1.0 / (p.upper_a * p.upper_a));
            }
        }
        loss += p.lambda_g * reg / bf;
    }
    if let Some(dm) = d_margins.as_mut() {
        let cf = c as f64;
        let mean: f64 = state.adam_margins.iter().sum::<f64>() / cf;
        loss -= cfg.lambda_adam * mean;
        for v in dm.iter_mut() {
            *v -= cfg.lambda_adam / cf;
        }
    }

    let d_unit_x = gemm(&d_cos, &w.unit)?;
    let d_unit_w = gemm(&d_cos.transpose(), &x.unit)?;
    let mut d_embeddings = normalization_backward(&x, &d_unit_x);
    for (i, &dm) in d_mag.iter().enumerate() {
        if dm != 0.0 && x.norms[i] > 0.0 {
            let u = x.unit.row(i).to_vec();
            for (g, uv) in d_embeddings.row_mut(i).iter_mut().zip(u) {
                *g += dm * uv;
            }
        }
    }
    let d_weights = normalization_backward(&w, &d_unit_w);
    Ok(LossGrad {
        loss,
        d_embeddings,
        d_weights,
        d_margins,
    })
}

/// Forward-only loss of [`head_loss_and_grad`].
pub fn head_loss(
    embeddings: &Mat,
    weights: &Mat,
    labels: &[usize],
    cfg: &HeadConfig,
    state: &HeadState,
) -> Result<f64> {
    head_loss_and_grad(embeddings, weights, labels, cfg, state).map(|g| g.loss)
}
