use crate::error::{Error, Result};
use crate::numerics::Mat;

/// Momentum buffers, one per parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimState {
    pub velocity: Vec<Mat>,
    pub step: usize,
}

impl OptimState {
    pub fn for_params(params: &[&Mat]) -> Self {
        OptimState {
            velocity: params
                .iter()
                .map(|p| Mat::zeros(p.rows(), p.cols()))
                .collect(),
            step: 0,
        }
    }
}

/// SGD with heavy-ball momentum and L2 weight decay:
/// `v ← μ·v + g + wd·p`, `p ← p − lr·v`.
///
/// A non-finite gradient rejects the whole step; nothing is modified.
pub fn sgd_step(
    params: &mut [&mut Mat],
    grads: &[Mat],
    opt: &mut OptimState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != opt.velocity.len() {
        return Err(Error::shape(
            "sgd_step",
            format!(
                "{} params, {} grads, {} momentum buffers",
                params.len(),
                grads.len(),
                opt.velocity.len()
            ),
        ));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!(
            "learning rate must be >= 0, got {lr}"
        )));
    }
    for (k, ((p, g), v)) in params.iter().zip(grads).zip(&opt.velocity).enumerate() {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::shape(
                "sgd_step",
                format!("tensor {k} shapes disagree"),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of tensor {k}")));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(opt.velocity.iter_mut()) {
        for ((pv, gv), vv) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(v.as_mut_slice())
        {
            *vv = momentum * *vv + gv + weight_decay * *pv;
            *pv -= lr * *vv;
        }
    }
    opt.step += 1;
    Ok(())
}
