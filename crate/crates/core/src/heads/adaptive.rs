use std::f64::consts::FRAC_PI_4;

use super::{HeadConfig, HeadKind, HeadState};
use crate::numerics::Mat;

/// Post-forward update of the statistics owned by the adaptive heads.
///
/// * AdaCos: `s ← ln(B_avg) / cos(min(π/4, θ_med))`, where `B_avg` is the batch
///   mean of `Σ_{j≠y} exp(logit_j)` and `θ_med` the median target angle. A
///   non-positive or non-finite candidate keeps the previous scale.
/// * CurricularFace: `t ← (1−α)·t + α·mean(cos θ_y)`, clamped to `[0, 1]`.
/// * SphereFace: `λ ← max(λ_min, λ·decay)`.
///
/// Other kinds return the state unchanged.
pub fn adaptive_state_update(
    state: &HeadState,
    cos: &Mat,
    logits: &Mat,
    labels: &[usize],
    cfg: &HeadConfig,
) -> HeadState {
    let mut next = state.clone();
    let b = labels.len();
    if b == 0 {
        return next;
    }
    match cfg.kind {
        HeadKind::AdaCos => {
            let mut b_avg = 0.0;
            for (i, &y) in labels.iter().enumerate() {
                b_avg += logits
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != y)
                    .map(|(_, z)| z.exp())
                    .sum::<f64>();
            }
            b_avg /= b as f64;
            let mut angles: Vec<f64> = labels
                .iter()
                .enumerate()
                .map(|(i, &y)| cos[(i, y)].clamp(-1.0, 1.0).acos())
                .collect();
            angles.sort_by(f64::total_cmp);
            let med = if b % 2 == 1 {
                angles[b / 2]
            } else {
                0.5 * (angles[b / 2 - 1] + angles[b / 2])
            };
            let s = b_avg.ln() / med.min(FRAC_PI_4).cos();
            if s.is_finite() && s > 0.0 {
                next.adacos_scale = s;
            }
        }
        HeadKind::CurricularFace => {
            let mean = labels
                .iter()
                .enumerate()
                .map(|(i, &y)| cos[(i, y)])
                .sum::<f64>()
                / b as f64;
            let a = cfg.ema_alpha;
            next.curricular_t = ((1.0 - a) * state.curricular_t + a * mean).clamp(0.0, 1.0);
        }
        HeadKind::SphereFace => {
            let p = &cfg.sphere;
            next.sphere_lambda = (state.sphere_lambda * p.lambda_decay).max(p.lambda_min);
        }
        _ => {}
    }
    next
}
