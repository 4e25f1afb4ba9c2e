use std::f64::consts::PI;

use super::{check_labels, HeadConfig, HeadKind, HeadState};
use crate::error::{Error, Result};
use crate::numerics::Mat;

/// Value and partial derivatives of an angular-margin target `cos(θ + m)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ArcTarget {
    pub value: f64,
    pub d_cos: f64,
    pub d_margin: f64,
}

const SIN_FLOOR: f64 = 1e-12;

/// `cos(θ + m)` written as `c·cos m − sinθ·sin m`, with the monotonic fallback
/// `c − m·sin m` once `θ + m` would pass π.
pub(crate) fn arc_target(c: f64, m: f64) -> ArcTarget {
    let (sin_m, cos_m) = m.sin_cos();
    if c > -cos_m {
        let sin_t = (1.0 - c * c).max(0.0).sqrt();
        ArcTarget {
            value: c * cos_m - sin_t * sin_m,
            d_cos: cos_m + c * sin_m / sin_t.max(SIN_FLOOR),
            d_margin: -c * sin_m - sin_t * cos_m,
        }
    } else {
        ArcTarget {
            value: c - m * sin_m,
            d_cos: 1.0,
            d_margin: -(sin_m + m * cos_m),
        }
    }
}

/// SphereFace `ψ(θ) = (−1)ᵏ·cos(mθ) − 2k` for `θ ∈ [kπ/m, (k+1)π/m]`, with
/// `cos(mθ)` evaluated as the Chebyshev polynomial `T_m(cos θ)`.
fn sphere_psi(c: f64, m: u32) -> (f64, f64) {
    let theta = c.clamp(-1.0, 1.0).acos();
    let k = ((m as f64 * theta / PI).floor() as u32).min(m - 1);
    // T_m and U_{m-1} by the three-term recurrences
    let (mut t_prev, mut t_cur) = (1.0, c);
    let (mut u_prev, mut u_cur) = (0.0, 1.0);
    for _ in 1..m {
        let t_next = 2.0 * c * t_cur - t_prev;
        let u_next = 2.0 * c * u_cur - u_prev;
        t_prev = t_cur;
        t_cur = t_next;
        u_prev = u_cur;
        u_cur = u_next;
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    (sign * t_cur - 2.0 * k as f64, sign * m as f64 * u_cur)
}

/// Target transform of the heads that only touch the label column.
/// Returns `(value, ∂value/∂cos)`; `None` for the other kinds.
pub(crate) fn elementwise_target(kind: HeadKind, c: f64, m: f64) -> Option<(f64, f64)> {
    match kind {
        HeadKind::NormSoftmax => Some((c, 1.0)),
        HeadKind::CosFace | HeadKind::AmSoftmax => Some((c - m, 1.0)),
        HeadKind::ArcFace => {
            let t = arc_target(c, m);
            Some((t.value, t.d_cos))
        }
        _ => None,
    }
}

/// Scale multiplying all logits: the dynamic AdaCos scale, otherwise `s`.
pub fn effective_scale(cfg: &HeadConfig, state: &HeadState) -> f64 {
    match cfg.kind {
        HeadKind::AdaCos => state.adacos_scale,
        _ => cfg.s,
    }
}

fn mag_margin(cfg: &HeadConfig, a: f64) -> (f64, f64) {
    let p = &cfg.mag;
    let slope = (p.upper_m - p.lower_m) / (p.upper_a - p.lower_a);
    let clamped = a.clamp(p.lower_a, p.upper_a);
    let inside = a > p.lower_a && a < p.upper_a;
    (
        p.lower_m + slope * (clamped - p.lower_a),
        if inside { slope } else { 0.0 },
    )
}

/// Gradient contributions of one row.
pub(crate) struct RowGrad {
    pub d_cos: Vec<f64>,
    pub d_magnitude: f64,
    pub d_margin: f64,
}

/// Per-row margin transform of one head kind, before scaling.
pub(crate) struct RowTransform<'a> {
    pub cfg: &'a HeadConfig,
    pub state: &'a HeadState,
}

impl RowTransform<'_> {
    pub fn forward(&self, cos: &[f64], y: usize, magnitude: f64) -> Vec<f64> {
        let cfg = self.cfg;
        let em = &cfg.emphasis;
        let mut out = cos.to_vec();
        let cy = cos[y];
        match cfg.kind {
            HeadKind::NormSoftmax | HeadKind::AdaCos => {}
            HeadKind::CosFace | HeadKind::AmSoftmax | HeadKind::ArcFace => {
                out[y] = elementwise_target(cfg.kind, cy, cfg.m).unwrap().0;
            }
            HeadKind::SphereFace => {
                let (psi, _) = sphere_psi(cy, cfg.m as u32);
                let lam = self.state.sphere_lambda;
                out[y] = (lam * cy + psi) / (1.0 + lam);
            }
            HeadKind::AdaMSoftmax => out[y] = cy - self.state.adam_margins[y],
            HeadKind::MagFace => {
                let (m, _) = mag_margin(cfg, magnitude);
                out[y] = arc_target(cy, m).value;
            }
            HeadKind::CurricularFace => {
                let tv = arc_target(cy, cfg.m).value;
                let t = self.state.curricular_t;
                for (j, v) in out.iter_mut().enumerate() {
                    if j != y && tv < *v {
                        *v *= t + *v;
                    }
                }
                out[y] = tv;
            }
            HeadKind::ArcNegFace => {
                let tv = arc_target(cy, cfg.m).value;
                for (j, v) in out.iter_mut().enumerate() {
                    if j != y {
                        let g = em.arcneg_alpha * (-(*v - tv).powi(2) / em.arcneg_sigma).exp();
                        *v = g * *v + (g - 1.0);
                    }
                }
                out[y] = tv;
            }
            HeadKind::NPCFace => {
                let base = arc_target(cy, cfg.m).value;
                let hard = hard_negatives(cos, y, base);
                let m = npc_margin(cfg, cos, &hard);
                for &j in &hard {
                    out[j] = em.npc_t * cos[j] + em.npc_a;
                }
                out[y] = arc_target(cy, m).value;
            }
            HeadKind::MVSoftmax => {
                let tv = cy - cfg.m;
                for (j, v) in out.iter_mut().enumerate() {
                    if j != y && *v > tv {
                        *v = em.mv_t * *v + (em.mv_t - 1.0);
                    }
                }
                out[y] = tv;
            }
        }
        out
    }

    /// Vector-Jacobian product of [`RowTransform::forward`] with `dv`.
    pub fn backward(&self, cos: &[f64], y: usize, magnitude: f64, dv: &[f64]) -> RowGrad {
        let cfg = self.cfg;
        let em = &cfg.emphasis;
        let cy = cos[y];
        let mut d = dv.to_vec();
        let mut d_magnitude = 0.0;
        let mut d_margin = 0.0;
        match cfg.kind {
            HeadKind::NormSoftmax | HeadKind::AdaCos => {}
            HeadKind::CosFace | HeadKind::AmSoftmax | HeadKind::ArcFace => {
                let (_, dt) = elementwise_target(cfg.kind, cy, cfg.m).unwrap();
                d[y] = dv[y] * dt;
            }
            HeadKind::SphereFace => {
                let (_, dpsi) = sphere_psi(cy, cfg.m as u32);
                let lam = self.state.sphere_lambda;
                d[y] = dv[y] * ((lam + dpsi) / (1.0 + lam));
            }
            HeadKind::AdaMSoftmax => d_margin = -dv[y],
            HeadKind::MagFace => {
                let (m, dm_da) = mag_margin(cfg, magnitude);
                let t = arc_target(cy, m);
                d[y] = dv[y] * t.d_cos;
                d_magnitude = dv[y] * t.d_margin * dm_da;
            }
            HeadKind::CurricularFace => {
                let t = arc_target(cy, cfg.m);
                let ct = self.state.curricular_t;
                for (j, dj) in d.iter_mut().enumerate() {
                    if j != y && t.value < cos[j] {
                        *dj = dv[j] * (ct + 2.0 * cos[j]);
                    }
                }
                d[y] = dv[y] * t.d_cos;
            }
            HeadKind::ArcNegFace => {
                let t = arc_target(cy, cfg.m);
                d[y] = dv[y] * t.d_cos;
                for j in 0..cos.len() {
                    if j == y {
                        continue;
                    }
                    let c = cos[j];
                    let g = em.arcneg_alpha * (-(c - t.value).powi(2) / em.arcneg_sigma).exp();
                    let dg_dc = g * (-2.0 * (c - t.value) / em.arcneg_sigma);
                    d[j] = dv[j] * (g + (c + 1.0) * dg_dc);
                    // g depends on the target through t.value
                    d[y] += dv[j] * (c + 1.0) * (-dg_dc) * t.d_cos;
                }
            }
            HeadKind::NPCFace => {
                let base = arc_target(cy, cfg.m).value;
                let hard = hard_negatives(cos, y, base);
                let m = npc_margin(cfg, cos, &hard);
                let t = arc_target(cy, m);
                d[y] = dv[y] * t.d_cos;
                if !hard.is_empty() {
                    let dm_dc = em.npc_m1 / hard.len() as f64;
                    for &j in &hard {
                        d[j] = dv[j] * em.npc_t + dv[y] * t.d_margin * dm_dc;
                    }
                }
            }
            HeadKind::MVSoftmax => {
                let tv = cy - cfg.m;
                for (j, dj) in d.iter_mut().enumerate() {
                    if j != y && cos[j] > tv {
                        *dj = dv[j] * em.mv_t;
                    }
                }
            }
        }
        RowGrad {
            d_cos: d,
            d_magnitude,
            d_margin,
        }
    }
}

fn hard_negatives(cos: &[f64], y: usize, threshold: f64) -> Vec<usize> {
    (0..cos.len())
        .filter(|&j| j != y && cos[j] > threshold)
        .collect()
}

/// NPCFace positive margin `m0 + m1·mean(hard negative cosines)`.
fn npc_margin(cfg: &HeadConfig, cos: &[f64], hard: &[usize]) -> f64 {
    if hard.is_empty() {
        return cfg.m;
    }
    let mean = hard.iter().map(|&j| cos[j]).sum::<f64>() / hard.len() as f64;
    cfg.m + cfg.emphasis.npc_m1 * mean
}

/// Applies the head's margin to cosine logits and multiplies by the effective
/// scale. `magnitudes` are the pre-normalization embedding norms (MagFace only;
/// other kinds ignore them).
pub fn margin_transform(
    cos: &Mat,
    labels: &[usize],
    cfg: &HeadConfig,
    state: &HeadState,
    magnitudes: &[f64],
) -> Result<Mat> {
    cfg.validate()?;
    check_labels(labels, cos.cols(), cos.rows())?;
    if magnitudes.len() != cos.rows() {
        return Err(Error::shape(
            "margin_transform",
            format!("{} magnitudes for {} rows", magnitudes.len(), cos.rows()),
        ));
    }
    if cfg.kind == HeadKind::AdaMSoftmax && state.adam_margins.len() != cos.cols() {
        return Err(Error::shape(
            "margin_transform",
            "AdaMSoftmax state holds a margin count different from the class count",
        ));
    }
    let xf = RowTransform { cfg, state };
    let scale = effective_scale(cfg, state);
    let mut out = Mat::zeros(cos.rows(), cos.cols());
    for i in 0..cos.rows() {
        let v = xf.forward(cos.row(i), labels[i], magnitudes[i]);
        for (o, vj) in out.row_mut(i).iter_mut().zip(v) {
            *o = scale * vj;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(kind: HeadKind, c: &[f64], m: f64, s: f64) -> Vec<f64> {
        let cfg = HeadConfig::new(kind).with_margin(m).with_scale(s);
        let state = HeadState::new(&cfg, c.len(), 2).unwrap();
        let cos = Mat::from_rows(&[c]);
        margin_transform(&cos, &[0], &cfg, &state, &[1.0])
            .unwrap()
            .row(0)
            .to_vec()
    }

    #[test]
    fn arcface_target_value() {
        let out = single(HeadKind::ArcFace, &[0.5f64.cos(), 0.1], 0.5, 64.0);
        // 64·cos(1.0) = 34.57935
        assert!((out[0] - 34.57935).abs() < 1e-5, "{}", out[0]);
        assert!((out[0] - 64.0 * 1.0f64.cos()).abs() < 1e-12);
        assert_eq!(out[1], 6.4);
    }

    #[test]
    fn cosface_target_value() {
        let out = single(HeadKind::CosFace, &[0.8, 0.1], 0.35, 64.0);
        assert!((out[0] - 28.8).abs() < 1e-12);
    }

    #[test]
    fn cosface_and_amsoftmax_agree() {
        for c in [-0.9, -0.2, 0.0, 0.4, 0.99] {
            assert_eq!(
                single(HeadKind::CosFace, &[c, 0.3], 0.35, 30.0),
                single(HeadKind::AmSoftmax, &[c, 0.3], 0.35, 30.0)
            );
        }
    }

    #[test]
    fn margin_free_identity() {
        let c = [0.37, -0.81, 0.05, 0.999];
        for kind in [
            HeadKind::NormSoftmax,
            HeadKind::CosFace,
            HeadKind::AmSoftmax,
            HeadKind::ArcFace,
            HeadKind::AdaMSoftmax,
        ] {
            assert_eq!(single(kind, &c, 0.0, 1.0), c.to_vec(), "{kind}");
        }
    }

    #[test]
    fn arcface_fallback_past_pi() {
        let m: f64 = 0.5;
        let c = -0.95; // θ ≈ 2.82 > π − m
        let t = arc_target(c, m);
        assert_eq!(t.value, c - m * m.sin());
        // fallback keeps the target below the un-margined cosine
        assert!(t.value < c);
    }

    #[test]
    fn sphere_psi_is_continuous_and_monotone() {
        let mut prev = f64::INFINITY;
        for i in 0..=2000 {
            let theta = PI * i as f64 / 2000.0;
            let (psi, _) = sphere_psi(theta.cos(), 4);
            assert!(psi <= prev + 1e-12, "ψ not decreasing at θ={theta}");
            prev = psi;
        }
        assert!((sphere_psi(-1.0, 4).0 - (1.0 - 8.0)).abs() < 1e-12);
        // m = 1 reduces to cos θ
        assert_eq!(sphere_psi(0.3, 1), (0.3, 1.0));
    }
}
