//! Margin-based classification heads and auxiliary metric losses.
//!
//! Every softmax-style head follows the same pipeline:
//!
//! ```text
//! embeddings, weights ─► cosine_logits ─► margin_transform ─► softmax_xent
//! ```
//!
//! and [`head_loss_and_grad`] runs the full analytic backward pass through
//! the L2 normalization of both operands. Per-head formulas are listed in
//! `docs/heads.md`.

mod adaptive;
mod center;
mod circle;
mod cosine;
mod loss;
mod margin;
mod triplet;
mod xent;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::Mat;

pub use adaptive::adaptive_state_update;
pub use center::{center_loss_step, CenterStep};
pub use circle::{circle_loss, circle_loss_with_weights, CircleOutput};
pub use cosine::{cosine_logits, CosineLogits};
pub use loss::{head_loss, head_loss_and_grad};
pub use margin::{effective_scale, margin_transform};
pub use triplet::{triplet_loss, TripletOutput};
pub use xent::{cross_entropy, softmax_xent};

pub(crate) use cosine::{clamp_cosines, normalization_backward, normalize_with_norms, Normalized};
pub(crate) use margin::elementwise_target;
pub(crate) use xent::{row_terms, validate_xent};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HeadKind {
    NormSoftmax,
    SphereFace,
    CosFace,
    AmSoftmax,
    ArcFace,
    AdaCos,
    CurricularFace,
    MagFace,
    AdaMSoftmax,
    ArcNegFace,
    NPCFace,
    MVSoftmax,
}

impl HeadKind {
    pub const ALL: [HeadKind; 12] = [
        HeadKind::NormSoftmax,
        HeadKind::SphereFace,
        HeadKind::CosFace,
        HeadKind::AmSoftmax,
        HeadKind::ArcFace,
        HeadKind::AdaCos,
        HeadKind::CurricularFace,
        HeadKind::MagFace,
        HeadKind::AdaMSoftmax,
        HeadKind::ArcNegFace,
        HeadKind::NPCFace,
        HeadKind::MVSoftmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::NormSoftmax => "normsoftmax",
            HeadKind::SphereFace => "sphereface",
            HeadKind::CosFace => "cosface",
            HeadKind::AmSoftmax => "amsoftmax",
            HeadKind::ArcFace => "arcface",
            HeadKind::AdaCos => "adacos",
            HeadKind::CurricularFace => "curricularface",
            HeadKind::MagFace => "magface",
            HeadKind::AdaMSoftmax => "adamsoftmax",
            HeadKind::ArcNegFace => "arcnegface",
            HeadKind::NPCFace => "npcface",
            HeadKind::MVSoftmax => "mvsoftmax",
        }
    }

    /// Margin used when the caller does not set one.
    pub fn default_margin(self) -> f64 {
        match self {
            HeadKind::ArcFace | HeadKind::CurricularFace | HeadKind::ArcNegFace => 0.5,
            HeadKind::CosFace | HeadKind::AmSoftmax | HeadKind::MVSoftmax => 0.35,
            HeadKind::AdaMSoftmax => 0.35,
            HeadKind::NPCFace => 0.4,
            HeadKind::SphereFace => 4.0,
            HeadKind::NormSoftmax | HeadKind::AdaCos | HeadKind::MagFace => 0.0,
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['-', '_'], "");
        HeadKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = HeadKind::ALL.iter().map(|k| k.name()).collect();
                Error::invalid(format!(
                    "unknown head kind {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Annealing of the SphereFace blend weight λ: `λ ← max(min, λ·decay)` per step.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereParams {
    pub lambda_base: f64,
    pub lambda_decay: f64,
    pub lambda_min: f64,
}

impl Default for SphereParams {
    fn default() -> Self {
        SphereParams {
            lambda_base: 1500.0,
            lambda_decay: 0.99,
            lambda_min: 5.0,
        }
    }
}

/// MagFace magnitude bounds, margin range and regularizer weight.
#[derive(Clone, Debug, PartialEq)]
pub struct MagParams {
    pub lower_a: f64,
    pub upper_a: f64,
    pub lower_m: f64,
    pub upper_m: f64,
    pub lambda_g: f64,
}

impl Default for MagParams {
    fn default() -> Self {
        MagParams {
            lower_a: 10.0,
            upper_a: 110.0,
            lower_m: 0.45,
            upper_m: 0.8,
            lambda_g: 35.0,
        }
    }
}

/// Emphasis terms of the hard-example heads. The neutral setting
/// ([`EmphasisParams::neutral`]) turns ArcNegFace and NPCFace into ArcFace and
/// MVSoftmax into CosFace.
#[derive(Clone, Debug, PartialEq)]
pub struct EmphasisParams {
    /// ArcNegFace negative reweighting `α·exp(−(cosθⱼ − t)²/σ)`.
    pub arcneg_alpha: f64,
    pub arcneg_sigma: f64,
    /// NPCFace collaborative margin weight and hard-negative map `t·cos + a`.
    pub npc_m1: f64,
    pub npc_t: f64,
    pub npc_a: f64,
    /// MVSoftmax hard-negative map `t·cos + t − 1`.
    pub mv_t: f64,
}

impl Default for EmphasisParams {
    fn default() -> Self {
        EmphasisParams {
            arcneg_alpha: 1.2,
            arcneg_sigma: 2.0,
            npc_m1: 0.2,
            npc_t: 1.1,
            npc_a: 0.25,
            mv_t: 1.12,
        }
    }
}

impl EmphasisParams {
    pub fn neutral() -> Self {
        EmphasisParams {
            arcneg_alpha: 1.0,
            arcneg_sigma: f64::INFINITY,
            npc_m1: 0.0,
            npc_t: 1.0,
            npc_a: 0.0,
            mv_t: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeadConfig {
    pub kind: HeadKind,
    /// Logit scale.
    pub s: f64,
    /// Margin; for SphereFace the integer angle multiplier.
    pub m: f64,
    /// Focal exponent, 0 disables.
    pub gamma: f64,
    /// Label-smoothing mass, 0 disables.
    pub epsilon: f64,
    /// Weight of the mean-margin reward in AdaMSoftmax.
    pub lambda_adam: f64,
    /// Momentum of the CurricularFace `t` statistic.
    pub ema_alpha: f64,
    pub sphere: SphereParams,
    pub mag: MagParams,
    pub emphasis: EmphasisParams,
}

impl HeadConfig {
    pub fn new(kind: HeadKind) -> Self {
        HeadConfig {
            kind,
            s: 64.0,
            m: kind.default_margin(),
            gamma: 0.0,
            epsilon: 0.0,
            lambda_adam: 10.0,
            ema_alpha: 0.01,
            sphere: SphereParams::default(),
            mag: MagParams::default(),
            emphasis: EmphasisParams::default(),
        }
    }

    pub fn with_scale(mut self, s: f64) -> Self {
        self.s = s;
        self
    }

    pub fn with_margin(mut self, m: f64) -> Self {
        self.m = m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.s,
            self.m,
            self.gamma,
            self.epsilon,
            self.lambda_adam,
            self.ema_alpha,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("head config fields must be finite"));
        }
        if self.s <= 0.0 {
            return Err(Error::invalid(format!("scale must be > 0, got {}", self.s)));
        }
        if self.m < 0.0 {
            return Err(Error::invalid(format!(
                "margin must be >= 0, got {}",
                self.m
            )));
        }
        if self.kind == HeadKind::SphereFace && (self.m < 1.0 || self.m.fract() != 0.0) {
            return Err(Error::invalid(format!(
                "SphereFace margin must be a positive integer, got {}",
                self.m
            )));
        }
        if !(0.0..=1.0).contains(&self.ema_alpha) {
            return Err(Error::invalid("ema_alpha must lie in [0, 1]"));
        }
        validate_xent(self.epsilon, self.gamma)?;
        let mag = &self.mag;
        if !(mag.lower_a > 0.0 && mag.lower_a < mag.upper_a) {
            return Err(Error::invalid("MagFace needs 0 < lower_a < upper_a"));
        }
        let sph = &self.sphere;
        if !(sph.lambda_min >= 0.0 && sph.lambda_decay > 0.0 && sph.lambda_decay <= 1.0) {
            return Err(Error::invalid(
                "SphereFace λ schedule needs min >= 0 and decay in (0, 1]",
            ));
        }
        if !(self.emphasis.arcneg_sigma > 0.0) {
            return Err(Error::invalid("ArcNegFace sigma must be > 0"));
        }
        Ok(())
    }
}

/// Mutable statistics carried between training steps.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadState {
    pub adacos_scale: f64,
    pub curricular_t: f64,
    /// Class centers (C×D) for the center loss.
    pub centers: Mat,
    /// Learnable per-class margins used by AdaMSoftmax.
    pub adam_margins: Vec<f64>,
    /// Current SphereFace blend weight.
    pub sphere_lambda: f64,
}

impl HeadState {
    pub fn new(cfg: &HeadConfig, classes: usize, dim: usize) -> Result<Self> {
        if cfg.kind == HeadKind::AdaCos && classes < 3 {
            return Err(Error::invalid(
                "AdaCos needs at least 3 classes (initial scale √2·ln(C−1))",
            ));
        }
        Ok(HeadState {
            adacos_scale: adacos_initial_scale(classes.max(3)),
            curricular_t: 0.0,
            centers: Mat::zeros(classes, dim),
            adam_margins: vec![cfg.m; classes],
            sphere_lambda: cfg.sphere.lambda_base,
        })
    }

    pub fn classes(&self) -> usize {
        self.adam_margins.len()
    }
}

/// Fixed AdaCos scale `√2·ln(C−1)`, also the dynamic variant's starting point.
pub fn adacos_initial_scale(classes: usize) -> f64 {
    std::f64::consts::SQRT_2 * ((classes as f64) - 1.0).ln()
}

/// Scalar loss and gradients of one head evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub d_embeddings: Mat,
    pub d_weights: Mat,
    /// Gradient w.r.t. the AdaMSoftmax per-class margins, when that head is used.
    pub d_margins: Option<Vec<f64>>,
}

pub(crate) fn check_labels(labels: &[usize], classes: usize, rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::shape(
            "labels",
            format!("{} labels for {rows} rows", labels.len()),
        ));
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= classes) {
        return Err(Error::invalid(format!(
            "label {y} at row {i} is outside [0, {classes})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in HeadKind::ALL {
            assert_eq!(k.name().parse::<HeadKind>().unwrap(), k);
        }
        assert_eq!("Arc_Face".parse::<HeadKind>().unwrap(), HeadKind::ArcFace);
        assert!("sinface".parse::<HeadKind>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(HeadConfig::new(HeadKind::ArcFace).validate().is_ok());
        let mut c = HeadConfig::new(HeadKind::SphereFace);
        c.m = 2.5;
        assert!(c.validate().is_err());
        let mut c = HeadConfig::new(HeadKind::CosFace);
        c.gamma = 2.0;
        c.epsilon = 0.1;
        assert!(c.validate().is_err());
        let mut c = HeadConfig::new(HeadKind::CosFace);
        c.s = f64::NAN;
        assert!(c.validate().is_err());
    }

    #[test]
    fn adacos_init_scale() {
        assert!((adacos_initial_scale(10) - 3.1073).abs() < 1e-4);
        assert!(HeadState::new(&HeadConfig::new(HeadKind::AdaCos), 2, 4).is_err());
    }
}
