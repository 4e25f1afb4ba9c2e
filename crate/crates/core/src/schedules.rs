//! Learning-rate schedules and label-smoothing helpers.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    WarmupStep,
    WarmupCosine,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::WarmupStep => "step",
            ScheduleKind::WarmupCosine => "cosine",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "step" | "warmup+step" => Ok(ScheduleKind::WarmupStep),
            "cosine" | "warmup+cosine" => Ok(ScheduleKind::WarmupCosine),
            _ => Err(Error::invalid(format!(
                "unknown schedule '{s}' (expected step or cosine)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub eta0: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub step_milestones: Vec<usize>,
    pub step_factor: f64,
}

impl Schedule {
    pub fn cosine(eta0: f64, warmup_steps: usize, total_steps: usize) -> Self {
        Schedule {
            kind: ScheduleKind::WarmupCosine,
            eta0,
            warmup_steps,
            total_steps,
            step_milestones: Vec::new(),
            step_factor: 0.1,
        }
    }

    pub fn step(
        eta0: f64,
        warmup_steps: usize,
        total_steps: usize,
        milestones: Vec<usize>,
        factor: f64,
    ) -> Self {
        Schedule {
            kind: ScheduleKind::WarmupStep,
            eta0,
            warmup_steps,
            total_steps,
            step_milestones: milestones,
            step_factor: factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta0.is_finite() && self.eta0 >= 0.0) {
            return Err(Error::invalid(format!(
                "base learning rate must be >= 0, got {}",
                self.eta0
            )));
        }
        if self.warmup_steps >= self.total_steps {
            return Err(Error::invalid(format!(
                "warmup_steps ({}) must be below total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if self.kind == ScheduleKind::WarmupStep {
            if !(self.step_factor > 0.0 && self.step_factor < 1.0) {
                return Err(Error::invalid(format!(
                    "step factor must lie in (0, 1), got {}",
                    self.step_factor
                )));
            }
            if self.step_milestones.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(
                    "step milestones must be strictly increasing",
                ));
            }
        }
        Ok(())
    }
}

/// Learning rate at step `t`.
///
/// `t` ranges over `0..=total_steps`; the terminal point `t = total_steps`
/// is accepted so the cosine curve can be inspected at its zero.
pub fn lr_at(s: &Schedule, t: usize) -> Result<f64> {
    s.validate()?;
    if t > s.total_steps {
        return Err(Error::invalid(format!(
            "step {t} outside [0, {}]",
            s.total_steps
        )));
    }
    if t < s.warmup_steps {
        return Ok(s.eta0 * (t + 1) as f64 / s.warmup_steps as f64);
    }
    Ok(match s.kind {
        ScheduleKind::WarmupCosine => {
            let tp = (t - s.warmup_steps) as f64;
            let tt = (s.total_steps - s.warmup_steps) as f64;
            s.eta0 * 0.5 * (1.0 + (std::f64::consts::PI * tp / tt).cos())
        }
        ScheduleKind::WarmupStep => {
            let passed = s.step_milestones.iter().filter(|&&m| m <= t).count();
            s.eta0 * s.step_factor.powi(passed as i32)
        }
    })
}

/// Smoothed target distribution: 1 − ε on `y`, ε/(k − 1) elsewhere.
pub fn smooth_labels(y: usize, k: usize, epsilon: f64) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "epsilon must lie in [0, 1), got {epsilon}"
        )));
    }
    if y >= k {
        return Err(Error::invalid(format!("label {y} outside [0, {k})")));
    }
    if epsilon > 0.0 && k < 2 {
        return Err(Error::invalid("label smoothing needs at least two classes"));
    }
    let rest = if epsilon > 0.0 {
        epsilon / (k - 1) as f64
    } else {
        0.0
    };
    let mut q = vec![rest; k];
    q[y] = 1.0 - epsilon;
    Ok(q)
}

/// Logit gap z_y − z_j that minimizes smoothed cross-entropy:
/// ln((k − 1)(1 − ε)/ε).
pub fn ls_optimal_gap(epsilon: f64, k: usize) -> f64 {
    ((k as f64 - 1.0) * (1.0 - epsilon) / epsilon).ln()
}
