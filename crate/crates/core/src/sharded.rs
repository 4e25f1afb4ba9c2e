//! In-process simulation of a model-parallel classifier layer.
//!
//! The class-weight matrix is split into contiguous shards, one per simulated
//! worker. Each worker only ever sees its own slice of the logits; the exact
//! global softmax is rebuilt from two scalar reductions per sample (row max,
//! then Σ exp(z − max)) and a third reduction sums the embedding-gradient
//! partials. Reductions run sequentially in ascending shard order, so the
//! result is bitwise reproducible and, for one shard, bitwise equal to
//! [`head_loss_and_grad`](crate::heads::head_loss_and_grad).

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::heads::{
    clamp_cosines, effective_scale, elementwise_target, normalization_backward,
    normalize_with_norms, row_terms, validate_xent, HeadConfig, HeadKind, HeadState, LossGrad,
    Normalized,
};
use crate::numerics::{gemm, gemm_nt, Mat};

/// Contiguous block of class weights owned by one worker.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightShard {
    pub shard_index: usize,
    pub class_offset: usize,
    pub weights: Mat,
}

impl WeightShard {
    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    fn owns(&self, class: usize) -> bool {
        class >= self.class_offset && class < self.class_offset + self.classes()
    }
}

/// Splits `weights` into `p` contiguous shards whose sizes differ by at most
/// one, larger shards first.
pub fn make_shards(weights: &Mat, p: usize) -> Result<Vec<WeightShard>> {
    let c = weights.rows();
    if p == 0 || p > c {
        return Err(Error::invalid(format!(
            "shard count must lie in [1, {c}] for {c} classes, got {p}"
        )));
    }
    let (base, extra) = (c / p, c % p);
    let mut shards = Vec::with_capacity(p);
    let mut offset = 0;
    for shard_index in 0..p {
        let size = base + usize::from(shard_index < extra);
        shards.push(WeightShard {
            shard_index,
            class_offset: offset,
            weights: weights.slice_rows(offset, offset + size),
        });
        offset += size;
    }
    Ok(shards)
}

/// Concatenates shard weights back into the dense matrix.
pub fn gather_shards(shards: &[WeightShard]) -> Mat {
    let cols = shards.first().map_or(0, |s| s.weights.cols());
    let mut data = Vec::new();
    for s in shards {
        data.extend_from_slice(s.weights.as_slice());
    }
    let rows = data.len() / cols.max(1);
    Mat::from_vec(rows, cols, data).expect("shards share a column count")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReducePhase {
    Max,
    SumExp,
    Grad,
}

impl fmt::Display for ReducePhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReducePhase::Max => "max",
            ReducePhase::SumExp => "sumexp",
            ReducePhase::Grad => "grad",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceEntry {
    pub phase: ReducePhase,
    pub shard_index: usize,
    pub summary: String,
}

/// Ordered log of every contribution folded into a reduction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReduceTrace {
    pub entries: Vec<TraceEntry>,
}

impl ReduceTrace {
    fn push(&mut self, phase: ReducePhase, shard_index: usize, summary: String) {
        self.entries.push(TraceEntry {
            phase,
            shard_index,
            summary,
        });
    }

    /// Checks that phases run max → sumexp → grad and that every shard
    /// contributes exactly once per phase, in ascending order.
    pub fn validate(&self, shards: usize) -> Result<()> {
        let phases = [ReducePhase::Max, ReducePhase::SumExp, ReducePhase::Grad];
        if self.entries.len() != phases.len() * shards {
            return Err(Error::invalid(format!(
                "trace has {} entries, expected {}",
                self.entries.len(),
                phases.len() * shards
            )));
        }
        for (k, e) in self.entries.iter().enumerate() {
            let (phase, shard) = (phases[k / shards], k % shards);
            if e.phase != phase || e.shard_index != shard {
                return Err(Error::invalid(format!(
                    "trace entry {k} is ({}, {}), expected ({phase}, {shard})",
                    e.phase, e.shard_index
                )));
            }
        }
        Ok(())
    }

    /// One tab-separated line per entry: `phase  shard  summary`.
    pub fn to_log(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ReduceTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(f, "{}\t{}\t{}", e.phase, e.shard_index, e.summary)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ShardedOutput {
    pub grad: LossGrad,
    pub trace: ReduceTrace,
    /// For each sample, how many shards applied the margin (always 1).
    pub margin_applications: Vec<usize>,
    /// For each sample, the shard that owns its label.
    pub margin_owner: Vec<usize>,
}

pub fn is_shardable(kind: HeadKind) -> bool {
    matches!(
        kind,
        HeadKind::NormSoftmax | HeadKind::ArcFace | HeadKind::CosFace | HeadKind::AmSoftmax
    )
}

struct LocalLogits {
    w: Normalized,
    cos: Mat,
    inside: Vec<bool>,
    logits: Mat,
    max: Vec<f64>,
    applied: Vec<bool>,
}

/// Loss and gradients of a margin head evaluated over sharded class weights.
pub fn sharded_loss_and_grad(
    embeddings: &Mat,
    shards: &[WeightShard],
    labels: &[usize],
    cfg: &HeadConfig,
    state: &HeadState,
) -> Result<ShardedOutput> {
    cfg.validate()?;
    validate_xent(cfg.epsilon, cfg.gamma)?;
    if !is_shardable(cfg.kind) {
        return Err(Error::Unsupported(format!(
            "head kind {} cannot be sharded (its transform reads non-target columns or batch \
             state); use the dense head_loss_and_grad path",
            cfg.kind
        )));
    }
    let (b, d) = embeddings.shape();
    let mut expected_offset = 0;
    for (k, s) in shards.iter().enumerate() {
        if s.shard_index != k || s.class_offset != expected_offset || s.classes() == 0 {
            return Err(Error::invalid(format!(
                "shard {k} does not continue a contiguous ascending partition"
            )));
        }
        if s.weights.cols() != d {
            return Err(Error::shape(
                "sharded_loss_and_grad",
                format!(
                    "shard {k} has dim {}, embeddings have {d}",
                    s.weights.cols()
                ),
            ));
        }
        expected_offset += s.classes();
    }
    if shards.is_empty() {
        return Err(Error::invalid("no shards"));
    }
    let c = expected_offset;
    crate::heads::check_labels(labels, c, b)?;

    let x = normalize_with_norms(embeddings);
    let scale = effective_scale(cfg, state);
    let mut trace = ReduceTrace::default();

    // pass 1: local logits and row maxima
    let locals: Vec<LocalLogits> = shards
        .par_iter()
        .map(|s| {
            let w = normalize_with_norms(&s.weights);
            let mut cos = gemm_nt(&x.unit, &w.unit)?;
            let inside = clamp_cosines(&mut cos);
            let mut logits = Mat::zeros(b, s.classes());
            let mut max = vec![f64::NEG_INFINITY; b];
            let mut applied = vec![false; b];
            for i in 0..b {
                for j in 0..s.classes() {
                    let cv = cos[(i, j)];
                    let v = if s.class_offset + j == labels[i] {
                        applied[i] = true;
                        elementwise_target(cfg.kind, cv, cfg.m)
                            .expect("shardable kind")
                            .0
                    } else {
                        cv
                    };
                    let z = scale * v;
                    logits[(i, j)] = z;
                    max[i] = max[i].max(z);
                }
            }
            Ok(LocalLogits {
                w,
                cos,
                inside,
                logits,
                max,
                applied,
            })
        })
        .collect::<Result<_>>()?;

    let mut global_max = locals[0].max.clone();
    for (k, l) in locals.iter().enumerate() {
        if k > 0 {
            for (g, &v) in global_max.iter_mut().zip(&l.max) {
                *g = g.max(v);
            }
        }
        trace.push(
            ReducePhase::Max,
            k,
            format!("rows={b} peak={:e}", peak(&l.max)),
        );
    }

    // pass 2: Σ exp(z − max), Σ non-target logits, target logit
    let partials: Vec<(Vec<f64>, Vec<f64>, Vec<Option<f64>>)> = shards
        .par_iter()
        .zip(&locals)
        .map(|(s, l)| {
            let mut sumexp = vec![0.0; b];
            let mut rest = vec![0.0; b];
            let mut target = vec![None; b];
            for i in 0..b {
                for (j, &z) in l.logits.row(i).iter().enumerate() {
                    sumexp[i] += (z - global_max[i]).exp();
                    if s.class_offset + j == labels[i] {
                        target[i] = Some(z);
                    } else {
                        rest[i] += z;
                    }
                }
            }
            (sumexp, rest, target)
        })
        .collect();

    let mut sumexp = partials[0].0.clone();
    let mut rest = partials[0].1.clone();
    let mut target = vec![f64::NAN; b];
    for (k, (se, rs, tg)) in partials.iter().enumerate() {
        if k > 0 {
            for i in 0..b {
                sumexp[i] += se[i];
                rest[i] += rs[i];
            }
        }
        for (t, v) in target.iter_mut().zip(tg) {
            if let Some(v) = v {
                *t = *v;
            }
        }
        trace.push(
            ReducePhase::SumExp,
            k,
            format!("rows={b} total={:e}", se.iter().sum::<f64>()),
        );
    }

    let bf = b as f64;
    let mut loss = 0.0;
    let terms: Vec<_> = (0..b)
        .map(|i| {
            row_terms(
                global_max[i],
                sumexp[i],
                target[i],
                rest[i],
                c,
                cfg.epsilon,
                cfg.gamma,
            )
        })
        .collect();
    for t in &terms {
        loss += t.loss;
    }
    loss /= bf;

    // pass 3: local gradients
    let grads: Vec<(Mat, Mat)> = shards
        .par_iter()
        .zip(&locals)
        .map(|(s, l)| {
            let mut d_cos = Mat::zeros(b, s.classes());
            for i in 0..b {
                let t = &terms[i];
                for j in 0..s.classes() {
                    let z = l.logits[(i, j)];
                    let p = (z - global_max[i]).exp() / sumexp[i];
                    let is_target = s.class_offset + j == labels[i];
                    let q = if is_target { t.q_target } else { t.q_rest };
                    let dv = (p - q) * t.coef / bf * scale;
                    let g = if is_target {
                        let (_, dt) = elementwise_target(cfg.kind, l.cos[(i, j)], cfg.m)
                            .expect("shardable kind");
                        dv * dt
                    } else {
                        dv
                    };
                    d_cos[(i, j)] = if l.inside[i * s.classes() + j] {
                        g
                    } else {
                        0.0
                    };
                }
            }
            let d_unit_x = gemm(&d_cos, &l.w.unit)?;
            let d_unit_w = gemm(&d_cos.transpose(), &x.unit)?;
            Ok((d_unit_x, normalization_backward(&l.w, &d_unit_w)))
        })
        .collect::<Result<_>>()?;

    let mut d_unit_x = grads[0].0.clone();
    for (k, (dx, _)) in grads.iter().enumerate() {
        if k > 0 {
            d_unit_x.add_scaled(dx, 1.0);
        }
        trace.push(
            ReducePhase::Grad,
            k,
            format!("rows={b} norm={:e}", dx.frobenius()),
        );
    }
    let d_embeddings = normalization_backward(&x, &d_unit_x);
    let mut dw = Vec::with_capacity(c * d);
    for (_, g) in &grads {
        dw.extend_from_slice(g.as_slice());
    }
    let d_weights = Mat::from_vec(c, d, dw)?;

    let margin_applications = (0..b)
        .map(|i| locals.iter().filter(|l| l.applied[i]).count())
        .collect();
    let margin_owner = labels
        .iter()
        .map(|&y| {
            shards
                .iter()
                .position(|s| s.owns(y))
                .expect("label within partition")
        })
        .collect();

    Ok(ShardedOutput {
        grad: LossGrad {
            loss,
            d_embeddings,
            d_weights,
            d_margins: None,
        },
        trace,
        margin_applications,
        margin_owner,
    })
}

fn peak(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}
