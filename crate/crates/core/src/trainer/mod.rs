//! Toy-scale training: a small backbone, SGD with momentum, margin heads
//! (dense or sharded), distillation and the self-training label filter.

mod backbone;
mod distill;
mod model_io;
mod optim;
mod synthetic;

use std::path::Path;

use rayon::prelude::*;

pub use backbone::{Backbone, BackboneKind, ForwardCache, Layer};
pub use distill::distill_loss;
pub use model_io::{
    decode_tensors, encode_tensors, read_tensors, write_tensors, NamedTensor, MAGIC,
};
pub use optim::{sgd_step, OptimState};
pub use synthetic::{synthetic_pairs, BlobSpec};

use crate::align::{read_ppm, Image};
use crate::data::{weighted_sample, DatasetManifest};
use crate::error::{Error, Result};
use crate::heads::{
    adaptive_state_update, center_loss_step, clamp_cosines, head_loss_and_grad, margin_transform,
    normalization_backward, normalize_with_norms, HeadConfig, HeadKind, HeadState, LossGrad,
};
use crate::numerics::{gemm, gemm_nt, norm2, Mat, Prng};
use crate::schedules::{lr_at, Schedule};
use crate::sharded::{is_shardable, make_shards, sharded_loss_and_grad, ReduceTrace};

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Feature rows paired with the manifest that labels them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSet {
    pub features: Mat,
    pub manifest: DatasetManifest,
}

impl TrainSet {
    pub fn new(features: Mat, manifest: DatasetManifest) -> Result<Self> {
        if features.rows() != manifest.len() {
            return Err(Error::shape(
                "TrainSet::new",
                format!(
                    "{} feature rows for {} records",
                    features.rows(),
                    manifest.len()
                ),
            ));
        }
        Ok(TrainSet { features, manifest })
    }

    pub fn len(&self) -> usize {
        self.manifest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.manifest.labels()
    }

    pub fn select(&self, idx: &[usize]) -> Result<TrainSet> {
        let keep: std::collections::HashSet<usize> = idx.iter().copied().collect();
        let manifest = self.manifest.retain(|i, _| keep.contains(&i))?;
        let mut sorted: Vec<usize> = keep.into_iter().collect();
        sorted.sort_unstable();
        TrainSet::new(self.features.select_rows(&sorted), manifest)
    }
}

/// Backbone plus normalized-softmax classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub backbone: Backbone,
    /// Class weights, C×D.
    pub head: Mat,
    /// Logit scale used when the model acts as a classifier.
    pub scale: f64,
}

impl Model {
    pub fn classes(&self) -> usize {
        self.head.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.backbone.input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.backbone.output_dim()
    }

    pub fn embed(&self, x: &Mat) -> Result<Mat> {
        self.backbone.embed(x)
    }

    /// `scale · cos(embedding, class weight)`.
    pub fn logits(&self, x: &Mat) -> Result<Mat> {
        Ok(ScaledCosine::forward(&self.embed(x)?, &self.head, self.scale)?.logits)
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (i, l) in self.backbone.layers.iter().enumerate() {
            out.push(NamedTensor {
                name: format!("backbone.{i}.weight"),
                dims: vec![l.weight.rows(), l.weight.cols()],
                data: l.weight.as_slice().to_vec(),
            });
            out.push(NamedTensor {
                name: format!("backbone.{i}.bias"),
                dims: vec![l.bias.cols()],
                data: l.bias.as_slice().to_vec(),
            });
        }
        out.push(NamedTensor {
            name: "head.weight".into(),
            dims: vec![self.head.rows(), self.head.cols()],
            data: self.head.as_slice().to_vec(),
        });
        out.push(NamedTensor {
            name: "head.scale".into(),
            dims: vec![],
            data: vec![self.scale],
        });
        out
    }

    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Model> {
        let find = |name: &str| -> Result<&NamedTensor> {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::invalid(format!("model file lacks tensor '{name}'")))
        };
        let as_mat = |t: &NamedTensor| -> Result<Mat> {
            match t.dims.as_slice() {
                [r, c] => Mat::from_vec(*r, *c, t.data.clone()),
                [n] => Mat::from_vec(1, *n, t.data.clone()),
                d => Err(Error::invalid(format!(
                    "tensor '{}' has unsupported rank {}",
                    t.name,
                    d.len()
                ))),
            }
        };
        let mut layers = Vec::new();
        while let Ok(w) = find(&format!("backbone.{}.weight", layers.len())) {
            let b = find(&format!("backbone.{}.bias", layers.len()))?;
            layers.push(Layer {
                weight: as_mat(w)?,
                bias: as_mat(b)?,
            });
        }
        let backbone = Backbone::from_layers(layers)?;
        let head = as_mat(find("head.weight")?)?;
        let scale = *find("head.scale")?
            .data
            .first()
            .ok_or_else(|| Error::invalid("empty head.scale"))?;
        if head.cols() != backbone.output_dim() {
            return Err(Error::shape(
                "Model::from_tensors",
                "head dim differs from embedding dim",
            ));
        }
        Ok(Model {
            backbone,
            head,
            scale,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_tensors(path, &self.to_tensors())
    }

    pub fn load(path: &Path) -> Result<Model> {
        Model::from_tensors(&read_tensors(path)?)
    }

    fn params(&self) -> Vec<&Mat> {
        let mut p = self.backbone.params();
        p.push(&self.head);
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Mat> {
        let mut p = self.backbone.params_mut();
        p.push(&mut self.head);
        p
    }
}

/// Scaled cosine logits with the pieces needed to backpropagate them.
struct ScaledCosine {
    x: crate::heads::Normalized,
    w: crate::heads::Normalized,
    inside: Vec<bool>,
    scale: f64,
    logits: Mat,
}

impl ScaledCosine {
    fn forward(emb: &Mat, w: &Mat, scale: f64) -> Result<Self> {
        let x = normalize_with_norms(emb);
        let w = normalize_with_norms(w);
        let mut cos = gemm_nt(&x.unit, &w.unit)?;
        let inside = clamp_cosines(&mut cos);
        let logits = cos.scale(scale);
        Ok(ScaledCosine {
            x,
            w,
            inside,
            scale,
            logits,
        })
    }

    fn backward(&self, d_logits: &Mat) -> Result<(Mat, Mat)> {
        let mut d_cos = d_logits.scale(self.scale);
        for (g, &ok) in d_cos.as_mut_slice().iter_mut().zip(&self.inside) {
            if !ok {
                *g = 0.0;
            }
        }
        let dx = gemm(&d_cos, &self.w.unit)?;
        let dw = gemm(&d_cos.transpose(), &self.x.unit)?;
        Ok((
            normalization_backward(&self.x, &dx),
            normalization_backward(&self.w, &dw),
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Distillation {
    pub teacher: Model,
    pub temperature: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub backbone: BackboneKind,
    pub embed_dim: usize,
    pub head: HeadConfig,
    /// `total_steps` is overwritten with `epochs × ⌈N / batch_size⌉`.
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// 1 trains the dense head; more evaluates it over that many shards.
    pub shards: usize,
    pub weighted_sampling: bool,
    /// Weight of the auxiliary center loss; 0 disables it.
    pub center_weight: f64,
    pub center_alpha: f64,
    pub distill: Option<Distillation>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            backbone: BackboneKind::Linear,
            embed_dim: 16,
            head: HeadConfig::new(HeadKind::ArcFace),
            schedule: Schedule::cosine(0.1, 0, 1),
            epochs: 10,
            batch_size: 64,
            momentum: 0.9,
            weight_decay: 5e-4,
            shards: 1,
            weighted_sampling: true,
            center_weight: 0.0,
            center_alpha: 0.5,
            distill: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size.max(1))
    }
}

/// Loss and parameter gradients of one batch.
#[derive(Clone, Debug)]
pub struct Objective {
    pub loss: f64,
    /// Backbone gradients in parameter order, then the head weights.
    pub grads: Vec<Mat>,
    pub embeddings: Mat,
    pub d_margins: Option<Vec<f64>>,
    pub new_centers: Option<Mat>,
    /// Reduction trace when the head ran sharded.
    pub trace: Option<ReduceTrace>,
}

/// Full training objective through backbone and head, plus the optional
/// center and distillation terms.
pub fn objective(
    model: &Model,
    x: &Mat,
    labels: &[usize],
    cfg: &TrainConfig,
    state: &HeadState,
) -> Result<Objective> {
    let (emb, cache) = model.backbone.forward(x)?;
    let (head, trace): (LossGrad, _) = if cfg.shards > 1 {
        let shards = make_shards(&model.head, cfg.shards)?;
        let out = sharded_loss_and_grad(&emb, &shards, labels, &cfg.head, state)?;
        (out.grad, Some(out.trace))
    } else {
        (
            head_loss_and_grad(&emb, &model.head, labels, &cfg.head, state)?,
            None,
        )
    };
    let head_weight = cfg.distill.as_ref().map_or(1.0, |d| 1.0 - d.beta);
    let mut loss = head_weight * head.loss;
    let mut d_emb = head.d_embeddings.scale(head_weight);
    let mut d_head = head.d_weights.scale(head_weight);

    let mut new_centers = None;
    if cfg.center_weight > 0.0 {
        let cs = center_loss_step(&emb, labels, &state.centers, cfg.center_alpha)?;
        loss += cfg.center_weight * cs.loss;
        d_emb.add_scaled(&cs.d_embeddings, cfg.center_weight);
        new_centers = Some(cs.new_centers);
    }
    if let Some(d) = &cfg.distill {
        let student = ScaledCosine::forward(&emb, &model.head, model.scale)?;
        let teacher = d.teacher.logits(x)?;
        let (kd, g) = distill_loss(&student.logits, &teacher, d.temperature, 1.0, labels)?;
        loss += d.beta * kd;
        let (gx, gw) = student.backward(&g.scale(d.beta))?;
        d_emb.add_scaled(&gx, 1.0);
        d_head.add_scaled(&gw, 1.0);
    }

    let mut grads = model.backbone.backward(&cache, &d_emb)?;
    grads.push(d_head);
    Ok(Objective {
        loss,
        grads,
        embeddings: emb,
        d_margins: head.d_margins,
        new_centers,
        trace,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub state: HeadState,
    pub log: Vec<LogRow>,
    /// Reduction trace of the final step of a sharded run.
    pub trace: Option<ReduceTrace>,
}

/// Initial model for a configuration; a pure function of the seed.
pub fn init_model(d_in: usize, classes: usize, cfg: &TrainConfig) -> Result<Model> {
    let mut rng = Prng::split(cfg.seed, 0);
    let backbone = Backbone::new(cfg.backbone, d_in, cfg.embed_dim, &mut rng)?;
    let mut hrng = Prng::split(cfg.seed, 1);
    Ok(Model {
        backbone,
        head: hrng.normal_mat(classes, cfg.embed_dim),
        scale: cfg.head.s,
    })
}

fn needs_adaptive_update(kind: HeadKind) -> bool {
    matches!(
        kind,
        HeadKind::AdaCos | HeadKind::CurricularFace | HeadKind::SphereFace
    )
}

/// Trains a model on `data`; a deterministic function of `(data, cfg)`.
pub fn train(data: &TrainSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.head.validate()?;
    if cfg.batch_size == 0 || cfg.epochs == 0 || cfg.embed_dim == 0 {
        return Err(Error::invalid(
            "batch_size, epochs and embed_dim must be positive",
        ));
    }
    let classes = data.manifest.classes();
    if cfg.shards == 0 || cfg.shards > classes {
        return Err(Error::invalid(format!(
            "shard count must lie in [1, {classes}], got {}",
            cfg.shards
        )));
    }
    if cfg.shards > 1 && !is_shardable(cfg.head.kind) {
        return Err(Error::Unsupported(format!(
            "head {} cannot be sharded; use shard.p = 1 for the dense path",
            cfg.head.kind
        )));
    }
    if let Some(d) = &cfg.distill {
        if d.teacher.classes() != classes || d.teacher.input_dim() != data.features.cols() {
            return Err(Error::shape(
                "train",
                "teacher model does not match the training data",
            ));
        }
    }
    let mut schedule = cfg.schedule.clone();
    schedule.total_steps = cfg.epochs * cfg.steps_per_epoch(data.len());
    schedule.validate()?;

    let mut model = init_model(data.features.cols(), classes, cfg)?;
    let mut state = HeadState::new(&cfg.head, classes, cfg.embed_dim)?;
    let mut opt = OptimState::for_params(&model.params());
    let mut rng = Prng::split(cfg.seed, 2);
    let labels = data.labels();
    let mut log = Vec::with_capacity(schedule.total_steps);
    let mut trace = None;

    for step in 0..schedule.total_steps {
        let lr = lr_at(&schedule, step)?;
        let idx: Vec<usize> = if cfg.weighted_sampling {
            weighted_sample(&data.manifest, &mut rng, cfg.batch_size)
        } else {
            (0..cfg.batch_size).map(|_| rng.below(data.len())).collect()
        };
        let xb = data.features.select_rows(&idx);
        let yb: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let obj = objective(&model, &xb, &yb, cfg, &state)?;
        if !obj.loss.is_finite() || obj.loss > DIVERGENCE_LIMIT {
            return Err(Error::Divergence {
                step,
                detail: format!("loss {} (limit {DIVERGENCE_LIMIT}) at lr {lr}", obj.loss),
            });
        }
        if needs_adaptive_update(cfg.head.kind) {
            let cos = crate::heads::cosine_logits(&obj.embeddings, &model.head)?.cos;
            let norms: Vec<f64> = (0..obj.embeddings.rows())
                .map(|i| norm2(obj.embeddings.row(i)))
                .collect();
            let logits = margin_transform(&cos, &yb, &cfg.head, &state, &norms)?;
            state = adaptive_state_update(&state, &cos, &logits, &yb, &cfg.head);
        }
        sgd_step(
            &mut model.params_mut(),
            &obj.grads,
            &mut opt,
            lr,
            cfg.momentum,
            cfg.weight_decay,
        )
        .map_err(|e| Error::Divergence {
            step,
            detail: e.to_string(),
        })?;
        if let Some(dm) = &obj.d_margins {
            for (m, g) in state.adam_margins.iter_mut().zip(dm) {
                *m = (*m - lr * g).clamp(0.0, 1.0);
            }
        }
        if let Some(c) = obj.new_centers {
            state.centers = c;
        }
        trace = obj.trace;
        log.push(LogRow {
            step,
            lr,
            loss: obj.loss,
        });
    }
    Ok(TrainOutcome {
        model,
        state,
        log,
        trace,
    })
}

pub fn write_metric_log(path: &Path, log: &[LogRow]) -> Result<()> {
    let ferr = |e: csv::Error| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(ferr)?;
    w.write_record(["step", "lr", "loss"]).map_err(ferr)?;
    for r in log {
        w.write_record([r.step.to_string(), r.lr.to_string(), r.loss.to_string()])
            .map_err(ferr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelfTrainReport {
    pub manifest: DatasetManifest,
    /// Record indices (into the input) that survived.
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    /// (original label, records dropped) for every class that lost records.
    pub dropped_per_class: Vec<(i64, usize)>,
}

/// Drops records whose label gets teacher softmax confidence below `tau`.
pub fn self_train_filter(data: &TrainSet, teacher: &Model, tau: f64) -> Result<SelfTrainReport> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::invalid(format!("tau must lie in (0, 1), got {tau}")));
    }
    if teacher.classes() != data.manifest.classes() {
        return Err(Error::shape(
            "self_train_filter",
            format!(
                "teacher has {} classes, data has {}",
                teacher.classes(),
                data.manifest.classes()
            ),
        ));
    }
    let logits = teacher.logits(&data.features)?;
    let ln_tau = tau.ln();
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    let mut per_class = vec![0usize; data.manifest.classes()];
    for (i, r) in data.manifest.records().iter().enumerate() {
        let z = logits.row(i);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        // compare in log space so tiny tau never loses to underflow
        if z[r.label] - lse < ln_tau {
            dropped.push(i);
            per_class[r.label] += 1;
        } else {
            kept.push(i);
        }
    }
    let keep: std::collections::HashSet<usize> = kept.iter().copied().collect();
    let manifest = data
        .manifest
        .retain(|i, _| keep.contains(&i))
        .map_err(|_| Error::Empty(format!("self-training at tau {tau} dropped every record")))?;
    let dropped_per_class = per_class
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(k, &n)| (data.manifest.original_label(k), n))
        .collect();
    Ok(SelfTrainReport {
        manifest,
        kept,
        dropped,
        dropped_per_class,
    })
}

/// Grayscale pixels of `img` resized to side×side, row-major.
pub fn image_features(img: &Image, side: usize) -> Result<Vec<f64>> {
    Ok(img.to_gray().resize(side, side)?.as_slice().to_vec())
}

/// Feature rows for every manifest image (PPM files under `root`).
pub fn features_from_manifest(m: &DatasetManifest, root: &Path, side: usize) -> Result<Mat> {
    let rows: Vec<Vec<f64>> = m
        .records()
        .par_iter()
        .map(|r| read_ppm(&root.join(&r.path)).and_then(|img| image_features(&img, side)))
        .collect::<Result<_>>()?;
    let data = rows.concat();
    Mat::from_vec(m.len(), side * side, data)
}

/// Side length of the square image a model's input dim corresponds to.
pub fn input_side(model: &Model) -> Result<usize> {
    let d = model.input_dim();
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        return Err(Error::invalid(format!(
            "model input dim {d} is not a square image size"
        )));
    }
    Ok(side)
}
