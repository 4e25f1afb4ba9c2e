use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use facekit_core::align::{align_face, read_landmarks, read_ppm, write_ppm};
use facekit_core::data::{
    augment, compute_rgb_pca, filter_low_shot, load_manifest, read_pairs, write_label_map,
    write_manifest, AugmentSpec, DatasetManifest, PairRecord,
};
use facekit_core::eval::{
    roc_auc, roc_points, score_pairs, tar_at_far, verify_kfold, write_report, write_roc, Pair,
    PairSet,
};
use facekit_core::schedules::{lr_at, Schedule, ScheduleKind};
use facekit_core::trainer::{
    features_from_manifest, image_features, input_side, self_train_filter, synthetic_pairs, train,
    write_metric_log, BackboneKind, BlobSpec, Distillation, Model, TrainConfig, TrainSet,
};
use facekit_core::{HeadConfig, HeadKind, Mat, Prng};

use crate::config::RunConfig;

/// Usage errors exit 1, data errors exit 2.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl From<facekit_core::Error> for Failure {
    fn from(e: facekit_core::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn parse<T: std::str::FromStr<Err = facekit_core::Error>>(
    cfg: &RunConfig,
    key: &str,
) -> Result<T, Failure> {
    cfg.text(key)
        .parse()
        .map_err(|e: facekit_core::Error| usage(format!("{key}: {e}")))
}

fn optional_path(cfg: &RunConfig, key: &str) -> Option<PathBuf> {
    let v = cfg.text(key);
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn plural(n: usize, one: &str, many: &str) -> String {
    format!("{n} {}", if n == 1 { one } else { many })
}

pub fn align(cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let root = PathBuf::from(cfg.text("paths.images"));
    let dest = PathBuf::from(cfg.text("paths.aligned"));
    let records = read_landmarks(Path::new(cfg.text("paths.landmarks")))?;
    for r in &records {
        let img = read_ppm(&root.join(&r.path))?;
        let aligned = align_face(&img, &r.landmarks)?;
        let target = dest.join(&r.path);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_ppm(&target, &aligned)?;
    }
    writeln!(
        out,
        "aligned {} into {}",
        plural(records.len(), "image", "images"),
        dest.display()
    )?;
    Ok(())
}

fn augment_spec(cfg: &RunConfig) -> Result<AugmentSpec, Failure> {
    let spec = AugmentSpec {
        hflip_prob: cfg.float("aug.hflip_prob"),
        hsb_range: (cfg.float("aug.hsb_lo"), cfg.float("aug.hsb_hi")),
        pca: cfg.float("aug.pca_sigma") > 0.0,
        pca_sigma: cfg.float("aug.pca_sigma"),
        ..AugmentSpec::default()
    };
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn augmented_name(path: &str, copy: usize) -> String {
    let p = Path::new(path);
    let stem = p
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let name = format!("{stem}_aug{copy}.ppm");
    match p.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(d) => d.join(name).to_string_lossy().into_owned(),
        None => name,
    }
}

pub fn prep(cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let tau = cfg.float("selftrain.tau");
    if !(0.0..1.0).contains(&tau) {
        return Err(usage(format!(
            "selftrain.tau must lie in [0, 1), got {tau}"
        )));
    }
    let teacher_path = optional_path(cfg, "paths.teacher");
    if tau > 0.0 && teacher_path.is_none() {
        return Err(usage("selftrain.tau needs paths.teacher"));
    }
    let copies = cfg.int("aug.copies");
    let spec = augment_spec(cfg)?;
    let root = PathBuf::from(cfg.text("paths.images"));

    let m = load_manifest(Path::new(cfg.text("paths.manifest")))?;
    let mut kept = filter_low_shot(&m, cfg.int("data.num_min"))?;
    writeln!(
        out,
        "removed {} / {}",
        plural(m.classes() - kept.classes(), "class", "classes"),
        plural(m.len() - kept.len(), "record", "records")
    )?;

    if let (Some(path), true) = (teacher_path, tau > 0.0) {
        let teacher = Model::load(&path)?;
        let features = features_from_manifest(&kept, &root, input_side(&teacher)?)?;
        let report = self_train_filter(&TrainSet::new(features, kept.clone())?, &teacher, tau)?;
        writeln!(
            out,
            "self-training at tau {tau} dropped {}",
            plural(report.dropped.len(), "record", "records")
        )?;
        kept = report.manifest;
    }

    if copies > 0 {
        let pca = if spec.pca {
            Some(compute_rgb_pca(&kept, &root, cfg.int("aug.pca_samples"))?)
        } else {
            None
        };
        let dest = std::path::absolute(cfg.text("paths.augmented"))?;
        let mut rows: Vec<(String, i64)> = Vec::new();
        for (i, r) in kept.records().iter().enumerate() {
            let label = kept.original_label(r.label);
            rows.push((r.path.clone(), label));
            let img = read_ppm(&root.join(&r.path))?;
            for c in 0..copies {
                let mut rng = Prng::split(cfg.seed(), (i * copies + c) as u64);
                let aug = augment(&img, &spec, &mut rng, pca.as_ref())?;
                let target = dest.join(augmented_name(&r.path, c));
                if let Some(parent) = target.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                write_ppm(&target, &aug)?;
                rows.push((target.to_string_lossy().into_owned(), label));
            }
        }
        kept = DatasetManifest::from_labelled(rows)?;
        writeln!(
            out,
            "wrote {}",
            plural(
                kept.len() / (copies + 1) * copies,
                "augmented image",
                "augmented images"
            )
        )?;
    }

    write_manifest(Path::new(cfg.text("paths.filtered")), &kept)?;
    if let Some(p) = optional_path(cfg, "paths.label_map") {
        write_label_map(&p, &kept)?;
    }
    writeln!(
        out,
        "kept {} in {}",
        plural(kept.len(), "record", "records"),
        plural(kept.classes(), "class", "classes")
    )?;
    Ok(())
}

fn schedule_from(cfg: &RunConfig, total: usize) -> Result<Schedule, Failure> {
    let kind: ScheduleKind = parse(cfg, "sched.kind")?;
    let eta0 = cfg.float("sched.eta0");
    let warmup = cfg.int("sched.warmup");
    let s = match kind {
        ScheduleKind::WarmupCosine => Schedule::cosine(eta0, warmup, total),
        ScheduleKind::WarmupStep => Schedule::step(
            eta0,
            warmup,
            total,
            cfg.ints("sched.milestones"),
            cfg.float("sched.factor"),
        ),
    };
    s.validate().map_err(|e| usage(e.to_string()))?;
    Ok(s)
}

pub fn schedule(cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let s = schedule_from(cfg, cfg.int("sched.total"))?;
    let mut text = String::from("step,lr\n");
    for t in 0..=s.total_steps {
        text.push_str(&format!("{t},{}\n", lr_at(&s, t)?));
    }
    match cfg.text("paths.schedule") {
        "-" => out.write_all(text.as_bytes())?,
        p => std::fs::write(p, text)?,
    }
    Ok(())
}

fn toy_spec(cfg: &RunConfig) -> BlobSpec {
    BlobSpec {
        classes: cfg.int("data.classes"),
        dim: cfg.int("data.dim"),
        sigma: 1.0,
        separation: cfg.float("data.separation"),
        seed: cfg.seed(),
    }
}

fn is_toy(cfg: &RunConfig) -> Result<bool, Failure> {
    match cfg.text("data.source") {
        "toy" => Ok(true),
        "manifest" => Ok(false),
        other => Err(usage(format!(
            "data.source must be toy or manifest, got '{other}'"
        ))),
    }
}

fn head_config(cfg: &RunConfig) -> Result<HeadConfig, Failure> {
    let kind: HeadKind = parse(cfg, "head.kind")?;
    let mut h = HeadConfig::new(kind).with_scale(cfg.float("head.s"));
    if cfg.text("head.m") != "auto" {
        h = h.with_margin(cfg.float("head.m"));
    }
    h.gamma = cfg.float("head.gamma");
    h.epsilon = cfg.float("head.epsilon");
    h.validate().map_err(|e| usage(e.to_string()))?;
    Ok(h)
}

pub fn train_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let head = head_config(cfg)?;
    let backbone: BackboneKind = parse(cfg, "train.backbone")?;
    let shards = cfg.int("shard.p");
    let trace_path = optional_path(cfg, "paths.trace");
    if trace_path.is_some() && shards < 2 {
        return Err(usage("paths.trace needs shard.p > 1"));
    }
    let data = if is_toy(cfg)? {
        toy_spec(cfg)
            .train_set(cfg.int("data.per_class"), &mut Prng::split(cfg.seed(), 10))
            .map_err(|e| usage(e.to_string()))?
    } else {
        let m = filter_low_shot(
            &load_manifest(Path::new(cfg.text("paths.manifest")))?,
            cfg.int("data.num_min"),
        )?;
        let root = PathBuf::from(cfg.text("paths.images"));
        TrainSet::new(features_from_manifest(&m, &root, cfg.int("data.side"))?, m)?
    };
    let distill = match optional_path(cfg, "paths.teacher") {
        Some(p) => Some(Distillation {
            teacher: Model::load(&p)?,
            temperature: cfg.float("distill.t"),
            beta: cfg.float("distill.beta"),
        }),
        None => None,
    };
    let mut tc = TrainConfig {
        backbone,
        embed_dim: cfg.int("train.embed_dim"),
        head,
        schedule: Schedule::cosine(0.1, 0, 1),
        epochs: cfg.int("train.epochs"),
        batch_size: cfg.int("train.batch"),
        momentum: cfg.float("train.momentum"),
        weight_decay: cfg.float("train.wd"),
        shards,
        weighted_sampling: cfg.flag("train.weighted"),
        center_weight: cfg.float("train.center_weight"),
        center_alpha: cfg.float("train.center_alpha"),
        distill,
        seed: cfg.seed(),
    };
    if tc.batch_size == 0 {
        return Err(usage("train.batch must be positive"));
    }
    tc.schedule = schedule_from(cfg, tc.epochs * tc.steps_per_epoch(data.len()))?;
    let outcome = train(&data, &tc)?;
    let model_path = PathBuf::from(cfg.text("paths.model"));
    outcome.model.save(&model_path)?;
    if let Some(p) = optional_path(cfg, "paths.log") {
        write_metric_log(&p, &outcome.log)?;
    }
    if let (Some(p), Some(t)) = (trace_path, &outcome.trace) {
        std::fs::write(p, t.to_log())?;
    }
    let last = outcome.log.last().map_or(f64::NAN, |r| r.loss);
    writeln!(
        out,
        "trained {} on {} ({}), final loss {last:.6}; model written to {}",
        plural(outcome.log.len(), "step", "steps"),
        plural(data.len(), "sample", "samples"),
        plural(data.manifest.classes(), "class", "classes"),
        model_path.display()
    )?;
    Ok(())
}

fn file_pairs(cfg: &RunConfig, model: &Model) -> Result<(Mat, PairSet), Failure> {
    let records = read_pairs(Path::new(cfg.text("paths.pairs")))?;
    embed_pairs(&records, cfg, model)
}

fn embed_pairs<'a>(
    records: &'a [PairRecord],
    cfg: &RunConfig,
    model: &Model,
) -> Result<(Mat, PairSet), Failure> {
    let root = PathBuf::from(cfg.text("paths.images"));
    let side = input_side(model)?;
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut rows: Vec<f64> = Vec::new();
    let mut pairs = Vec::with_capacity(records.len());
    for r in records {
        let mut slot = |p: &'a str| -> Result<usize, Failure> {
            if let Some(&i) = index.get(p) {
                return Ok(i);
            }
            let i = index.len();
            rows.extend(image_features(&read_ppm(&root.join(p))?, side)?);
            index.insert(p, i);
            Ok(i)
        };
        let (a, b) = (slot(&r.path_a)?, slot(&r.path_b)?);
        pairs.push(Pair { a, b, same: r.same });
    }
    let x = Mat::from_vec(index.len(), side * side, rows)?;
    Ok((model.embed(&x)?, PairSet::new(pairs)))
}

pub fn eval_cmd(cfg: &RunConfig, out: &mut dyn Write) -> Outcome {
    let folds = cfg.int("eval.folds");
    let far = cfg.float("eval.far");
    if folds < 2 {
        return Err(usage("eval.folds must be at least 2"));
    }
    if !(0.0..=1.0).contains(&far) {
        return Err(usage(format!("eval.far must lie in [0, 1], got {far}")));
    }
    let toy = is_toy(cfg)?;
    let model = Model::load(Path::new(cfg.text("paths.model")))?;
    let (emb, pairs) = if toy {
        let spec = toy_spec(cfg);
        let (x, labels) = spec
            .sample(
                cfg.int("data.eval_per_class"),
                &mut Prng::split(cfg.seed(), 11),
            )
            .map_err(|e| usage(e.to_string()))?;
        let pairs = synthetic_pairs(
            &labels,
            cfg.int("eval.pairs"),
            &mut Prng::split(cfg.seed(), 12),
        )?;
        (model.embed(&x)?, pairs)
    } else {
        file_pairs(cfg, &model)?
    };
    let scored = score_pairs(&emb, &pairs)?;
    let kf = verify_kfold(&scored, folds)?;
    let roc = roc_points(&scored)?;
    let tar = tar_at_far(&roc, far);
    let auc = roc_auc(&roc);
    let rows = vec![
        ("pairs".to_string(), scored.len() as f64),
        ("folds".to_string(), folds as f64),
        ("mean_accuracy".to_string(), kf.mean_accuracy),
        ("std".to_string(), kf.std),
        (format!("tar_at_far_{far}"), tar),
        ("auc".to_string(), auc),
    ];
    write_report(Path::new(cfg.text("paths.report")), &rows)?;
    if let Some(p) = optional_path(cfg, "paths.roc") {
        write_roc(&p, &roc)?;
    }
    writeln!(
        out,
        "accuracy {:.4} ± {:.4} over {folds} folds of {}; TAR@FAR={far} {tar:.4}; AUC {auc:.4}",
        kf.mean_accuracy,
        kf.std,
        plural(scored.len(), "pair", "pairs")
    )?;
    Ok(())
}
