use clap::{Arg, ArgAction, Command};

use crate::config::{spec, RunConfig};

/// Subcommands and their `(flag, config key)` pairs.
pub const SUBCOMMANDS: &[(&str, &str, &[(&str, &str)])] = &[
    (
        "align",
        "Warp every image in a landmark file onto the 112x112 template",
        &[
            ("images", "paths.images"),
            ("landmarks", "paths.landmarks"),
            ("out", "paths.aligned"),
        ],
    ),
    (
        "prep",
        "Filter low-shot classes, optionally self-train filter and augment",
        &[
            ("manifest", "paths.manifest"),
            ("images", "paths.images"),
            ("num-min", "data.num_min"),
            ("out", "paths.filtered"),
            ("label-map", "paths.label_map"),
            ("teacher", "paths.teacher"),
            ("tau", "selftrain.tau"),
            ("side", "data.side"),
            ("augment", "aug.copies"),
            ("aug-dir", "paths.augmented"),
            ("hflip-prob", "aug.hflip_prob"),
            ("hsb-lo", "aug.hsb_lo"),
            ("hsb-hi", "aug.hsb_hi"),
            ("pca-sigma", "aug.pca_sigma"),
            ("pca-samples", "aug.pca_samples"),
        ],
    ),
    (
        "train",
        "Train a backbone and margin head on toy blobs or a manifest",
        &[
            ("source", "data.source"),
            ("manifest", "paths.manifest"),
            ("images", "paths.images"),
            ("num-min", "data.num_min"),
            ("side", "data.side"),
            ("classes", "data.classes"),
            ("dim", "data.dim"),
            ("separation", "data.separation"),
            ("per-class", "data.per_class"),
            ("backbone", "train.backbone"),
            ("embed-dim", "train.embed_dim"),
            ("head", "head.kind"),
            ("scale", "head.s"),
            ("margin", "head.m"),
            ("gamma", "head.gamma"),
            ("epsilon", "head.epsilon"),
            ("sched", "sched.kind"),
            ("eta0", "sched.eta0"),
            ("warmup", "sched.warmup"),
            ("milestones", "sched.milestones"),
            ("factor", "sched.factor"),
            ("epochs", "train.epochs"),
            ("batch", "train.batch"),
            ("momentum", "train.momentum"),
            ("wd", "train.wd"),
            ("weighted", "train.weighted"),
            ("center-weight", "train.center_weight"),
            ("center-alpha", "train.center_alpha"),
            ("shards", "shard.p"),
            ("teacher", "paths.teacher"),
            ("distill-t", "distill.t"),
            ("distill-beta", "distill.beta"),
            ("out", "paths.model"),
            ("log", "paths.log"),
            ("trace", "paths.trace"),
        ],
    ),
    (
        "eval",
        "Score verification pairs and run the k-fold protocol",
        &[
            ("model", "paths.model"),
            ("source", "data.source"),
            ("pairs", "paths.pairs"),
            ("images", "paths.images"),
            ("classes", "data.classes"),
            ("dim", "data.dim"),
            ("separation", "data.separation"),
            ("eval-per-class", "data.eval_per_class"),
            ("num-pairs", "eval.pairs"),
            ("folds", "eval.folds"),
            ("far", "eval.far"),
            ("report", "paths.report"),
            ("roc", "paths.roc"),
        ],
    ),
    (
        "schedule",
        "Dump a learning-rate schedule as step,lr CSV",
        &[
            ("kind", "sched.kind"),
            ("eta0", "sched.eta0"),
            ("warmup", "sched.warmup"),
            ("total", "sched.total"),
            ("milestones", "sched.milestones"),
            ("factor", "sched.factor"),
            ("out", "paths.schedule"),
        ],
    ),
    ("version", "Print the version", &[]),
];

pub fn flags(sub: &str) -> &'static [(&'static str, &'static str)] {
    SUBCOMMANDS.iter().find(|s| s.0 == sub).map_or(&[], |s| s.2)
}

fn shown(default: &str) -> &str {
    if default.is_empty() {
        "none"
    } else {
        default
    }
}

pub fn command() -> Command {
    let mut root = Command::new("facekit")
        .about("Face-embedding toolkit: alignment, data prep, margin-head training, verification")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .disable_version_flag(true);
    for &(name, about, table) in SUBCOMMANDS {
        let mut sub = Command::new(name)
            .about(about)
            .bin_name(format!("facekit {name}"));
        if name != "version" {
            sub = sub
                .arg(
                    Arg::new("config")
                        .long("config")
                        .value_name("FILE")
                        .help("JSON file of config keys [default: none]"),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_name("N")
                        .help("root of every random stream [default: 0]"),
                );
        }
        for &(flag, key) in table {
            let s = spec(key).expect("flag bound to a known key");
            sub = sub.arg(
                Arg::new(key)
                    .long(flag)
                    .value_name("VALUE")
                    .action(ArgAction::Set)
                    .help(format!("{} ({key}) [default: {}]", s.doc, shown(s.default))),
            );
        }
        root = root.subcommand(sub);
    }
    root
}

/// Builds the run configuration for `sub`: defaults, then the `--config`
/// file, then flags given on the command line.
pub fn resolve(sub: &str, m: &clap::ArgMatches) -> Result<RunConfig, String> {
    let mut cfg = RunConfig::default();
    if let Some(path) = m.get_one::<String>("config") {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("cannot read config {path}: {e}"))?;
        cfg.merge_json(&text).map_err(|e| format!("{path}: {e}"))?;
    }
    if let Some(seed) = m.get_one::<String>("seed") {
        cfg.set("seed", seed).map_err(|e| format!("--seed: {e}"))?;
    }
    for &(flag, key) in flags(sub) {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v).map_err(|e| format!("--{flag}: {e}"))?;
        }
    }
    Ok(cfg)
}
