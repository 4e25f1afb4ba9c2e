use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueKind {
    Int,
    Float,
    /// A float, or `auto` for the head's standard value.
    FloatOrAuto,
    Bool,
    /// Comma-separated non-negative integers, possibly empty.
    IntList,
    Text,
}

#[derive(Clone, Copy, Debug)]
pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub kind: ValueKind,
    pub doc: &'static str,
}

const fn key(
    key: &'static str,
    default: &'static str,
    kind: ValueKind,
    doc: &'static str,
) -> KeySpec {
    KeySpec {
        key,
        default,
        kind,
        doc,
    }
}

use ValueKind::*;

/// Every tunable, its default and its meaning. Config files and flags both
/// address these keys.
pub const KEYS: &[KeySpec] = &[
    key("seed", "0", Int, "root of every random stream"),
    key("head.kind", "arcface", Text, "margin head (normsoftmax, sphereface, cosface, amsoftmax, arcface, adacos, curricularface, magface, adamsoftmax, arcnegface, npcface, mvsoftmax)"),
    key("head.s", "64", Float, "logit scale"),
    key("head.m", "auto", FloatOrAuto, "margin; auto picks the head's standard margin"),
    key("head.gamma", "0", Float, "focal exponent, 0 disables"),
    key("head.epsilon", "0", Float, "label-smoothing mass, 0 disables"),
    key("sched.kind", "cosine", Text, "learning-rate schedule (cosine or step)"),
    key("sched.eta0", "0.1", Float, "peak learning rate"),
    key("sched.warmup", "0", Int, "linear warmup steps"),
    key("sched.total", "100", Int, "total steps of a dumped schedule (training derives it from epochs)"),
    key("sched.milestones", "", IntList, "step schedule milestones"),
    key("sched.factor", "0.1", Float, "step schedule decay factor"),
    key("train.epochs", "10", Int, "passes over the training set"),
    key("train.batch", "64", Int, "batch size"),
    key("train.momentum", "0.9", Float, "SGD momentum"),
    key("train.wd", "0.0005", Float, "weight decay"),
    key("train.backbone", "linear", Text, "backbone (linear or mlp:N)"),
    key("train.embed_dim", "16", Int, "embedding dimension"),
    key("train.weighted", "true", Bool, "class-balanced batch sampling"),
    key("train.center_weight", "0", Float, "center loss weight, 0 disables"),
    key("train.center_alpha", "0.5", Float, "center update rate"),
    key("shard.p", "1", Int, "classifier shards, 1 keeps the dense head"),
    key("distill.t", "4", Float, "distillation temperature"),
    key("distill.beta", "0.5", Float, "distillation weight"),
    key("data.source", "toy", Text, "training/evaluation data (toy or manifest)"),
    key("data.num_min", "10", Int, "minimum images per class"),
    key("data.side", "16", Int, "side of the grayscale feature image"),
    key("data.classes", "10", Int, "toy blob classes"),
    key("data.dim", "32", Int, "toy blob dimension"),
    key("data.separation", "4", Float, "toy blob mean separation in sigmas"),
    key("data.per_class", "100", Int, "toy training samples per class"),
    key("data.eval_per_class", "60", Int, "toy held-out samples per class"),
    key("eval.pairs", "600", Int, "toy verification pairs"),
    key("eval.folds", "10", Int, "verification folds"),
    key("eval.far", "0.001", Float, "false-accept rate for the TAR report"),
    key("selftrain.tau", "0", Float, "teacher confidence floor, 0 disables"),
    key("aug.copies", "0", Int, "augmented copies written per image"),
    key("aug.hflip_prob", "0.5", Float, "horizontal flip probability"),
    key("aug.hsb_lo", "0.6", Float, "lower hue/saturation/brightness coefficient"),
    key("aug.hsb_hi", "1.4", Float, "upper hue/saturation/brightness coefficient"),
    key("aug.pca_sigma", "0.1", Float, "PCA colour noise scale, 0 disables"),
    key("aug.pca_samples", "10000", Int, "pixels sampled for the colour PCA"),
    key("paths.manifest", "manifest.csv", Text, "input manifest"),
    key("paths.images", ".", Text, "image root"),
    key("paths.landmarks", "landmarks.csv", Text, "landmark file"),
    key("paths.aligned", "aligned", Text, "aligned image directory"),
    key("paths.filtered", "filtered.csv", Text, "output manifest"),
    key("paths.label_map", "", Text, "dense-to-original label map, empty skips"),
    key("paths.augmented", "augmented", Text, "augmented image directory"),
    key("paths.model", "model.fevl", Text, "model file"),
    key("paths.teacher", "", Text, "teacher model, empty disables"),
    key("paths.log", "metrics.csv", Text, "training metric log, empty skips"),
    key("paths.trace", "", Text, "shard reduction trace of the final step, empty skips"),
    key("paths.pairs", "pairs.txt", Text, "verification pairs file"),
    key("paths.report", "report.csv", Text, "evaluation report"),
    key("paths.roc", "roc.csv", Text, "ROC curve, empty skips"),
    key("paths.schedule", "-", Text, "schedule CSV, - for stdout"),
];

pub fn spec(key: &str) -> Option<&'static KeySpec> {
    KEYS.iter().find(|k| k.key == key)
}

fn check(kind: ValueKind, v: &str) -> Result<(), String> {
    let ok = match kind {
        Int => v.parse::<usize>().is_ok(),
        Float => v.parse::<f64>().is_ok_and(f64::is_finite),
        FloatOrAuto => v == "auto" || v.parse::<f64>().is_ok_and(f64::is_finite),
        Bool => v == "true" || v == "false",
        IntList => v.is_empty() || v.split(',').all(|p| p.trim().parse::<usize>().is_ok()),
        Text => true,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("expected {kind:?}, got '{v}'"))
    }
}

/// Resolved settings: defaults, then a config file, then flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS
                .iter()
                .map(|k| (k.key, k.default.to_string()))
                .collect(),
        }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let s = spec(key).ok_or_else(|| format!("unknown config key '{key}'"))?;
        check(s.kind, value).map_err(|e| format!("{key}: {e}"))?;
        self.values.insert(s.key, value.to_string());
        Ok(())
    }

    /// Applies a flat JSON object whose keys are config keys.
    pub fn merge_json(&mut self, text: &str) -> Result<(), String> {
        let v: serde_json::Value =
            serde_json::from_str(text).map_err(|e| format!("config is not valid JSON: {e}"))?;
        let obj = v.as_object().ok_or("config must be a JSON object")?;
        for (k, v) in obj {
            let raw = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(|i| {
                        i.as_u64()
                            .map(|n| n.to_string())
                            .ok_or(format!("{k}: list items must be integers"))
                    })
                    .collect::<Result<Vec<_>, _>>()?
                    .join(","),
                _ => return Err(format!("{k}: unsupported value {v}")),
            };
            self.set(k, &raw)?;
        }
        Ok(())
    }

    pub fn text(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("no config key {key}"))
    }

    pub fn int(&self, key: &str) -> usize {
        self.text(key).parse().expect("validated on set")
    }

    pub fn float(&self, key: &str) -> f64 {
        self.text(key).parse().expect("validated on set")
    }

    pub fn flag(&self, key: &str) -> bool {
        self.text(key) == "true"
    }

    pub fn ints(&self, key: &str) -> Vec<usize> {
        let v = self.text(key);
        if v.is_empty() {
            return Vec::new();
        }
        v.split(',')
            .map(|p| p.trim().parse().expect("validated on set"))
            .collect()
    }

    pub fn seed(&self) -> u64 {
        self.text("seed").parse().expect("validated on set")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_satisfy_their_own_kinds() {
        for k in KEYS {
            assert!(check(k.kind, k.default).is_ok(), "{}", k.key);
        }
        let mut seen = std::collections::HashSet::new();
        assert!(KEYS.iter().all(|k| seen.insert(k.key)));
    }

    #[test]
    fn json_merge_and_rejection() {
        let mut c = RunConfig::default();
        c.merge_json(r#"{"head.s": 30, "sched.milestones": [10, 20], "train.weighted": false, "head.kind": "cosface"}"#)
            .unwrap();
        assert_eq!(c.float("head.s"), 30.0);
        assert_eq!(c.ints("sched.milestones"), vec![10, 20]);
        assert!(!c.flag("train.weighted"));
        assert!(c
            .merge_json(r#"{"head.margin": 0.3}"#)
            .unwrap_err()
            .contains("unknown config key"));
        assert!(c.merge_json(r#"{"train.epochs": -1}"#).is_err());
        assert!(c.merge_json("[1]").is_err());
    }
}
