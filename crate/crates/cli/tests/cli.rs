use std::path::Path;
use std::process::{Command, Output};

use facekit_core::align::{write_ppm, Image, SimilarityTransform, CANONICAL_TEMPLATE};

fn facekit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facekit"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn schedule_endpoints() {
    let dir = tempfile::tempdir().unwrap();
    let o = facekit(
        dir.path(),
        &[
            "schedule", "--kind", "cosine", "--eta0", "0.1", "--total", "100",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "step,lr");
    assert_eq!(rows.len(), 102);
    assert_eq!(rows[1], "0,0.1");
    assert_eq!(rows[101], "100,0");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"sched.eta0": 0.5, "sched.total": 10}"#,
    )
    .unwrap();
    let o = facekit(dir.path(), &["schedule", "--config", "c.json"]);
    assert!(stdout(&o).lines().nth(1) == Some("0,0.5"));
    assert_eq!(stdout(&o).lines().count(), 12);
    let o = facekit(
        dir.path(),
        &["schedule", "--config", "c.json", "--eta0", "0.2"],
    );
    assert!(stdout(&o).lines().nth(1) == Some("0,0.2"));
}

#[test]
fn prep_removes_low_shot_class() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = String::from("path,label\n");
    for i in 0..3 {
        m.push_str(&format!("a/{i}.ppm,7\n"));
    }
    for i in 0..10 {
        m.push_str(&format!("b/{i}.ppm,9\n"));
    }
    std::fs::write(dir.path().join("m.csv"), m).unwrap();
    let o = facekit(
        dir.path(),
        &[
            "prep",
            "--manifest",
            "m.csv",
            "--num-min",
            "5",
            "--out",
            "f.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("removed 1 class / 3 records"),
        "{}",
        stdout(&o)
    );
    let out = std::fs::read_to_string(dir.path().join("f.csv")).unwrap();
    let rows: Vec<&str> = out.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    assert!(rows.iter().all(|r| r.ends_with(",9")));
}

#[test]
fn train_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"train.epochs": 3, "data.per_class": 20, "sched.warmup": 2, "paths.log": ""}"#,
    )
    .unwrap();
    for out in ["a.fevl", "b.fevl"] {
        let o = facekit(
            dir.path(),
            &["train", "--config", "c.json", "--seed", "7", "--out", out],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = std::fs::read(dir.path().join("a.fevl")).unwrap();
    let b = std::fs::read(dir.path().join("b.fevl")).unwrap();
    assert_eq!(a, b);
    assert!(a.starts_with(b"FEVL1"));
    let o = facekit(
        dir.path(),
        &[
            "train", "--config", "c.json", "--seed", "8", "--out", "c.fevl",
        ],
    );
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(a, std::fs::read(dir.path().join("c.fevl")).unwrap());
}

#[test]
fn toy_train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let o = facekit(
        dir.path(),
        &["train", "--epochs", "40", "--warmup", "20", "--seed", "3"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("metrics.csv").exists());
    let o = facekit(dir.path(), &["eval", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("accuracy "), "{}", stdout(&o));
    let report = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let acc: f64 = report
        .lines()
        .find_map(|l| l.strip_prefix("mean_accuracy,"))
        .unwrap()
        .parse()
        .unwrap();
    assert!(acc >= 0.95, "{acc}");
    assert!(std::fs::read_to_string(dir.path().join("roc.csv"))
        .unwrap()
        .starts_with("threshold,far,tar"));
}

#[test]
fn sharded_train_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let o = facekit(
        dir.path(),
        &[
            "train",
            "--epochs",
            "1",
            "--per-class",
            "10",
            "--shards",
            "3",
            "--trace",
            "t.log",
            "--log",
            "",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let trace = std::fs::read_to_string(dir.path().join("t.log")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines.len(), 9);
    assert!(lines.iter().all(|l| l.split('\t').count() == 3));
    let o = facekit(dir.path(), &["train", "--trace", "t.log"]);
    assert_eq!(o.status.code(), Some(1));
}

fn spotted(xf: &SimilarityTransform) -> (Image, [[f64; 2]; 5]) {
    let pts = CANONICAL_TEMPLATE.map(|p| xf.apply(p));
    let img = Image::from_fn(160, 160, 3, |y, x, c| {
        let v: f64 = pts
            .iter()
            .map(|p| (-((x as f64 - p[0]).powi(2) + (y as f64 - p[1]).powi(2)) / 8.0).exp())
            .sum();
        v.min(1.0) * [1.0, 0.8, 0.6][c]
    })
    .unwrap();
    (img, pts)
}

#[test]
fn align_prep_train_eval_on_images() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    let mut lm = String::from("path,x1,y1,x2,y2,x3,y3,x4,y4,x5,y5\n");
    let mut manifest = String::from("path,label\n");
    let mut pairs = String::new();
    for id in 0..3 {
        for k in 0..4 {
            let xf = SimilarityTransform::from_params(
                1.0 + 0.1 * k as f64,
                0.1 * id as f64 - 0.05 * k as f64,
                [10.0 + 3.0 * k as f64, 12.0],
            );
            let (img, pts) = spotted(&xf);
            let name = format!("{id}_{k}.ppm");
            write_ppm(&raw.join(&name), &img).unwrap();
            lm.push_str(&name);
            for p in pts {
                lm.push_str(&format!(",{},{}", p[0], p[1]));
            }
            lm.push('\n');
            manifest.push_str(&format!("{name},{}\n", 40 + id));
            if k > 0 {
                pairs.push_str(&format!(
                    "{id}_0.ppm {name} 1\n{name} {}_{k}.ppm 0\n",
                    (id + 1) % 3
                ));
            }
        }
    }
    std::fs::write(dir.path().join("lm.csv"), lm).unwrap();
    std::fs::write(dir.path().join("m.csv"), manifest).unwrap();
    std::fs::write(dir.path().join("pairs.txt"), pairs).unwrap();

    let o = facekit(
        dir.path(),
        &[
            "align",
            "--images",
            "raw",
            "--landmarks",
            "lm.csv",
            "--out",
            "aligned",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("aligned 12 images"));
    let bytes = std::fs::read(dir.path().join("aligned/1_2.ppm")).unwrap();
    assert!(bytes.starts_with(b"P6\n112 112\n255\n"));

    let o = facekit(
        dir.path(),
        &[
            "prep",
            "--manifest",
            "m.csv",
            "--images",
            "aligned",
            "--num-min",
            "2",
            "--augment",
            "1",
            "--out",
            "f.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("removed 0 classes / 0 records"));
    assert!(
        stdout(&o).contains("kept 24 records in 3 classes"),
        "{}",
        stdout(&o)
    );

    let o = facekit(
        dir.path(),
        &[
            "train",
            "--source",
            "manifest",
            "--manifest",
            "f.csv",
            "--images",
            "aligned",
            "--num-min",
            "2",
            "--side",
            "8",
            "--epochs",
            "5",
            "--batch",
            "8",
            "--embed-dim",
            "4",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = facekit(
        dir.path(),
        &[
            "prep",
            "--manifest",
            "m.csv",
            "--images",
            "aligned",
            "--num-min",
            "2",
            "--teacher",
            "model.fevl",
            "--tau",
            "0.01",
            "--out",
            "g.csv",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("self-training at tau 0.01 dropped"));

    let o = facekit(
        dir.path(),
        &[
            "eval",
            "--source",
            "manifest",
            "--pairs",
            "pairs.txt",
            "--images",
            "aligned",
            "--folds",
            "3",
            "--roc",
            "",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(
        stdout(&o).contains("over 3 folds of 18 pairs"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["frobnicate"][..],
        &["train", "--no-such-flag", "1"],
        &["train", "--epochs", "many"],
        &["schedule", "--kind", "linear"],
        &["eval", "--folds", "1"],
        &[],
    ] {
        let o = facekit(dir.path(), args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
        assert!(
            stderr(&o).to_lowercase().contains("usage"),
            "{args:?}: {}",
            stderr(&o)
        );
    }
    std::fs::write(dir.path().join("bad.json"), r#"{"head.margin": 0.3}"#).unwrap();
    let o = facekit(dir.path(), &["train", "--config", "bad.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown config key 'head.margin'"));
}

#[test]
fn data_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = facekit(dir.path(), &["prep", "--manifest", "missing.csv"]);
    assert_eq!(o.status.code(), Some(2));
    std::fs::write(dir.path().join("m.csv"), "path,label\na.ppm,1\n").unwrap();
    let o = facekit(
        dir.path(),
        &["prep", "--manifest", "m.csv", "--num-min", "5"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = facekit(dir.path(), &["eval", "--model", "missing.fevl"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let o = facekit(dir.path(), &["version"]);
    assert_eq!(
        stdout(&o).trim(),
        format!("facekit {}", env!("CARGO_PKG_VERSION"))
    );
    let o = facekit(dir.path(), &["train", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("--epochs"));
}
