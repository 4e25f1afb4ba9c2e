//! Pair verification: cosine scoring, the k-fold threshold protocol and ROC
//! analysis.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{dot, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub same: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
    pub scores: Option<Vec<f64>>,
}

impl PairSet {
    pub fn new(pairs: Vec<Pair>) -> Self {
        PairSet {
            pairs,
            scores: None,
        }
    }

    /// Pairs with precomputed scores; indices are sequential placeholders.
    pub fn from_scores(scores: Vec<f64>, same: &[bool]) -> Result<Self> {
        if scores.len() != same.len() {
            return Err(Error::shape(
                "PairSet::from_scores",
                format!("{} scores for {} labels", scores.len(), same.len()),
            ));
        }
        let pairs = same
            .iter()
            .enumerate()
            .map(|(i, &s)| Pair {
                a: i,
                b: i,
                same: s,
            })
            .collect();
        Ok(PairSet {
            pairs,
            scores: Some(scores),
        })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.pairs.iter().map(|p| p.same).collect()
    }

    fn scored(&self) -> Result<&[f64]> {
        let s = self
            .scores
            .as_deref()
            .ok_or_else(|| Error::invalid("pair set has no scores; run score_pairs first"))?;
        if s.len() != self.pairs.len() {
            return Err(Error::shape(
                "PairSet",
                format!("{} scores for {} pairs", s.len(), self.pairs.len()),
            ));
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("pair score".into()));
        }
        Ok(s)
    }
}

/// Cosine similarity of each pair's embeddings.
pub fn score_pairs(embeddings: &Mat, pairs: &PairSet) -> Result<PairSet> {
    let n = embeddings.rows();
    let mut scores = Vec::with_capacity(pairs.len());
    for (i, p) in pairs.pairs.iter().enumerate() {
        if p.a >= n || p.b >= n {
            return Err(Error::invalid(format!(
                "pair {i} references embedding {} but only {n} exist",
                p.a.max(p.b)
            )));
        }
        let (u, v) = (embeddings.row(p.a), embeddings.row(p.b));
        let denom = dot(u, u).sqrt() * dot(v, v).sqrt();
        let s = if denom > 0.0 { dot(u, v) / denom } else { 0.0 };
        scores.push(s.clamp(-1.0, 1.0));
    }
    Ok(PairSet {
        pairs: pairs.pairs.clone(),
        scores: Some(scores),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KFoldResult {
    pub mean_accuracy: f64,
    /// Population standard deviation over folds.
    pub std: f64,
    pub thresholds: Vec<f64>,
    pub fold_accuracies: Vec<f64>,
}

/// Contiguous fold ranges: ⌊n/k⌋ each, one extra for the first n mod k folds.
pub fn fold_ranges(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let (base, extra) = (n / k, n % k);
    let mut start = 0;
    (0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Threshold maximising training accuracy, predicting "same" when
/// score > threshold.
///
/// Candidates in ascending order are −∞, the midpoints of adjacent sorted
/// unique scores, and +∞; the first maximum wins.
pub fn best_threshold(scores: &[f64], same: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]));
    let mut correct: i64 = same.iter().filter(|&&s| s).count() as i64;
    let (mut best, mut best_t) = (correct, f64::NEG_INFINITY);
    let mut k = 0;
    while k < order.len() {
        let v = scores[order[k]];
        while k < order.len() && scores[order[k]] == v {
            correct += if same[order[k]] { -1 } else { 1 };
            k += 1;
        }
        let t = if k < order.len() {
            (v + scores[order[k]]) / 2.0
        } else {
            f64::INFINITY
        };
        if correct > best {
            best = correct;
            best_t = t;
        }
    }
    best_t
}

fn accuracy_at(scores: &[f64], same: &[bool], t: f64) -> f64 {
    let hits = scores
        .iter()
        .zip(same)
        .filter(|(s, y)| (**s > t) == **y)
        .count();
    hits as f64 / scores.len() as f64
}

/// k-fold verification accuracy with contiguous folds in file order.
pub fn verify_kfold(p: &PairSet, k: usize) -> Result<KFoldResult> {
    let scores = p.scored()?;
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    if p.len() < k {
        return Err(Error::invalid(format!(
            "{} pairs cannot fill {k} folds",
            p.len()
        )));
    }
    let same = p.labels();
    let mut thresholds = Vec::with_capacity(k);
    let mut fold_accuracies = Vec::with_capacity(k);
    for r in fold_ranges(p.len(), k) {
        let mut train_s = Vec::with_capacity(p.len() - r.len());
        let mut train_y = Vec::with_capacity(p.len() - r.len());
        for i in (0..p.len()).filter(|i| !r.contains(i)) {
            train_s.push(scores[i]);
            train_y.push(same[i]);
        }
        let t = best_threshold(&train_s, &train_y);
        fold_accuracies.push(accuracy_at(&scores[r.clone()], &same[r], t));
        thresholds.push(t);
    }
    let kf = k as f64;
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / kf;
    let var = fold_accuracies
        .iter()
        .map(|a| (a - mean_accuracy).powi(2))
        .sum::<f64>()
        / kf;
    Ok(KFoldResult {
        mean_accuracy,
        std: var.sqrt(),
        thresholds,
        fold_accuracies,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

/// ROC sweep over unique scores in descending order, accepting pairs with
/// score ≥ threshold. The first point sits just above the top score at (0, 0).
pub fn roc_points(p: &PairSet) -> Result<Vec<RocPoint>> {
    let scores = p.scored()?;
    let same = p.labels();
    let n_same = same.iter().filter(|&&s| s).count();
    let n_diff = same.len() - n_same;
    if n_same == 0 || n_diff == 0 {
        return Err(Error::invalid("ROC needs both same and different pairs"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    let top = scores[order[0]];
    let mut out = vec![RocPoint {
        threshold: top.next_up(),
        far: 0.0,
        tar: 0.0,
    }];
    let (mut ts, mut fs) = (0usize, 0usize);
    let mut k = 0;
    while k < order.len() {
        let v = scores[order[k]];
        while k < order.len() && scores[order[k]] == v {
            if same[order[k]] {
                ts += 1;
            } else {
                fs += 1;
            }
            k += 1;
        }
        out.push(RocPoint {
            threshold: v,
            far: fs as f64 / n_diff as f64,
            tar: ts as f64 / n_same as f64,
        });
    }
    Ok(out)
}

/// TAR at a target FAR by linear interpolation along the ROC.
pub fn tar_at_far(points: &[RocPoint], far: f64) -> f64 {
    let Some(i) = points.iter().rposition(|p| p.far <= far) else {
        return 0.0;
    };
    let a = points[i];
    if a.far == far || i + 1 == points.len() {
        return a.tar;
    }
    let b = points[i + 1];
    a.tar + (b.tar - a.tar) * (far - a.far) / (b.far - a.far)
}

/// Trapezoidal area under the ROC.
pub fn roc_auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].far - w[0].far) * (w[1].tar + w[0].tar) / 2.0)
        .sum()
}

/// Writes `metric,value` rows.
pub fn write_report(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let ferr = |e: csv::Error| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(ferr)?;
    w.write_record(["metric", "value"]).map_err(ferr)?;
    for (m, v) in rows {
        w.write_record([m.clone(), v.to_string()]).map_err(ferr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `threshold,far,tar` rows.
pub fn write_roc(path: &Path, points: &[RocPoint]) -> Result<()> {
    let ferr = |e: csv::Error| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(ferr)?;
    w.write_record(["threshold", "far", "tar"]).map_err(ferr)?;
    for p in points {
        w.write_record([
            p.threshold.to_string(),
            p.far.to_string(),
            p.tar.to_string(),
        ])
        .map_err(ferr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
