use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Prng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    pub path: String,
    /// Dense label in `0..classes()`.
    pub label: usize,
}

/// Labelled image list with densely re-indexed class ids.
///
/// `original_labels[k]` is the label that dense class `k` carried in the
/// source file; dense ids follow the sorted order of the originals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    records: Vec<Record>,
    original_labels: Vec<i64>,
    class_counts: Vec<usize>,
}

impl DatasetManifest {
    /// Builds a manifest from `(path, original label)` pairs.
    pub fn from_labelled<S: Into<String>>(
        rows: impl IntoIterator<Item = (S, i64)>,
    ) -> Result<Self> {
        let rows: Vec<(String, i64)> = rows.into_iter().map(|(p, l)| (p.into(), l)).collect();
        if rows.is_empty() {
            return Err(Error::Empty("empty manifest".into()));
        }
        let mut index = BTreeMap::new();
        for (_, l) in &rows {
            index.insert(*l, 0usize);
        }
        let original_labels: Vec<i64> = index.keys().copied().collect();
        for (k, v) in index.values_mut().enumerate() {
            *v = k;
        }
        let mut class_counts = vec![0; original_labels.len()];
        let records = rows
            .into_iter()
            .map(|(path, l)| {
                let label = index[&l];
                class_counts[label] += 1;
                Record { path, label }
            })
            .collect();
        Ok(DatasetManifest {
            records,
            original_labels,
            class_counts,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn original_labels(&self) -> &[i64] {
        &self.original_labels
    }

    pub fn original_label(&self, dense: usize) -> i64 {
        self.original_labels[dense]
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    /// Keeps the records for which `keep(index, record)` holds, re-indexing
    /// the surviving classes densely.
    pub fn retain(&self, mut keep: impl FnMut(usize, &Record) -> bool) -> Result<Self> {
        let rows: Vec<(String, i64)> = self
            .records
            .iter()
            .enumerate()
            .filter(|(i, r)| keep(*i, r))
            .map(|(_, r)| (r.path.clone(), self.original_labels[r.label]))
            .collect();
        Self::from_labelled(rows)
    }
}

/// Loads a `path,label` CSV with a header line.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let shown = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format {
            path: shown.clone(),
            msg: e.to_string(),
        })?;
    let header = rdr.headers().map_err(|e| Error::Parse {
        path: shown.clone(),
        line: 1,
        msg: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != ["path", "label"] {
        return Err(Error::Parse {
            path: shown,
            line: 1,
            msg: "expected header 'path,label'".into(),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let perr = |msg: String| Error::Parse {
            path: shown.clone(),
            line,
            msg,
        };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != 2 || rec[0].is_empty() {
            return Err(perr("expected 'path,label'".into()));
        }
        let label: i64 = rec[1]
            .parse()
            .map_err(|_| perr(format!("bad label '{}'", &rec[1])))?;
        rows.push((rec[0].to_string(), label));
    }
    DatasetManifest::from_labelled(rows)
        .map_err(|_| Error::Empty(format!("empty manifest: {shown}")))
}

/// Writes the manifest with its original labels, so load∘write is the identity.
pub fn write_manifest(path: &Path, m: &DatasetManifest) -> Result<()> {
    let ferr = |e: csv::Error| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(ferr)?;
    w.write_record(["path", "label"]).map_err(ferr)?;
    for r in m.records() {
        w.write_record([r.path.as_str(), &m.original_label(r.label).to_string()])
            .map_err(ferr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes the dense-to-original label mapping as `dense,original`.
pub fn write_label_map(path: &Path, m: &DatasetManifest) -> Result<()> {
    let ferr = |e: csv::Error| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(ferr)?;
    w.write_record(["dense", "original"]).map_err(ferr)?;
    for (k, l) in m.original_labels().iter().enumerate() {
        w.write_record([k.to_string(), l.to_string()])
            .map_err(ferr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Drops classes with fewer than `num_min` records.
pub fn filter_low_shot(m: &DatasetManifest, num_min: usize) -> Result<DatasetManifest> {
    let counts = m.class_counts();
    m.retain(|_, r| counts[r.label] >= num_min).map_err(|_| {
        let best = counts.iter().max().copied().unwrap_or(0);
        Error::Empty(format!(
            "no class has at least {num_min} records (largest class has {best})"
        ))
    })
}

/// `n` record indices drawn with replacement, each record weighted by the
/// inverse size of its class, so every class is equally likely.
pub fn weighted_sample(m: &DatasetManifest, rng: &mut Prng, n: usize) -> Vec<usize> {
    let counts = m.class_counts();
    let mut cumulative = Vec::with_capacity(m.len());
    let mut total = 0.0;
    for r in m.records() {
        total += 1.0 / counts[r.label] as f64;
        cumulative.push(total);
    }
    (0..n)
        .map(|_| {
            let u = rng.next_f64() * total;
            cumulative.partition_point(|&c| c <= u).min(m.len() - 1)
        })
        .collect()
}

/// One line of a verification pairs file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairRecord {
    pub path_a: String,
    pub path_b: String,
    pub same: bool,
}

/// Reads whitespace-separated `path1 path2 flag` lines; blank lines are skipped.
pub fn read_pairs(path: &Path) -> Result<Vec<PairRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pairs(&text, &path.display().to_string())
}

pub fn parse_pairs(text: &str, source: &str) -> Result<Vec<PairRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let perr = |msg: String| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            msg,
        };
        if fields.len() != 3 {
            return Err(perr(format!(
                "expected 'path1 path2 flag', found {} fields",
                fields.len()
            )));
        }
        let same = match fields[2] {
            "1" => true,
            "0" => false,
            f => return Err(perr(format!("flag must be 0 or 1, got '{f}'"))),
        };
        out.push(PairRecord {
            path_a: fields[0].to_string(),
            path_b: fields[1].to_string(),
            same,
        });
    }
    if out.is_empty() {
        return Err(Error::Empty(format!("no pairs in {source}")));
    }
    Ok(out)
}
