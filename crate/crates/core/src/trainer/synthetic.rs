use crate::data::DatasetManifest;
use crate::error::{Error, Result};
use crate::eval::{Pair, PairSet};
use crate::numerics::{Mat, Prng};

use super::TrainSet;

/// Isotropic Gaussian classes whose means sit on random sign codes: every
/// mean coordinate is ±(separation/2)·σ, so two means differ by
/// separation·σ along each coordinate where their codes disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub sigma: f64,
    pub separation: f64,
    pub seed: u64,
}

impl BlobSpec {
    pub fn toy(seed: u64) -> Self {
        BlobSpec {
            classes: 10,
            dim: 32,
            sigma: 1.0,
            separation: 4.0,
            seed,
        }
    }

    pub fn means(&self) -> Result<Mat> {
        if self.classes < 2 || self.dim == 0 {
            return Err(Error::invalid(
                "blobs need at least 2 classes and a positive dim",
            ));
        }
        if self.dim < 64 && self.classes > (1usize << self.dim) {
            return Err(Error::invalid("more classes than distinct sign codes"));
        }
        let mut rng = Prng::split(self.seed, 0xB10B);
        let half = self.separation * self.sigma / 2.0;
        let mut codes: Vec<Vec<f64>> = Vec::with_capacity(self.classes);
        while codes.len() < self.classes {
            let code: Vec<f64> = (0..self.dim)
                .map(|_| {
                    if rng.next_u64() >> 63 == 1 {
                        half
                    } else {
                        -half
                    }
                })
                .collect();
            if !codes.contains(&code) {
                codes.push(code);
            }
        }
        Ok(Mat::from_fn(self.classes, self.dim, |c, d| codes[c][d]))
    }

    /// `per_class` draws of every class, interleaved (sample i has label i mod C).
    pub fn sample(&self, per_class: usize, rng: &mut Prng) -> Result<(Mat, Vec<usize>)> {
        let means = self.means()?;
        let n = per_class * self.classes;
        let labels: Vec<usize> = (0..n).map(|i| i % self.classes).collect();
        let x = Mat::from_fn(n, self.dim, |i, d| {
            means[(labels[i], d)] + self.sigma * rng.normal()
        });
        Ok((x, labels))
    }

    pub fn train_set(&self, per_class: usize, rng: &mut Prng) -> Result<TrainSet> {
        let (features, labels) = self.sample(per_class, rng)?;
        let manifest = DatasetManifest::from_labelled(
            labels
                .iter()
                .enumerate()
                .map(|(i, &y)| (format!("blob/{i}"), y as i64)),
        )?;
        Ok(TrainSet { features, manifest })
    }
}

/// `n_pairs` verification pairs over `labels`, alternating same/different.
pub fn synthetic_pairs(labels: &[usize], n_pairs: usize, rng: &mut Prng) -> Result<PairSet> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    if by_class.iter().filter(|v| v.len() >= 2).count() == 0
        || by_class.iter().filter(|v| !v.is_empty()).count() < 2
    {
        return Err(Error::invalid(
            "pairs need two classes and a class with two samples",
        ));
    }
    let mut pairs = Vec::with_capacity(n_pairs);
    while pairs.len() < n_pairs {
        let same = pairs.len() % 2 == 0;
        let a = rng.below(labels.len());
        let pool = &by_class[labels[a]];
        let b = if same {
            if pool.len() < 2 {
                continue;
            }
            let b = pool[rng.below(pool.len())];
            if b == a {
                continue;
            }
            b
        } else {
            let b = rng.below(labels.len());
            if labels[b] == labels[a] {
                continue;
            }
            b
        };
        pairs.push(Pair { a, b, same });
    }
    Ok(PairSet::new(pairs))
}
