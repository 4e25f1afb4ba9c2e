//! Shared fixtures for the criterion benches under `benches/`.

use facekit_core::{Mat, Prng};

/// Random embeddings, class weights and labels.
pub fn head_batch(seed: u64, b: usize, c: usize, d: usize) -> (Mat, Mat, Vec<usize>) {
    let mut rng = Prng::new(seed);
    let x = rng.normal_mat(b, d);
    let w = rng.normal_mat(c, d);
    let y = (0..b).map(|_| rng.below(c)).collect();
    (x, w, y)
}

/// Noisy verification scores: same pairs centred at 0.5, different at 0.1.
pub fn pair_scores(seed: u64, n: usize) -> (Vec<f64>, Vec<bool>) {
    let mut rng = Prng::new(seed);
    let same: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let scores = same
        .iter()
        .map(|&s| if s { 0.5 } else { 0.1 } + 0.2 * rng.normal())
        .collect();
    (scores, same)
}
