//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use facekit_core::align::{Image, LandmarkSet, SimilarityTransform, CANONICAL_TEMPLATE};
use facekit_core::heads::{
    center_loss_step, circle_loss, circle_loss_with_weights, head_loss, head_loss_and_grad,
    softmax_xent, triplet_loss, HeadConfig, HeadKind, HeadState,
};
use facekit_core::numerics::{finite_diff_grad, relative_error, Mat, Prng};
use facekit_core::trainer::distill_loss;

pub const FD_STEP: f64 = 1e-6;

fn rel(a: &Mat, b: &Mat) -> f64 {
    relative_error(a, b, 1e-8)
}

/// Worst relative error between analytic and central-difference gradients
/// for every head kind plus the center, triplet, circle and distillation
/// losses, on one random instance per case.
pub fn gradient_errors(seed: u64) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for (k, kind) in HeadKind::ALL.into_iter().enumerate() {
        let mut rng = Prng::split(seed, k as u64);
        let b = 2 + rng.below(7);
        let c = 3 + rng.below(8);
        let d = 2 + rng.below(15);
        let mut x = rng.normal_mat(b, d);
        if kind == HeadKind::MagFace {
            x = x.scale(12.0);
        }
        let w = rng.normal_mat(c, d);
        let labels: Vec<usize> = (0..b).map(|_| rng.below(c)).collect();
        let cfg = HeadConfig::new(kind).with_scale(16.0);
        let mut state = HeadState::new(&cfg, c, d).unwrap();
        if kind == HeadKind::AdaMSoftmax {
            state.adam_margins = (0..c).map(|_| rng.uniform(0.1, 0.5)).collect();
        }
        let g = head_loss_and_grad(&x, &w, &labels, &cfg, &state).unwrap();
        let fx = finite_diff_grad(
            |m| head_loss(m, &w, &labels, &cfg, &state).unwrap(),
            &x,
            FD_STEP,
        )
        .unwrap();
        let fw = finite_diff_grad(
            |m| head_loss(&x, m, &labels, &cfg, &state).unwrap(),
            &w,
            FD_STEP,
        )
        .unwrap();
        out.push((
            kind.to_string(),
            rel(&g.d_embeddings, &fx).max(rel(&g.d_weights, &fw)),
        ));
    }

    let mut rng = Prng::split(seed, 100);
    let (b, c, d) = (2 + rng.below(7), 2 + rng.below(9), 2 + rng.below(15));
    let x = rng.normal_mat(b, d);
    let centers = rng.normal_mat(c, d);
    let labels: Vec<usize> = (0..b).map(|_| rng.below(c)).collect();
    let cs = center_loss_step(&x, &labels, &centers, 0.5).unwrap();
    let fd = finite_diff_grad(
        |m| center_loss_step(m, &labels, &centers, 0.5).unwrap().loss,
        &x,
        FD_STEP,
    )
    .unwrap();
    out.push(("Center".into(), rel(&cs.d_embeddings, &fd)));

    let (a, p, n) = (
        rng.normal_mat(b, d),
        rng.normal_mat(b, d),
        rng.normal_mat(b, d),
    );
    let t = triplet_loss(&a, &p, &n, 0.3).unwrap();
    let fa = finite_diff_grad(|m| triplet_loss(m, &p, &n, 0.3).unwrap().loss, &a, FD_STEP).unwrap();
    let fp = finite_diff_grad(|m| triplet_loss(&a, m, &n, 0.3).unwrap().loss, &p, FD_STEP).unwrap();
    let fnn =
        finite_diff_grad(|m| triplet_loss(&a, &p, m, 0.3).unwrap().loss, &n, FD_STEP).unwrap();
    let terr = rel(&t.d_anchor, &fa)
        .max(rel(&t.d_positive, &fp))
        .max(rel(&t.d_negative, &fnn));
    out.push(("Triplet".into(), terr));

    // α is detached, so the oracle differentiates with α frozen at the point
    let sp: Vec<f64> = (0..3).map(|_| rng.uniform(-0.9, 0.9)).collect();
    let sn: Vec<f64> = (0..4).map(|_| rng.uniform(-0.9, 0.9)).collect();
    let (m, gamma) = (0.25, 32.0);
    let ap: Vec<f64> = sp.iter().map(|s| (1.0 + m - s).max(0.0)).collect();
    let an: Vec<f64> = sn.iter().map(|s| (s + m).max(0.0)).collect();
    let co = circle_loss(&sp, &sn, m, gamma).unwrap();
    let spm = Mat::from_vec(1, 3, sp.clone()).unwrap();
    let snm = Mat::from_vec(1, 4, sn.clone()).unwrap();
    let fsp = finite_diff_grad(
        |v| {
            circle_loss_with_weights(v.as_slice(), &sn, &ap, &an, m, gamma)
                .unwrap()
                .loss
        },
        &spm,
        FD_STEP,
    )
    .unwrap();
    let fsn = finite_diff_grad(
        |v| {
            circle_loss_with_weights(&sp, v.as_slice(), &ap, &an, m, gamma)
                .unwrap()
                .loss
        },
        &snm,
        FD_STEP,
    )
    .unwrap();
    let cerr = rel(&Mat::from_vec(1, 3, co.d_sp).unwrap(), &fsp)
        .max(rel(&Mat::from_vec(1, 4, co.d_sn).unwrap(), &fsn));
    out.push(("Circle".into(), cerr));

    let s = rng.normal_mat(b, c).scale(3.0);
    let te = rng.normal_mat(b, c).scale(3.0);
    let (temp, beta) = (rng.uniform(1.0, 4.0), rng.uniform(0.0, 1.0));
    let (_, g) = distill_loss(&s, &te, temp, beta, &labels).unwrap();
    let fd = finite_diff_grad(
        |m| distill_loss(m, &te, temp, beta, &labels).unwrap().0,
        &s,
        FD_STEP,
    )
    .unwrap();
    out.push(("Distill".into(), rel(&g, &fd)));
    out
}

/// Brute-force k-fold protocol: explicit fold labels, every candidate
/// threshold scored by a full pass over the training pairs.
pub fn brute_force_kfold(scores: &[f64], same: &[bool], k: usize) -> (f64, f64, Vec<f64>) {
    let n = scores.len();
    let mut sizes = vec![n / k; k];
    for s in sizes.iter_mut().take(n % k) {
        *s += 1;
    }
    let mut fold_of = Vec::with_capacity(n);
    for (f, &s) in sizes.iter().enumerate() {
        fold_of.extend(std::iter::repeat_n(f, s));
    }
    let mut accs = Vec::new();
    let mut thresholds = Vec::new();
    for f in 0..k {
        let train: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        let mut uniq: Vec<f64> = train.iter().map(|&i| scores[i]).collect();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        let mut cands = vec![f64::NEG_INFINITY];
        cands.extend(uniq.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        cands.push(f64::INFINITY);
        let mut best = (0usize, f64::NAN);
        for (ci, &t) in cands.iter().enumerate() {
            let hits = train
                .iter()
                .filter(|&&i| (scores[i] > t) == same[i])
                .count();
            if ci == 0 || hits > best.0 {
                best = (hits, t);
            }
        }
        let hits = test
            .iter()
            .filter(|&&i| (scores[i] > best.1) == same[i])
            .count();
        accs.push(hits as f64 / test.len() as f64);
        thresholds.push(best.1);
    }
    let mut sum = 0.0;
    for a in &accs {
        sum += a;
    }
    let mean = sum / k as f64;
    let mut var = 0.0;
    for a in &accs {
        var += (a - mean) * (a - mean);
    }
    (mean, (var / k as f64).sqrt(), thresholds)
}

/// Gap z_y − z_j reached by gradient descent on smoothed cross-entropy over
/// `k` free logits.
pub fn descended_gap(epsilon: f64, k: usize, lr: f64, iters: usize) -> f64 {
    let mut z = Mat::zeros(1, k);
    for _ in 0..iters {
        let (_, g) = softmax_xent(&z, &[0], epsilon, 0.0).unwrap();
        z.add_scaled(&g, -lr);
    }
    z[(0, 0)] - z[(0, 1)]
}

/// Dark canvas with a Gaussian spot (σ = 2 px) at every landmark of the
/// canonical template mapped through `xf`.
pub fn spotted_face(xf: &SimilarityTransform, h: usize, w: usize) -> (Image, LandmarkSet) {
    let pts = CANONICAL_TEMPLATE.map(|p| xf.apply(p));
    let img = Image::from_fn(h, w, 3, |y, x, _| {
        pts.iter()
            .map(|p| {
                let d2 = (x as f64 - p[0]).powi(2) + (y as f64 - p[1]).powi(2);
                (-d2 / 8.0).exp()
            })
            .sum::<f64>()
            .min(1.0)
    })
    .unwrap();
    (img, LandmarkSet::new(pts).unwrap())
}

/// Intensity-weighted centroid of channel 0 within `radius` of `near`.
pub fn spot_centroid(img: &Image, near: [f64; 2], radius: f64) -> [f64; 2] {
    let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (dx, dy) = (x as f64 - near[0], y as f64 - near[1]);
            if dx * dx + dy * dy <= radius * radius {
                let v = img.get(y, x, 0);
                sx += v * x as f64;
                sy += v * y as f64;
                sw += v;
            }
        }
    }
    [sx / sw, sy / sw]
}
