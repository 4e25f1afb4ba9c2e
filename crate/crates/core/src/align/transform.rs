use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Five facial landmarks: left eye, right eye, nose tip, left mouth corner,
/// right mouth corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandmarkSet {
    points: [Point; 5],
}

impl LandmarkSet {
    pub fn new(points: [Point; 5]) -> Result<Self> {
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("landmark coordinate".into()));
        }
        let s = LandmarkSet { points };
        let (sxx, syy, sxy) = s.scatter();
        let trace = sxx + syy;
        if trace <= 0.0 {
            return Err(Error::Degenerate("all landmarks coincide".into()));
        }
        if sxx * syy - sxy * sxy <= 1e-12 * trace * trace {
            return Err(Error::Degenerate("landmarks are collinear".into()));
        }
        Ok(s)
    }

    pub fn points(&self) -> &[Point; 5] {
        &self.points
    }

    pub fn centroid(&self) -> Point {
        let mut c = [0.0; 2];
        for p in &self.points {
            c[0] += p[0];
            c[1] += p[1];
        }
        [c[0] / 5.0, c[1] / 5.0]
    }

    fn scatter(&self) -> (f64, f64, f64) {
        let c = self.centroid();
        let (mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0);
        for p in &self.points {
            let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
            xx += dx * dx;
            yy += dy * dy;
            xy += dx * dy;
        }
        (xx, yy, xy)
    }

    pub fn map(&self, xf: &SimilarityTransform) -> Result<LandmarkSet> {
        LandmarkSet::new(self.points.map(|p| xf.apply(p)))
    }
}

/// p ↦ scale·R·p + t with R a proper rotation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: [[f64; 2]; 2],
    pub translation: Point,
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: [[1.0, 0.0], [0.0, 1.0]],
            translation: [0.0, 0.0],
        }
    }

    pub fn from_params(scale: f64, angle: f64, translation: Point) -> Self {
        let (s, c) = angle.sin_cos();
        SimilarityTransform {
            scale,
            rotation: [[c, -s], [s, c]],
            translation,
        }
    }

    pub fn angle(&self) -> f64 {
        self.rotation[1][0].atan2(self.rotation[0][0])
    }

    pub fn apply(&self, p: Point) -> Point {
        let r = &self.rotation;
        [
            self.scale * (r[0][0] * p[0] + r[0][1] * p[1]) + self.translation[0],
            self.scale * (r[1][0] * p[0] + r[1][1] * p[1]) + self.translation[1],
        ]
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let r = &self.rotation;
        let rt = [[r[0][0], r[1][0]], [r[0][1], r[1][1]]];
        let inv = 1.0 / self.scale;
        let t = self.translation;
        SimilarityTransform {
            scale: inv,
            rotation: rt,
            translation: [
                -inv * (rt[0][0] * t[0] + rt[0][1] * t[1]),
                -inv * (rt[1][0] * t[0] + rt[1][1] * t[1]),
            ],
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &SimilarityTransform) -> SimilarityTransform {
        let (a, b) = (&next.rotation, &self.rotation);
        let mut rotation = [[0.0; 2]; 2];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        let moved = next.apply(self.translation);
        SimilarityTransform {
            scale: next.scale * self.scale,
            rotation,
            translation: moved,
        }
    }

    pub fn max_param_diff(&self, other: &SimilarityTransform) -> f64 {
        let mut d = (self.scale - other.scale).abs();
        for i in 0..2 {
            d = d.max((self.translation[i] - other.translation[i]).abs());
            for j in 0..2 {
                d = d.max((self.rotation[i][j] - other.rotation[i][j]).abs());
            }
        }
        d
    }
}

/// Singular value decomposition of a 2×2 matrix, `m = U·diag(s)·Vᵀ` with
/// `s[0] ≥ s[1] ≥ 0`.
pub fn svd2(m: [[f64; 2]; 2]) -> ([[f64; 2]; 2], [f64; 2], [[f64; 2]; 2]) {
    let e = (m[0][0] + m[1][1]) / 2.0;
    let f = (m[0][0] - m[1][1]) / 2.0;
    let g = (m[1][0] + m[0][1]) / 2.0;
    let h = (m[1][0] - m[0][1]) / 2.0;
    let q = e.hypot(h);
    let r = f.hypot(g);
    let (s1, s2) = (q + r, q - r);
    let a1 = g.atan2(f);
    let a2 = h.atan2(e);
    let theta = (a2 - a1) / 2.0;
    let phi = (a2 + a1) / 2.0;
    // m = Rot(phi)·diag(s1, s2)·Rot(theta)
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let mut u = [[cp, -sp], [sp, cp]];
    let v = [[ct, st], [-st, ct]];
    let mut s2 = s2;
    if s2 < 0.0 {
        s2 = -s2;
        u[0][1] = -u[0][1];
        u[1][1] = -u[1][1];
    }
    (u, [s1, s2], v)
}

fn det2(m: &[[f64; 2]; 2]) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Least-squares similarity transform mapping `src` onto `dst`.
///
/// Umeyama's closed form: centre both sets, take the SVD of the
/// cross-covariance and flip the weakest singular direction when the
/// unconstrained optimum would be a reflection.
pub fn estimate_similarity(src: &LandmarkSet, dst: &LandmarkSet) -> Result<SimilarityTransform> {
    let ms = src.centroid();
    let md = dst.centroid();
    let n = 5.0;
    let mut var_s = 0.0;
    let mut cov = [[0.0; 2]; 2];
    for (s, d) in src.points.iter().zip(&dst.points) {
        let a = [s[0] - ms[0], s[1] - ms[1]];
        let b = [d[0] - md[0], d[1] - md[1]];
        var_s += a[0] * a[0] + a[1] * a[1];
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += b[i] * a[j];
            }
        }
    }
    var_s /= n;
    for row in cov.iter_mut() {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    if var_s <= 0.0 {
        return Err(Error::Degenerate("source landmarks coincide".into()));
    }
    let (u, sig, v) = svd2(cov);
    let flip = if det2(&u) * det2(&v) < 0.0 { -1.0 } else { 1.0 };
    let mut rotation = [[0.0; 2]; 2];
    for (i, row) in rotation.iter_mut().enumerate() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = u[i][0] * v[j][0] + flip * u[i][1] * v[j][1];
        }
    }
    let scale = (sig[0] + flip * sig[1]) / var_s;
    if !(scale > 0.0) {
        return Err(Error::Degenerate("destination landmarks coincide".into()));
    }
    let rm = [
        rotation[0][0] * ms[0] + rotation[0][1] * ms[1],
        rotation[1][0] * ms[0] + rotation[1][1] * ms[1],
    ];
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation: [md[0] - scale * rm[0], md[1] - scale * rm[1]],
    })
}

/// Root-mean-square residual of `xf` mapping `src` onto `dst`.
pub fn residual(xf: &SimilarityTransform, src: &LandmarkSet, dst: &LandmarkSet) -> f64 {
    let mut ss = 0.0;
    for (s, d) in src.points.iter().zip(&dst.points) {
        let p = xf.apply(*s);
        ss += (p[0] - d[0]).powi(2) + (p[1] - d[1]).powi(2);
    }
    (ss / 5.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Prng;
    use std::f64::consts::FRAC_PI_2;

    fn sample() -> LandmarkSet {
        LandmarkSet::new([
            [30.0, 50.0],
            [70.0, 48.0],
            [52.0, 70.0],
            [36.0, 90.0],
            [68.0, 91.0],
        ])
        .unwrap()
    }

    /// Complex-number form of the 2-D Procrustes fit: with centred points
    /// a, b treated as complex numbers, s·e^{iθ} = Σ conj(a)·b / Σ |a|².
    fn complex_fit(src: &LandmarkSet, dst: &LandmarkSet) -> SimilarityTransform {
        let (ms, md) = (src.centroid(), dst.centroid());
        let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
        for (s, d) in src.points().iter().zip(dst.points()) {
            let a = [s[0] - ms[0], s[1] - ms[1]];
            let b = [d[0] - md[0], d[1] - md[1]];
            re += a[0] * b[0] + a[1] * b[1];
            im += a[0] * b[1] - a[1] * b[0];
            norm += a[0] * a[0] + a[1] * a[1];
        }
        let scale = re.hypot(im) / norm;
        let mut xf = SimilarityTransform::from_params(scale, im.atan2(re), [0.0, 0.0]);
        let p = xf.apply(ms);
        xf.translation = [md[0] - p[0], md[1] - p[1]];
        xf
    }

    #[test]
    fn svd2_reconstructs() {
        let mut rng = Prng::new(4);
        for _ in 0..200 {
            let m = [[rng.normal(), rng.normal()], [rng.normal(), rng.normal()]];
            let (u, s, v) = svd2(m);
            assert!(s[0] >= s[1] && s[1] >= 0.0);
            for i in 0..2 {
                for j in 0..2 {
                    let r = u[i][0] * s[0] * v[j][0] + u[i][1] * s[1] * v[j][1];
                    assert!((r - m[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn identity_and_translation() {
        let a = sample();
        let xf = estimate_similarity(&a, &a).unwrap();
        assert!(xf.max_param_diff(&SimilarityTransform::identity()) < 1e-12);
        let b = a
            .map(&SimilarityTransform::from_params(1.0, 0.0, [2.0, 3.0]))
            .unwrap();
        let xf = estimate_similarity(&a, &b).unwrap();
        assert!(xf.max_param_diff(&SimilarityTransform::from_params(1.0, 0.0, [2.0, 3.0])) < 1e-9);
    }

    #[test]
    fn quarter_turn_scale_two() {
        let a = sample();
        let truth = SimilarityTransform::from_params(2.0, FRAC_PI_2, [1.0, -1.0]);
        let xf = estimate_similarity(&a, &a.map(&truth).unwrap()).unwrap();
        assert!(xf.max_param_diff(&truth) < 1e-9, "{xf:?}");
    }

    #[test]
    fn matches_complex_fit_on_noisy_points() {
        let mut rng = Prng::new(9);
        for _ in 0..100 {
            let pts = [0; 5].map(|_| [rng.normal() * 20.0, rng.normal() * 20.0]);
            let noisy = pts.map(|p| [p[1] + rng.normal(), -p[0] + rng.normal()]);
            let (a, b) = (
                LandmarkSet::new(pts).unwrap(),
                LandmarkSet::new(noisy).unwrap(),
            );
            let ours = estimate_similarity(&a, &b).unwrap();
            assert!(ours.max_param_diff(&complex_fit(&a, &b)) < 1e-9);
        }
    }

    #[test]
    fn reflection_guard_keeps_proper_rotation() {
        let a = sample();
        let mirrored = LandmarkSet::new(a.points().map(|p| [-p[0], p[1]])).unwrap();
        let xf = estimate_similarity(&a, &mirrored).unwrap();
        assert!((det2(&xf.rotation) - 1.0).abs() < 1e-12);
        assert!(xf.max_param_diff(&complex_fit(&a, &mirrored)) < 1e-9);
    }

    #[test]
    fn degenerate_sets_rejected() {
        assert!(LandmarkSet::new([[1.0, 1.0]; 5]).is_err());
        assert!(
            LandmarkSet::new([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]]).is_err()
        );
        assert!(LandmarkSet::new([
            [f64::NAN, 0.0],
            [1.0, 0.0],
            [0.0, 1.0],
            [1.0, 1.0],
            [2.0, 0.5]
        ])
        .is_err());
    }

    #[test]
    fn inverse_and_composition() {
        let xf = SimilarityTransform::from_params(1.7, 0.4, [3.0, -2.0]);
        let id = xf.then(&xf.inverse());
        assert!(id.max_param_diff(&SimilarityTransform::identity()) < 1e-12);
        let g = SimilarityTransform::from_params(0.6, -1.1, [0.5, 4.0]);
        let p = [2.5, -7.0];
        let via = g.apply(xf.apply(p));
        let direct = xf.then(&g).apply(p);
        assert!((via[0] - direct[0]).abs() < 1e-12 && (via[1] - direct[1]).abs() < 1e-12);
    }
}
