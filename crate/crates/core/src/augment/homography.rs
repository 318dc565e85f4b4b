//! Projective maps: estimation from point pairs and inverse-mapped image warps.

use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::linalg::{least_squares, Matrix};
use crate::raster::{Border, Point2, Raster};
use crate::scalar::Scalar;

/// 3×3 projective matrix acting on `[x, y, 1]ᵀ`, row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography<T> {
    pub m: [[T; 3]; 3],
}

impl<T: Scalar> Homography<T> {
    pub fn identity() -> Self {
        let (o, z) = (T::one(), T::zero());
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    pub fn translation(tx: T, ty: T) -> Self {
        let mut h = Self::identity();
        h.m[0][2] = tx;
        h.m[1][2] = ty;
        h
    }

    /// Rotation by `deg` (from +x towards +y) about `center`.
    pub fn rotation_about(center: Point2<T>, deg: T) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        let rot = Self {
            m: [
                [c, -s, T::zero()],
                [s, c, T::zero()],
                [T::zero(), T::zero(), T::one()],
            ],
        };
        Self::translation(center.x, center.y)
            .then_after(&rot)
            .then_after(&Self::translation(-center.x, -center.y))
    }

    pub fn scaling_about(center: Point2<T>, s: T) -> Self {
        let mut sc = Self::identity();
        sc.m[0][0] = s;
        sc.m[1][1] = s;
        Self::translation(center.x, center.y)
            .then_after(&sc)
            .then_after(&Self::translation(-center.x, -center.y))
    }

    /// Matrix product `self · other`: applies `other` first.
    pub fn then_after(&self, other: &Self) -> Self {
        let mut out = [[T::zero(); 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).fold(T::zero(), |acc, k| acc + self.m[i][k] * other.m[k][j]);
            }
        }
        Self { m: out }
    }

    pub fn apply(&self, p: Point2<T>) -> Point2<T> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        Point2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        )
    }

    pub fn determinant(&self) -> T {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    fn max_abs(&self) -> T {
        self.m.iter().flatten().fold(T::zero(), |a, &v| a.max(v.abs()))
    }

    pub fn is_invertible(&self) -> bool {
        let det = self.determinant();
        let scale = self.max_abs();
        det.is_finite() && det.abs() > T::epsilon() * T::lit(16.0) * scale * scale * scale
    }

    /// Inverse via the adjugate, scaled so the bottom-right entry is 1 when it
    /// is not (near) zero.
    pub fn inverse(&self) -> Option<Self> {
        if !self.is_invertible() {
            return None;
        }
        let m = &self.m;
        let det = self.determinant();
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let inv = [
            [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
            [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
            [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
        ];
        let mut out = Self {
            m: inv.map(|row| row.map(|v| v / det)),
        };
        out.normalize();
        Some(out)
    }

    /// Scales so that `m[2][2] == 1` unless that entry is negligible.
    pub fn normalize(&mut self) {
        let s = self.m[2][2];
        if s.abs() > T::epsilon() * self.max_abs() && s != T::one() {
            for v in self.m.iter_mut().flatten() {
                *v = *v / s;
            }
        }
    }
}

fn collinear<T: Scalar>(a: Point2<T>, b: Point2<T>, c: Point2<T>) -> bool {
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    let scale = a.dist2(b).max(a.dist2(c)).max(b.dist2(c));
    cross.abs() <= T::lit(1e-10) * scale || scale == T::zero()
}

fn any_three_collinear<T: Scalar>(pts: &[Point2<T>]) -> bool {
    let n = pts.len();
    (0..n).any(|i| (i + 1..n).any(|j| (j + 1..n).any(|k| collinear(pts[i], pts[j], pts[k]))))
}

/// Similarity transform moving the centroid to the origin with mean distance √2.
fn normalizer<T: Scalar>(pts: &[Point2<T>]) -> Option<Homography<T>> {
    let n = T::lit(pts.len() as f64);
    let cx = pts.iter().map(|p| p.x).sum::<T>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<T>() / n;
    let c = Point2::new(cx, cy);
    let mean = pts.iter().map(|p| p.dist(c)).sum::<T>() / n;
    if !(mean > T::zero()) {
        return None;
    }
    let s = T::lit(std::f64::consts::SQRT_2) / mean;
    let mut h = Homography::identity();
    h.m[0][0] = s;
    h.m[1][1] = s;
    h.m[0][2] = -s * cx;
    h.m[1][2] = -s * cy;
    Some(h)
}

/// Estimates `H` with `H·[x, y, 1]ᵀ ∝ [x', y', 1]ᵀ` for every pair.
///
/// With exactly four pairs the fit is exact; with more it is the algebraic
/// least-squares solution on Hartley-normalized coordinates.
pub fn fit_homography<T: Scalar>(src: &[Point2<T>], dst: &[Point2<T>]) -> Result<Homography<T>, AugmentError> {
    if src.len() != dst.len() {
        return Err(AugmentError::PairCountMismatch {
            src: src.len(),
            dst: dst.len(),
        });
    }
    if src.len() < 4 {
        return Err(AugmentError::TooFewPairs(src.len()));
    }
    if src.iter().chain(dst).any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(AugmentError::DegenerateConfiguration);
    }
    if src == dst {
        return Ok(Homography::identity());
    }
    if src.len() == 4 && (any_three_collinear(src) || any_three_collinear(dst)) {
        return Err(AugmentError::DegenerateConfiguration);
    }
    let ns = normalizer(src).ok_or(AugmentError::DegenerateConfiguration)?;
    let nd = normalizer(dst).ok_or(AugmentError::DegenerateConfiguration)?;
    let n = src.len();
    let mut a = Matrix::zeros(2 * n, 8);
    let mut b = vec![T::zero(); 2 * n];
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let p = ns.apply(*s);
        let q = nd.apply(*d);
        let (x, y, u, v) = (p.x, p.y, q.x, q.y);
        let r0 = 2 * i;
        a[(r0, 0)] = x;
        a[(r0, 1)] = y;
        a[(r0, 2)] = T::one();
        a[(r0, 6)] = -u * x;
        a[(r0, 7)] = -u * y;
        b[r0] = u;
        let r1 = r0 + 1;
        a[(r1, 3)] = x;
        a[(r1, 4)] = y;
        a[(r1, 5)] = T::one();
        a[(r1, 6)] = -v * x;
        a[(r1, 7)] = -v * y;
        b[r1] = v;
    }
    let h = least_squares(&a, &b, T::lit(1e-10)).map_err(|_| AugmentError::DegenerateConfiguration)?;
    let hn = Homography {
        m: [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], T::one()]],
    };
    let nd_inv = nd.inverse().ok_or(AugmentError::DegenerateConfiguration)?;
    let mut out = nd_inv.then_after(&hn).then_after(&ns);
    out.normalize();
    if !out.is_invertible() {
        return Err(AugmentError::DegenerateConfiguration);
    }
    Ok(out)
}

/// Largest Euclidean distance between `H·src_i` and `dst_i`.
pub fn reprojection_residual<T: Scalar>(h: &Homography<T>, src: &[Point2<T>], dst: &[Point2<T>]) -> T {
    src.iter()
        .zip(dst)
        .map(|(s, d)| h.apply(*s).dist(*d))
        .fold(T::zero(), T::max)
}

/// Inverse-mapped warp: output pixel `p'` samples the source at `H⁻¹ p'`.
pub fn warp_homography<T: Scalar>(
    image: &Raster<T>,
    h: &Homography<T>,
    background: T,
) -> Result<Raster<T>, AugmentError> {
    let inv = h.inverse().ok_or(AugmentError::SingularHomography)?;
    Ok(image.remap(image.width(), image.height(), Border::Constant(background), |x, y| {
        inv.apply(Point2::new(x, y))
    }))
}
