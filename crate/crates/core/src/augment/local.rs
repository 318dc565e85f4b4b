//! Local non-linear distortion around a start point, dragged towards a target.
//!
//! For an output pixel `p` within `radius` of `start`:
//!
//! ```text
//! k1  = ‖p − start‖
//! ρ   = ((r² − ‖p − start‖²) / (r² − ‖p − start‖² + k0·‖target − start‖²))²
//! src = p − ρ·(target − start)·(1 − k1/r)
//! ```
//!
//! and `src = p` elsewhere. The output samples the input at `src`.

use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::raster::{Border, Point2, Raster};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarpParams<T> {
    pub start: Point2<T>,
    pub target: Point2<T>,
    /// `k0`
    pub strength: T,
    /// `r`, pixels
    pub radius: T,
}

impl<T: Scalar> WarpParams<T> {
    pub fn new(start: Point2<T>, target: Point2<T>, strength: T, radius: T) -> Result<Self, AugmentError> {
        if !(strength > T::zero() && strength.is_finite()) {
            return Err(AugmentError::InvalidWarp("strength must be positive"));
        }
        if !(radius > T::zero() && radius.is_finite()) {
            return Err(AugmentError::InvalidWarp("radius must be positive"));
        }
        Ok(Self {
            start,
            target,
            strength,
            radius,
        })
    }

    /// The falloff weight `ρ`, clamped to zero outside the radius.
    pub fn rho(&self, p: Point2<T>) -> T {
        let r2 = self.radius * self.radius;
        let inner = r2 - p.dist2(self.start);
        if inner <= T::zero() {
            return T::zero();
        }
        let pull = self.strength * self.target.dist2(self.start);
        let q = inner / (inner + pull);
        q * q
    }

    /// Source position sampled by output pixel `p`.
    pub fn source_point(&self, p: Point2<T>) -> Point2<T> {
        let rho = self.rho(p);
        if rho == T::zero() {
            return p;
        }
        let k1 = (p.x - self.start.x).hypot(p.y - self.start.y);
        let f = rho * (T::one() - k1 / self.radius);
        Point2::new(
            p.x - f * (self.target.x - self.start.x),
            p.y - f * (self.target.y - self.start.y),
        )
    }

    /// Where content at source position `q` lands in the output: solves
    /// `source_point(p) = q` by fixed-point iteration.
    pub fn transport(&self, q: Point2<T>) -> Point2<T> {
        let tol = T::lit(1e-13) * (T::one() + q.x.abs() + q.y.abs());
        let mut p = q;
        for _ in 0..500 {
            let s = self.source_point(p);
            let next = Point2::new(p.x + (q.x - s.x), p.y + (q.y - s.y));
            let step = next.dist(p);
            p = next;
            if step <= tol {
                break;
            }
        }
        p
    }
}

pub fn warp_local<T: Scalar>(image: &Raster<T>, params: &WarpParams<T>, background: T) -> Raster<T> {
    image.remap(image.width(), image.height(), Border::Constant(background), |x, y| {
        params.source_point(Point2::new(x, y))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> WarpParams<f64> {
        WarpParams::new(Point2::new(100.0, 100.0), Point2::new(110.0, 100.0), 200.0, 50.0).unwrap()
    }

    #[test]
    fn boundary_is_fixed() {
        let w = reference();
        for p in [Point2::new(150.0, 100.0), Point2::new(100.0, 50.0), Point2::new(130.0, 140.0)] {
            assert_eq!(w.source_point(p), p);
        }
    }

    #[test]
    fn centre_value_matches_hand_evaluation() {
        // rho = (2500 / (2500 + 200·100))² = 1/81
        let w = reference();
        assert!((w.rho(w.start) - 1.0 / 81.0).abs() < 1e-15);
        let s = w.source_point(w.start);
        assert!((s.x - (100.0 - 10.0 / 81.0)).abs() < 1e-12);
        assert_eq!(s.y, 100.0);
    }

    #[test]
    fn strong_k0_is_near_identity() {
        let img = Raster::from_fn(32, 32, |x, y| (x as f64 * 0.1).sin() + (y as f64 * 0.07).cos());
        let w = WarpParams::new(Point2::new(16.0, 16.0), Point2::new(20.0, 16.0), 1e12, 10.0).unwrap();
        let out = warp_local(&img, &w, 0.0);
        for (a, b) in out.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn coincident_points_give_identity() {
        let img = Raster::from_fn(16, 16, |x, y| (x * y) as f32);
        let w = WarpParams::new(Point2::new(8.0, 8.0), Point2::new(8.0, 8.0), 200.0, 50.0).unwrap();
        assert_eq!(warp_local(&img, &w, 0.0), img);
    }

    #[test]
    fn transport_inverts_source_map() {
        let w = WarpParams::new(Point2::new(20.0, 20.0), Point2::new(35.0, 12.0), 0.5, 30.0).unwrap();
        for q in [Point2::new(20.0, 20.0), Point2::new(25.0, 18.0), Point2::new(5.0, 30.0)] {
            let p = w.transport(q);
            assert!(w.source_point(p).dist(q) < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_params() {
        let p = Point2::new(0.0, 0.0);
        assert!(WarpParams::new(p, p, 0.0, 1.0).is_err());
        assert!(WarpParams::new(p, p, 1.0, -1.0).is_err());
    }
}
