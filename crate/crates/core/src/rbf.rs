//! Multiquadric radial basis deformation fields.
//!
//! Each displacement component is `f(q) = Σ w_i φ(‖q − p_i‖)` with
//! `φ(r) = √(r² + ε²)`, interpolating the displacements given at the nodes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};
use crate::raster::{Border, Point2, Raster};
use crate::scalar::Scalar;

/// Refinement rounds applied to the dense solve.
const REFINE_ROUNDS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RbfError {
    #[error("at least one node is required")]
    NoNodes,
    #[error("{nodes} nodes but {displacements} displacements")]
    LengthMismatch { nodes: usize, displacements: usize },
    #[error("epsilon must be positive and finite, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("node or displacement {0} is not finite")]
    NonFinite(usize),
    #[error("interpolation system is singular (duplicate or near-duplicate nodes)")]
    SingularSystem,
    #[error("serialized warp is inconsistent: {0}")]
    Inconsistent(&'static str),
}

impl From<LinalgError> for RbfError {
    fn from(_: LinalgError) -> Self {
        RbfError::SingularSystem
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbfWarp<T> {
    pub epsilon: T,
    pub nodes: Vec<Point2<T>>,
    /// `[w_x, w_y]` per node.
    pub weights: Vec<[T; 2]>,
}

#[inline]
fn kernel<T: Scalar>(r2: T, eps2: T) -> T {
    (r2 + eps2).sqrt()
}

/// Mean distance from each node to its nearest neighbour; 1 for a single node.
pub fn default_epsilon<T: Scalar>(nodes: &[Point2<T>]) -> T {
    if nodes.len() < 2 {
        return T::one();
    }
    let total: T = nodes
        .iter()
        .enumerate()
        .map(|(i, a)| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| a.dist(*b))
                .fold(T::infinity(), T::min)
        })
        .sum();
    let mean = total / T::lit(nodes.len() as f64);
    if mean > T::zero() {
        mean
    } else {
        T::one()
    }
}

impl<T: Scalar> RbfWarp<T> {
    /// Solves the interpolation system for displacements given at `nodes`.
    pub fn fit(nodes: &[Point2<T>], displacements: &[Point2<T>], epsilon: T) -> Result<Self, RbfError> {
        if nodes.is_empty() {
            return Err(RbfError::NoNodes);
        }
        if nodes.len() != displacements.len() {
            return Err(RbfError::LengthMismatch {
                nodes: nodes.len(),
                displacements: displacements.len(),
            });
        }
        if !(epsilon > T::zero() && epsilon.is_finite()) {
            return Err(RbfError::NonPositiveEpsilon(epsilon.as_f64()));
        }
        for (i, (p, d)) in nodes.iter().zip(displacements).enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && d.x.is_finite() && d.y.is_finite()) {
                return Err(RbfError::NonFinite(i));
            }
        }
        let n = nodes.len();
        let eps2 = epsilon * epsilon;
        let phi = Matrix::from_fn(n, n, |i, j| kernel(nodes[i].dist2(nodes[j]), eps2));
        let lu = phi.lu()?;
        let bx: Vec<T> = displacements.iter().map(|d| d.x).collect();
        let by: Vec<T> = displacements.iter().map(|d| d.y).collect();
        let wx = lu.solve(&bx, REFINE_ROUNDS)?;
        let wy = lu.solve(&by, REFINE_ROUNDS)?;
        if wx.iter().chain(&wy).any(|w| !w.is_finite()) {
            return Err(RbfError::SingularSystem);
        }
        let warp = Self {
            epsilon,
            nodes: nodes.to_vec(),
            weights: wx.into_iter().zip(wy).map(|(x, y)| [x, y]).collect(),
        };
        // near-duplicate nodes pass the pivot test but cannot reproduce the data
        let scale = displacements
            .iter()
            .map(|d| d.x.abs().max(d.y.abs()))
            .fold(T::one(), T::max);
        if warp.max_node_residual(displacements) > T::epsilon().sqrt() * scale {
            return Err(RbfError::SingularSystem);
        }
        Ok(warp)
    }

    /// Fits with [`default_epsilon`].
    pub fn fit_default(nodes: &[Point2<T>], displacements: &[Point2<T>]) -> Result<Self, RbfError> {
        Self::fit(nodes, displacements, default_epsilon(nodes))
    }

    /// A warp with no displacement anywhere.
    pub fn zero(nodes: &[Point2<T>], epsilon: T) -> Self {
        Self {
            epsilon,
            nodes: nodes.to_vec(),
            weights: vec![[T::zero(); 2]; nodes.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Displacement `(f_x(q), f_y(q))`.
    pub fn evaluate(&self, q: Point2<T>) -> Point2<T> {
        let eps2 = self.epsilon * self.epsilon;
        let (mut fx, mut fy) = (T::zero(), T::zero());
        for (p, w) in self.nodes.iter().zip(&self.weights) {
            let k = kernel(q.dist2(*p), eps2);
            fx = fx + w[0] * k;
            fy = fy + w[1] * k;
        }
        Point2::new(fx, fy)
    }

    pub fn max_node_residual(&self, displacements: &[Point2<T>]) -> T {
        self.nodes
            .iter()
            .zip(displacements)
            .map(|(p, d)| {
                let f = self.evaluate(*p);
                (f.x - d.x).abs().max((f.y - d.y).abs())
            })
            .fold(T::zero(), T::max)
    }

    /// Pre-compensating resample: output pixel `q` takes the source at `q + f(q)`.
    pub fn apply_inverse(&self, image: &Raster<T>, border: Border<T>) -> Raster<T> {
        image.remap(image.width(), image.height(), border, |x, y| {
            let q = Point2::new(x, y);
            let d = self.evaluate(q);
            Point2::new(q.x + d.x, q.y + d.y)
        })
    }

    /// Forward distortion: output pixel `p` takes the source at `p − f(p)`.
    pub fn apply_forward(&self, image: &Raster<T>, border: Border<T>) -> Raster<T> {
        image.remap(image.width(), image.height(), border, |x, y| {
            let p = Point2::new(x, y);
            let d = self.evaluate(p);
            Point2::new(p.x - d.x, p.y - d.y)
        })
    }

    /// Where a source feature at `s` lands after [`apply_inverse`](Self::apply_inverse):
    /// the `q` with `q + f(q) = s`, by fixed-point iteration.
    pub fn transport_inverse(&self, s: Point2<T>) -> Point2<T> {
        let mut q = s;
        for _ in 0..64 {
            let d = self.evaluate(q);
            let next = Point2::new(s.x - d.x, s.y - d.y);
            let moved = next.dist(q);
            q = next;
            if moved < T::lit(1e-9) {
                break;
            }
        }
        q
    }

    /// Where a source feature at `s` lands after [`apply_forward`](Self::apply_forward).
    pub fn transport_forward(&self, s: Point2<T>) -> Point2<T> {
        let mut p = s;
        for _ in 0..64 {
            let d = self.evaluate(p);
            let next = Point2::new(s.x + d.x, s.y + d.y);
            let moved = next.dist(p);
            p = next;
            if moved < T::lit(1e-9) {
                break;
            }
        }
        p
    }

    pub fn check(&self) -> Result<(), RbfError> {
        if self.nodes.is_empty() {
            return Err(RbfError::NoNodes);
        }
        if self.nodes.len() != self.weights.len() {
            return Err(RbfError::Inconsistent("node and weight counts differ"));
        }
        if !(self.epsilon > T::zero() && self.epsilon.is_finite()) {
            return Err(RbfError::NonPositiveEpsilon(self.epsilon.as_f64()));
        }
        Ok(())
    }
}

impl RbfWarp<f64> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("warp serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, RbfError> {
        let w: Self = serde_json::from_str(s).map_err(|_| RbfError::Inconsistent("malformed JSON"))?;
        w.check()?;
        Ok(w)
    }
}
