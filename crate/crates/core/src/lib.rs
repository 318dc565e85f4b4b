//! Stripe-pattern biometrics toolkit: typed minutiae, the ACE descriptor
//! codec, patch augmentation, RBF warps, virtual coat synthesis, capture
//! simulation, retrieval loss kernels, symbolic matching and evaluation sweeps.
//!
//! Numeric kernels are generic over [`scalar::Scalar`]; the aliases below fix
//! the scalar most callers want.

pub mod ace;
pub mod augment;
pub mod capture;
pub mod config;
pub mod draw;
pub mod harness;
pub mod linalg;
pub mod loss;
pub mod manifest;
pub mod matching;
pub mod minutiae;
pub mod population;
pub mod raster;
pub mod rbf;
pub mod rng;
pub mod scalar;
pub mod synthesis;

pub use scalar::Scalar;

/// Grayscale image with intensities in `[0, 1]`.
pub type GrayImage = raster::Raster<f32>;
pub type Point64 = raster::Point2<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
pub type Homography64 = augment::Homography<f64>;
pub type WarpParams64 = augment::WarpParams<f64>;
pub type Rbf64 = rbf::RbfWarp<f64>;
pub type FeatureBatch64 = loss::FeatureBatch<f64>;
pub type LogitBatch64 = loss::LogitBatch<f64>;
pub type FeatureBatch32 = loss::FeatureBatch<f32>;
