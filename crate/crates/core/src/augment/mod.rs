//! Geometric augmentation of annotated stripe patches.
//!
//! [`augment_patch`] applies, in order: random translation, a keypoint-jitter
//! homography, a local non-linear distortion, a rotation and a scaling. Every
//! stage resamples the image by inverse mapping and carries the keypoints
//! forward through the same map.

mod homography;
mod library;
mod local;

pub use homography::{fit_homography, reprojection_residual, warp_homography, Homography};
pub use library::{build_library, canonical_seed_patches, load_patch_dir, AnnotatedPatch, LibraryError, MinutiaeLibrary};
pub use local::{warp_local, WarpParams};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::minutiae::{Keypoint, Minutia, MinutiaError, MinutiaKind};
use crate::raster::{Point2, Raster};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("need the same number of source and target points ({src} vs {dst})")]
    PairCountMismatch { src: usize, dst: usize },
    #[error("need at least 4 point pairs, got {0}")]
    TooFewPairs(usize),
    #[error("point configuration is degenerate")]
    DegenerateConfiguration,
    #[error("homography is singular")]
    SingularHomography,
    #[error("invalid warp parameters: {0}")]
    InvalidWarp(&'static str),
    #[error("invalid augmentation config: {0}")]
    InvalidConfig(String),
    #[error("augmentation kept breaking the {kind} annotation ({attempts} attempts): {last}")]
    KindBrokenByAugmentation {
        kind: MinutiaKind,
        attempts: usize,
        last: MinutiaError,
    },
    #[error("seed patch {index}: {source}")]
    InvalidSeed { index: usize, source: MinutiaError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Per-axis translation magnitude range in pixels; the sign is random.
    pub translation_px: [f64; 2],
    pub rotation_deg: [f64; 2],
    pub scale: [f64; 2],
    pub warp_radius_px: f64,
    pub warp_strength: f64,
    /// Maximum distance between the distortion start and target points.
    pub warp_displacement_px: f64,
    /// Per-axis uniform jitter applied to keypoints and patch corners before
    /// fitting the homography stage.
    pub keypoint_jitter_px: f64,
    pub background: f32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            translation_px: [0.0, 15.0],
            rotation_deg: [-15.0, 15.0],
            scale: [0.8, 1.2],
            warp_radius_px: 50.0,
            warp_strength: 200.0,
            warp_displacement_px: 10.0,
            keypoint_jitter_px: 2.0,
            background: 0.0,
        }
    }
}

impl AugmentConfig {
    /// Every stage collapsed to the identity.
    pub fn identity() -> Self {
        Self {
            translation_px: [0.0, 0.0],
            rotation_deg: [0.0, 0.0],
            scale: [1.0, 1.0],
            warp_displacement_px: 0.0,
            keypoint_jitter_px: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: &str| Err(AugmentError::InvalidConfig(m.to_string()));
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.translation_px) || self.translation_px[0] < 0.0 {
            return bad("translation range must be ordered and non-negative");
        }
        if !ordered(self.rotation_deg) {
            return bad("rotation range must be ordered");
        }
        if !ordered(self.scale) || self.scale[0] <= 0.0 {
            return bad("scale range must be ordered and positive");
        }
        if !(self.warp_radius_px > 0.0 && self.warp_strength > 0.0) {
            return bad("warp radius and strength must be positive");
        }
        if !(self.warp_displacement_px >= 0.0 && self.keypoint_jitter_px >= 0.0) {
            return bad("displacement and jitter must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Translation,
    Perspective,
    LocalDistortion,
    Rotation,
    Scale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StageMap {
    Projective(Homography<f64>),
    Local(WarpParams<f64>),
}

impl StageMap {
    /// Where content at `p` ends up after this stage.
    pub fn transport(&self, p: Point2<f64>) -> Point2<f64> {
        match self {
            StageMap::Projective(h) => h.apply(p),
            StageMap::Local(w) => w.transport(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome<T> {
    pub image: Raster<T>,
    pub keypoints: Vec<Point2<f64>>,
    pub stages: Vec<(Stage, StageMap)>,
    /// Rotation applied in the rotation stage, degrees.
    pub rotation_deg: f64,
}

fn uniform(r: &mut Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

fn cast_h<T: Scalar>(h: &Homography<f64>) -> Homography<T> {
    Homography {
        m: h.m.map(|row| row.map(T::lit)),
    }
}

fn apply_stage<T: Scalar>(image: &Raster<T>, map: &StageMap, background: T) -> Result<Raster<T>, AugmentError> {
    match map {
        StageMap::Projective(h) => warp_homography(image, &cast_h::<T>(h), background),
        StageMap::Local(w) => {
            let wt = WarpParams {
                start: w.start.cast(),
                target: w.target.cast(),
                strength: T::lit(w.strength),
                radius: T::lit(w.radius),
            };
            Ok(warp_local(image, &wt, background))
        }
    }
}

/// Runs the five-stage augmentation on a patch with pixel-space keypoints.
pub fn augment_patch<T: Scalar>(
    image: &Raster<T>,
    keypoints: &[Point2<f64>],
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<AugmentOutcome<T>, AugmentError> {
    cfg.validate()?;
    let mut r = rng::rng(seed);
    let (w, h) = (image.width() as f64, image.height() as f64);
    let center = Point2::new((w - 1.0) / 2.0, (h - 1.0) / 2.0);
    let background = T::lit(f64::from(cfg.background));

    let mut img = image.clone();
    let mut kps = keypoints.to_vec();
    let mut stages = Vec::with_capacity(5);
    let mut run = |stage: Stage, map: StageMap, img: &mut Raster<T>, kps: &mut Vec<Point2<f64>>| -> Result<(), AugmentError> {
        *img = apply_stage(img, &map, background)?;
        kps.iter_mut().for_each(|p| *p = map.transport(*p));
        stages.push((stage, map));
        Ok(())
    };

    let signed = |r: &mut Rng| {
        let mag = uniform(r, cfg.translation_px);
        if r.random::<bool>() {
            mag
        } else {
            -mag
        }
    };
    let (tx, ty) = (signed(&mut r), signed(&mut r));
    run(Stage::Translation, StageMap::Projective(Homography::translation(tx, ty)), &mut img, &mut kps)?;

    let corners = [
        Point2::new(0.0, 0.0),
        Point2::new(w - 1.0, 0.0),
        Point2::new(w - 1.0, h - 1.0),
        Point2::new(0.0, h - 1.0),
    ];
    let src: Vec<_> = corners.iter().chain(kps.iter()).copied().collect();
    let j = cfg.keypoint_jitter_px;
    let dst: Vec<_> = src
        .iter()
        .map(|p| Point2::new(p.x + uniform(&mut r, [-j, j]), p.y + uniform(&mut r, [-j, j])))
        .collect();
    let persp = fit_homography(&src, &dst)?;
    run(Stage::Perspective, StageMap::Projective(persp), &mut img, &mut kps)?;

    let start = if kps.is_empty() {
        center
    } else {
        kps[r.random_range(0..kps.len())]
    };
    let dist = uniform(&mut r, [0.0, cfg.warp_displacement_px]);
    let phi = uniform(&mut r, [0.0, std::f64::consts::TAU]);
    let target = Point2::new(start.x + dist * phi.cos(), start.y + dist * phi.sin());
    let local = WarpParams::new(start, target, cfg.warp_strength, cfg.warp_radius_px)?;
    run(Stage::LocalDistortion, StageMap::Local(local), &mut img, &mut kps)?;

    let rotation_deg = uniform(&mut r, cfg.rotation_deg);
    let rot = if rotation_deg == 0.0 {
        Homography::identity()
    } else {
        Homography::rotation_about(center, rotation_deg)
    };
    run(Stage::Rotation, StageMap::Projective(rot), &mut img, &mut kps)?;

    let s = uniform(&mut r, cfg.scale);
    let sc = if s == 1.0 {
        Homography::identity()
    } else {
        Homography::scaling_about(center, s)
    };
    run(Stage::Scale, StageMap::Projective(sc), &mut img, &mut kps)?;

    Ok(AugmentOutcome {
        image: img,
        keypoints: kps,
        stages,
        rotation_deg,
    })
}

/// Augments an annotated patch and re-validates the annotation. The
/// orientation follows the rotation stage; keypoints are re-normalized to the
/// patch.
pub fn augment_minutia(patch: &AnnotatedPatch, cfg: &AugmentConfig, seed: u64) -> Result<AnnotatedPatch, AugmentError> {
    let (sx, sy) = (
        patch.image.width().saturating_sub(1).max(1) as f64,
        patch.image.height().saturating_sub(1).max(1) as f64,
    );
    let px: Vec<_> = patch
        .minutia
        .keypoints
        .iter()
        .map(|k| Point2::new(k.x * sx, k.y * sy))
        .collect();
    let out = augment_patch(&patch.image, &px, cfg, seed)?;
    let keypoints = out.keypoints.iter().map(|p| Keypoint::new(p.x / sx, p.y / sy)).collect();
    let mut angles = patch.minutia.angles;
    angles.orientation += out.rotation_deg;
    let minutia = Minutia::new(patch.minutia.kind, keypoints, angles, patch.minutia.region).map_err(|last| {
        AugmentError::KindBrokenByAugmentation {
            kind: patch.minutia.kind,
            attempts: 1,
            last,
        }
    })?;
    Ok(AnnotatedPatch {
        image: out.image,
        minutia,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minutiae::RegionId;

    fn sample_patch() -> AnnotatedPatch {
        let m = Minutia::canonical(MinutiaKind::Bifurcation, 60.0, RegionId::Mid).unwrap();
        let image = crate::draw::render_minutia(&m, 48, 2.0).unwrap();
        AnnotatedPatch { image, minutia: m }
    }

    #[test]
    fn identity_config_is_identity() {
        let p = sample_patch();
        let out = augment_minutia(&p, &AugmentConfig::identity(), 5).unwrap();
        assert_eq!(out.image, p.image);
        for (a, b) in out.minutia.keypoints.iter().zip(&p.minutia.keypoints) {
            assert!(a.dist(b) < 1e-12);
        }
        assert_eq!(out.minutia.angles, p.minutia.angles);
    }

    #[test]
    fn deterministic_per_seed() {
        let p = sample_patch();
        let cfg = AugmentConfig::default();
        let a = augment_patch(&p.image, &[Point2::new(10.0, 10.0)], &cfg, 77).unwrap();
        let b = augment_patch(&p.image, &[Point2::new(10.0, 10.0)], &cfg, 77).unwrap();
        assert_eq!(a, b);
        let c = augment_patch(&p.image, &[Point2::new(10.0, 10.0)], &cfg, 78).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn rotation_draws_stay_in_range() {
        let img = Raster::filled(8, 8, 0.0f32);
        let cfg = AugmentConfig::default();
        for seed in 0..300 {
            let out = augment_patch(&img, &[], &cfg, seed).unwrap();
            assert!((-15.0..=15.0).contains(&out.rotation_deg));
        }
    }

    #[test]
    fn config_validation() {
        let mut c = AugmentConfig::default();
        c.scale = [1.2, 0.8];
        assert!(c.validate().is_err());
        c = AugmentConfig::default();
        c.translation_px = [-1.0, 3.0];
        assert!(c.validate().is_err());
        assert!(AugmentConfig::identity().validate().is_ok());
    }

    #[test]
    fn stages_recorded_in_order() {
        let p = sample_patch();
        let out = augment_patch(&p.image, &[Point2::new(20.0, 24.0)], &AugmentConfig::default(), 3).unwrap();
        let order: Vec<Stage> = out.stages.iter().map(|s| s.0).collect();
        assert_eq!(
            order,
            [Stage::Translation, Stage::Perspective, Stage::LocalDistortion, Stage::Rotation, Stage::Scale]
        );
    }
}
