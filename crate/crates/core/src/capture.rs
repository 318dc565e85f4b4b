//! Camera-trap style observations of a coat texture: a sheared view window,
//! Lanczos downsampling, then occasional Gaussian noise and motion blur.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ace::{AceError, AceSequence};
use crate::minutiae::{Minutia, MinutiaKind};
use crate::raster::{Border, Raster};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaptureError {
    #[error("texture {width}x{height} is smaller than the {crop_w}x{crop_h} view window")]
    TextureTooSmall {
        width: usize,
        height: usize,
        crop_w: usize,
        crop_h: usize,
    },
    #[error("invalid capture config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaptureConfig {
    pub downsample: f64,
    pub noise_sigma: f64,
    pub noise_probability: f64,
    pub blur_radius: usize,
    pub blur_probability: f64,
    /// Smallest view window, `[width, height]`.
    pub crop_min: [usize; 2],
    /// Largest view window, `[width, height]`.
    pub crop_max: [usize; 2],
    pub max_shear: f64,
    pub background: f32,
    pub views_per_id: usize,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            downsample: 0.7,
            noise_sigma: 0.07,
            noise_probability: 0.2,
            blur_radius: 3,
            blur_probability: 0.1,
            crop_min: [301, 156],
            crop_max: [413, 195],
            max_shear: 0.15,
            background: 0.0,
            views_per_id: 12,
        }
    }
}

impl CaptureConfig {
    /// Crop only: no shear, no rescaling, no perturbations.
    pub fn pure_crop() -> Self {
        Self {
            downsample: 1.0,
            noise_probability: 0.0,
            blur_probability: 0.0,
            max_shear: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CaptureError> {
        let bad = |m: String| Err(CaptureError::InvalidConfig(m));
        for (name, p) in [
            ("noise_probability", self.noise_probability),
            ("blur_probability", self.blur_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if !(self.downsample > 0.0 && self.downsample <= 1.0) {
            return bad(format!("downsample = {} outside (0, 1]", self.downsample));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma = {}", self.noise_sigma));
        }
        if !(self.max_shear >= 0.0 && self.max_shear < 1.0) {
            return bad(format!("max_shear = {} outside [0, 1)", self.max_shear));
        }
        if self.crop_min[0] == 0 || self.crop_min[1] == 0 {
            return bad("crop_min must be positive".into());
        }
        if self.crop_min[0] > self.crop_max[0] || self.crop_min[1] > self.crop_max[1] {
            return bad(format!("crop_min {:?} exceeds crop_max {:?}", self.crop_min, self.crop_max));
        }
        Ok(())
    }
}

/// The random draws behind one capture, enough to re-render it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureRecord {
    pub view_index: usize,
    pub seed: u64,
    pub crop_x: usize,
    pub crop_y: usize,
    pub crop_w: usize,
    pub crop_h: usize,
    pub shear: f64,
    pub noise: bool,
    pub blur: bool,
    pub out_w: usize,
    pub out_h: usize,
}

/// Draws the view window and perturbation flags for a texture of the given size.
pub fn draw_capture(
    width: usize,
    height: usize,
    cfg: &CaptureConfig,
    view_index: usize,
    seed: u64,
) -> Result<CaptureRecord, CaptureError> {
    cfg.validate()?;
    let mut r = rng::rng_for(seed, view_index as u64);
    // one draw sets both sides so the window keeps a camera-like aspect
    let t: f64 = r.random();
    let lerp = |lo: usize, hi: usize| lo + ((hi - lo) as f64 * t).round() as usize;
    let crop_w = lerp(cfg.crop_min[0], cfg.crop_max[0]);
    let crop_h = lerp(cfg.crop_min[1], cfg.crop_max[1]);
    if crop_w > width || crop_h > height {
        return Err(CaptureError::TextureTooSmall {
            width,
            height,
            crop_w,
            crop_h,
        });
    }
    let crop_x = r.random_range(0..=width - crop_w);
    let crop_y = r.random_range(0..=height - crop_h);
    let shear = if cfg.max_shear > 0.0 {
        r.random_range(-cfg.max_shear..=cfg.max_shear)
    } else {
        0.0
    };
    let noise = r.random_bool(cfg.noise_probability);
    let blur = r.random_bool(cfg.blur_probability);
    let (out_w, out_h) = scaled_dims(crop_w, crop_h, cfg.downsample);
    Ok(CaptureRecord {
        view_index,
        seed,
        crop_x,
        crop_y,
        crop_w,
        crop_h,
        shear,
        noise,
        blur,
        out_w,
        out_h,
    })
}

/// `⌊factor·w⌋ × ⌊factor·h⌋`, at least 1×1.
pub fn scaled_dims(w: usize, h: usize, factor: f64) -> (usize, usize) {
    // the nudge keeps exact products such as 0.7·310 from flooring one short
    let f = |v: usize| (((v as f64) * factor + 1e-9).floor() as usize).max(1);
    (f(w), f(h))
}

/// Renders a previously drawn capture.
pub fn render_capture(texture: &Raster<f32>, rec: &CaptureRecord, cfg: &CaptureConfig) -> Raster<f32> {
    let cy = rec.crop_h as f64 / 2.0;
    let (x0, y0, shear) = (rec.crop_x as f64, rec.crop_y as f64, rec.shear);
    let mut img = texture.remap(rec.crop_w, rec.crop_h, Border::Constant(cfg.background), |x, y| {
        let (x, y) = (x as f64, y as f64);
        let sx = x0 + x + shear * (y - cy);
        crate::raster::Point2::new(sx as f32, (y0 + y) as f32)
    });
    if (rec.out_w, rec.out_h) != (rec.crop_w, rec.crop_h) {
        img = lanczos_resize(&img, rec.out_w, rec.out_h);
    }
    if rec.noise && cfg.noise_sigma > 0.0 {
        add_noise(&mut img, cfg.noise_sigma, rng::derive(rec.seed, 0x6e6f697365 ^ rec.view_index as u64));
    }
    if rec.blur && cfg.blur_radius > 0 {
        img = motion_blur(&img, cfg.blur_radius);
    }
    img
}

/// Draws and renders one view.
pub fn capture(
    texture: &Raster<f32>,
    cfg: &CaptureConfig,
    view_index: usize,
    seed: u64,
) -> Result<(Raster<f32>, CaptureRecord), CaptureError> {
    let rec = draw_capture(texture.width(), texture.height(), cfg, view_index, seed)?;
    Ok((render_capture(texture, &rec, cfg), rec))
}

pub fn lanczos_resize(img: &Raster<f32>, width: usize, height: usize) -> Raster<f32> {
    let buf = image::ImageBuffer::<image::Luma<f32>, Vec<f32>>::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.pixels().to_vec(),
    )
    .expect("buffer sized from raster");
    let out = image::imageops::resize(&buf, width as u32, height as u32, image::imageops::FilterType::Lanczos3);
    Raster::from_vec(width, height, out.into_raw()).expect("resize honours dimensions")
}

/// Adds N(0, sigma²) per pixel and clamps to [0, 1].
pub fn add_noise(img: &mut Raster<f32>, sigma: f64, seed: u64) {
    let mut r = rng::rng(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    for v in img.pixels_mut() {
        *v = (*v as f64 + normal.sample(&mut r)).clamp(0.0, 1.0) as f32;
    }
}

/// Horizontal box blur over `2·radius + 1` taps with edge clamping.
pub fn motion_blur(img: &Raster<f32>, radius: usize) -> Raster<f32> {
    let w = img.width();
    let taps = (2 * radius + 1) as f32;
    Raster::from_fn(w, img.height(), |x, y| {
        let sum: f32 = (0..=2 * radius)
            .map(|k| {
                let xs = (x + k).saturating_sub(radius).min(w - 1);
                img.get(xs, y)
            })
            .sum();
        sum / taps
    })
}

/// Demotion probability for an image of the given quality in [0, 1].
pub fn demotion_probability(quality: f64, susceptibility: f64) -> f64 {
    ((1.0 - quality) * susceptibility).clamp(0.0, 1.0)
}

/// Demotes each junction-type minutia with probability `p`: a bifurcation or
/// convergence becomes one ridge, an enclosure becomes two. The first
/// replacement keeps the ridge count; the second follows with none.
pub fn degrade_visibility(seq: &AceSequence, p: f64, seed: u64) -> Result<AceSequence, AceError> {
    seq.validate()?;
    let mut r = rng::rng(seed);
    let p = p.clamp(0.0, 1.0);
    let mut minutiae = Vec::with_capacity(seq.len() + 4);
    let mut ridge_counts = Vec::with_capacity(seq.len() + 4);
    let mut anchor = 0;
    for (i, (m, &rc)) in seq.minutiae.iter().zip(&seq.ridge_counts).enumerate() {
        if i == seq.anchor_index {
            anchor = minutiae.len();
        }
        if !m.kind.is_junction() || !r.random_bool(p) {
            minutiae.push(m.clone());
            ridge_counts.push(rc);
            continue;
        }
        let ridge = demoted_ridge(m);
        let copies = if m.kind == MinutiaKind::Enclosure { 2 } else { 1 };
        for c in 0..copies {
            minutiae.push(ridge.clone());
            ridge_counts.push(if c == 0 { rc } else { 0 });
        }
    }
    AceSequence::new(minutiae, ridge_counts, anchor, seq.side)
}

fn demoted_ridge(m: &Minutia) -> Minutia {
    // keep the stem: junction to the far end of the primary stripe
    let keypoints = match m.kind {
        MinutiaKind::Enclosure => vec![m.keypoints[0], m.keypoints[4]],
        _ => vec![m.keypoints[1], m.keypoints[0]],
    };
    Minutia::new(
        MinutiaKind::Ridge,
        keypoints,
        crate::minutiae::Angles {
            orientation: m.angles.orientation,
            branch: None,
            convergence: None,
        },
        m.region,
    )
    .expect("a junction's keypoints and orientation form a valid ridge")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ace::Side;
    use crate::minutiae::RegionId;

    fn texture() -> Raster<f32> {
        Raster::from_fn(600, 300, |x, y| ((x * 31 + y * 17) % 97) as f32 / 96.0)
    }

    #[test]
    fn pure_crop_copies_the_window() {
        let t = texture();
        let (img, rec) = capture(&t, &CaptureConfig::pure_crop(), 3, 11).unwrap();
        assert!(!rec.noise && !rec.blur);
        assert_eq!(img, t.crop(rec.crop_x, rec.crop_y, rec.crop_w, rec.crop_h).unwrap());
    }

    #[test]
    fn output_is_floor_of_scaled_crop() {
        let t = texture();
        for v in 0..20 {
            let (img, rec) = capture(&t, &CaptureConfig::default(), v, 2).unwrap();
            assert!((301..=413).contains(&rec.crop_w) && (156..=195).contains(&rec.crop_h));
            assert_eq!(img.width(), (0.7 * rec.crop_w as f64 + 1e-9).floor() as usize);
            assert_eq!(img.height(), (0.7 * rec.crop_h as f64 + 1e-9).floor() as usize);
        }
        assert_eq!(scaled_dims(310, 160, 0.7), (217, 112));
    }

    #[test]
    fn capture_is_deterministic() {
        let t = texture();
        let cfg = CaptureConfig {
            noise_probability: 1.0,
            blur_probability: 1.0,
            ..CaptureConfig::default()
        };
        assert_eq!(capture(&t, &cfg, 1, 5).unwrap(), capture(&t, &cfg, 1, 5).unwrap());
        assert_ne!(capture(&t, &cfg, 1, 5).unwrap().1, capture(&t, &cfg, 2, 5).unwrap().1);
    }

    #[test]
    fn small_texture_is_rejected() {
        let t = Raster::filled(200, 100, 0.0f32);
        assert!(matches!(
            capture(&t, &CaptureConfig::default(), 0, 0),
            Err(CaptureError::TextureTooSmall { .. })
        ));
    }

    #[test]
    fn blur_of_constant_is_constant() {
        let img = Raster::filled(9, 3, 0.25f32);
        assert_eq!(motion_blur(&img, 3), img);
        let mut spike = Raster::filled(9, 1, 0.0f32);
        spike.set(4, 0, 7.0);
        let b = motion_blur(&spike, 3);
        for x in 1..=7 {
            assert!((b.get(x, 0) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_probability_rejected() {
        let cfg = CaptureConfig {
            noise_probability: 1.5,
            ..CaptureConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    fn seq(kinds: &[MinutiaKind]) -> AceSequence {
        let ms = kinds
            .iter()
            .map(|&k| {
                let o = if k == MinutiaKind::Convergence { 200.0 } else { 20.0 };
                Minutia::canonical(k, o, RegionId::Mid).unwrap()
            })
            .collect();
        AceSequence::new(ms, vec![1; kinds.len()], 0, Side::Left).unwrap()
    }

    #[test]
    fn zero_probability_is_identity() {
        use MinutiaKind::*;
        let s = seq(&[Ridge, Bifurcation, Convergence, Enclosure]);
        assert_eq!(degrade_visibility(&s, 0.0, 1).unwrap(), s);
    }

    #[test]
    fn enclosure_becomes_two_ridges() {
        let s = seq(&[MinutiaKind::Enclosure]);
        let d = degrade_visibility(&s, 1.0, 1).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.minutiae.iter().all(|m| m.kind == MinutiaKind::Ridge));
        assert_eq!(d.ridge_counts, vec![1, 0]);
    }

    #[test]
    fn full_demotion_counts() {
        use MinutiaKind::*;
        let s = seq(&[Ridge, Bifurcation, Convergence, Enclosure, Ridge]);
        let d = degrade_visibility(&s, 1.0, 3).unwrap();
        assert_eq!(d.len(), 6);
        assert!(d.minutiae.iter().all(|m| m.kind == Ridge));
    }

    #[test]
    fn anchor_follows_its_minutia() {
        use MinutiaKind::*;
        let mut s = seq(&[Enclosure, Bifurcation, Ridge]);
        s.anchor_index = 2;
        let d = degrade_visibility(&s, 1.0, 0).unwrap();
        assert_eq!(d.anchor_index, 3);
    }

    #[test]
    fn quality_maps_to_probability() {
        assert_eq!(demotion_probability(1.0, 0.8), 0.0);
        assert!((demotion_probability(0.25, 0.8) - 0.6).abs() < 1e-12);
    }
}
