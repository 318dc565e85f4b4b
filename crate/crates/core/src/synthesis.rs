//! Virtual coat assembly: sequence sampling from region statistics, stamping of
//! library patches along a two-lane scan path, and population planning.
//!
//! The canvas is split into three column bands (Fore, Mid, Hind from the left)
//! and two horizontal lanes. The scan path runs along the upper lane from left
//! to right, then back along the lower lane from right to left. Each minutia is
//! preceded on the path by as many plain vertical stripes as its ridge count.

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ace::{AceError, AceSequence, AceToken, Side};
use crate::augment::MinutiaeLibrary;
use crate::draw::stroke_polyline;
use crate::minutiae::{Keypoint, Minutia, MinutiaError, MinutiaKind, RegionId};
use crate::raster::{Border, Point2, Raster};
use crate::rng::{self, Rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("no library patch for {kind:?} in region {region:?}")]
    LibraryGap { kind: MinutiaKind, region: RegionId },
    #[error("sequence does not fit region {region:?} on lane {lane} at the configured spacing")]
    CanvasOverflow { region: RegionId, lane: usize },
    #[error("invalid region statistics: {0}")]
    InvalidStats(String),
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("at least one identity is required")]
    NoIdentities,
    #[error("could not draw a unique sequence after {0} attempts")]
    UniquenessExhausted(usize),
    #[error(transparent)]
    Ace(#[from] AceError),
    #[error(transparent)]
    Minutia(#[from] MinutiaError),
}

/// Per-region kind probabilities (R, B, C, E) and inclusive minutia count ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionStats {
    pub kind_probs: [[f64; 4]; 3],
    pub count_range: [[u32; 2]; 3],
}

impl Default for RegionStats {
    /// Placeholder table: ridges dominate, junction kinds are rarer.
    fn default() -> Self {
        Self {
            kind_probs: [
                [0.70, 0.12, 0.10, 0.08],
                [0.64, 0.14, 0.12, 0.10],
                [0.72, 0.12, 0.10, 0.06],
            ],
            count_range: [[3, 6]; 3],
        }
    }
}

impl RegionStats {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        for (r, probs) in self.kind_probs.iter().enumerate() {
            if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(SynthesisError::InvalidStats(format!("region {r} has a negative probability")));
            }
            let s: f64 = probs.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(SynthesisError::InvalidStats(format!("region {r} probabilities sum to {s}")));
            }
        }
        for (r, [lo, hi]) in self.count_range.iter().enumerate() {
            if lo > hi {
                return Err(SynthesisError::InvalidStats(format!("region {r} count range {lo}..={hi}")));
            }
        }
        if self.count_range.iter().all(|[_, hi]| *hi == 0) {
            return Err(SynthesisError::InvalidStats("every region has zero minutiae".into()));
        }
        Ok(())
    }

    pub fn probs(&self, region: RegionId) -> &[f64; 4] {
        &self.kind_probs[region.index()]
    }
}

/// Ridge count law: geometric with success probability `p` on `0..=max`,
/// renormalized over the truncated support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RidgeCountLaw {
    pub p: f64,
    pub max: u32,
}

impl Default for RidgeCountLaw {
    fn default() -> Self {
        Self { p: 0.5, max: 6 }
    }
}

impl RidgeCountLaw {
    pub fn pmf(&self, k: u32) -> f64 {
        if k > self.max {
            return 0.0;
        }
        let q = 1.0 - self.p;
        let mass = 1.0 - q.powi(self.max as i32 + 1);
        self.p * q.powi(k as i32) / mass
    }

    pub fn sample(&self, rng: &mut Rng) -> u32 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for k in 0..self.max {
            acc += self.pmf(k);
            if u < acc {
                return k;
            }
        }
        self.max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub canvas_width: usize,
    pub canvas_height: usize,
    pub patch_size: usize,
    /// Extra gap added to the patch width between consecutive path items.
    pub patch_gap: usize,
    pub stripe_pitch: usize,
    pub stripe_half_width: f64,
    pub ridge_counts: RidgeCountLaw,
    pub id_prefix: String,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            canvas_width: 1024,
            canvas_height: 512,
            patch_size: 48,
            patch_gap: 2,
            stripe_pitch: 10,
            stripe_half_width: 1.5,
            ridge_counts: RidgeCountLaw::default(),
            id_prefix: "vt".into(),
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |m: &str| Err(SynthesisError::InvalidConfig(m.into()));
        if self.patch_size < 8 {
            return bad("patch_size must be at least 8");
        }
        if self.canvas_width < 3 * (self.patch_size + self.patch_gap) || self.canvas_height < 2 * self.patch_size {
            return bad("canvas too small for one patch per region and lane");
        }
        if self.stripe_pitch < 3 {
            return bad("stripe_pitch must be at least 3");
        }
        if !(self.stripe_half_width > 0.0 && 2.0 * self.stripe_half_width < self.stripe_pitch as f64) {
            return bad("stripe_half_width must be positive and below half the pitch");
        }
        if !(self.ridge_counts.p > 0.0 && self.ridge_counts.p <= 1.0) {
            return bad("ridge count p must lie in (0, 1]");
        }
        Ok(())
    }

    fn band(&self, region: RegionId) -> (f64, f64) {
        let w = self.canvas_width as f64 / 3.0;
        let i = region.index() as f64;
        (i * w, (i + 1.0) * w)
    }

    fn region_at(&self, x: f64) -> RegionId {
        let w = self.canvas_width as f64 / 3.0;
        RegionId::from_index(((x / w).floor().max(0.0) as usize).min(2)).expect("index below 3")
    }

    fn lane_bounds(&self, lane: usize) -> (f64, f64) {
        let h = self.canvas_height as f64 / 2.0;
        (lane as f64 * h, (lane as f64 + 1.0) * h)
    }

    fn patch_step(&self) -> f64 {
        (self.patch_size + self.patch_gap) as f64
    }
}

/// Draws a sequence: region counts in range, kinds i.i.d. per region, uniform
/// orientation within each kind's range, ridge counts from the configured law.
/// Each region's minutiae are split between the outbound and return lanes.
pub fn sample_sequence(
    stats: &RegionStats,
    law: &RidgeCountLaw,
    side: Side,
    seed: u64,
) -> Result<AceSequence, SynthesisError> {
    stats.validate()?;
    let mut rng = rng::rng(seed);
    let mut outbound: Vec<Vec<MinutiaKind>> = Vec::new();
    let mut inbound: Vec<Vec<MinutiaKind>> = Vec::new();
    for region in RegionId::ALL {
        let [lo, hi] = stats.count_range[region.index()];
        let n = rng.random_range(lo..=hi) as usize;
        let kinds: Vec<MinutiaKind> = (0..n).map(|_| draw_kind(stats.probs(region), &mut rng)).collect();
        let split = n.div_ceil(2);
        outbound.push(kinds[..split].to_vec());
        inbound.push(kinds[split..].to_vec());
    }
    let mut order: Vec<(MinutiaKind, RegionId)> = Vec::new();
    for region in RegionId::ALL {
        order.extend(outbound[region.index()].iter().map(|&k| (k, region)));
    }
    for region in RegionId::ALL.iter().rev() {
        order.extend(inbound[region.index()].iter().map(|&k| (k, *region)));
    }
    if order.is_empty() {
        // every range allowed zero and every draw hit it
        order.push((draw_kind(stats.probs(RegionId::Mid), &mut rng), RegionId::Mid));
    }
    let mut minutiae = Vec::with_capacity(order.len());
    let mut ridge_counts = Vec::with_capacity(order.len());
    for (kind, region) in order {
        let (lo, hi) = kind.orientation_range();
        let o = rng.random_range(lo..hi);
        minutiae.push(Minutia::canonical(kind, o, region)?);
        ridge_counts.push(law.sample(&mut rng));
    }
    Ok(AceSequence::new(minutiae, ridge_counts, 0, side)?)
}

fn draw_kind(probs: &[f64; 4], rng: &mut Rng) -> MinutiaKind {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return MinutiaKind::ALL[i];
        }
    }
    // rounding slack: last kind with positive mass
    let last = probs.iter().rposition(|p| *p > 0.0).unwrap_or(0);
    MinutiaKind::ALL[last]
}

/// A stamped library patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Keypoints in texture-normalized coordinates; orientation in pixel space.
    pub minutia: Minutia,
    /// Patch centre in pixels.
    pub anchor_px: Point2<f64>,
    pub lane: usize,
}

/// A plain vertical stripe crossing one lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlainStripe {
    pub x: f64,
    pub lane: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoatTexture {
    pub raster: Raster<f32>,
    pub placements: Vec<Placement>,
    pub stripes: Vec<PlainStripe>,
    /// Placement the descriptor starts from.
    pub anchor_placement: usize,
    pub config: SynthesisConfig,
}

impl CoatTexture {
    pub fn region_of(&self, p: &Placement) -> RegionId {
        self.config.region_at(p.anchor_px.x)
    }
}

/// Rotation start that puts the sequence in lane order: half of the lowest
/// region run first, then the rise, the peak, the fall, and the rest of the
/// lowest run.
fn lane_layout(seq: &AceSequence) -> (usize, Vec<usize>) {
    let n = seq.len();
    let r: Vec<usize> = seq.minutiae.iter().map(|m| m.region.index()).collect();
    let lo = *r.iter().min().expect("non-empty");
    let hi = *r.iter().max().expect("non-empty");
    if lo == hi {
        let lanes = (0..n).map(|i| usize::from(i >= n.div_ceil(2))).collect();
        return (0, lanes);
    }
    // start of the cyclic run of the lowest region
    let run_start = (0..n)
        .find(|&i| r[i] == lo && r[(i + n - 1) % n] != lo)
        .expect("a lowest run exists when regions differ");
    let run_len = (0..n).take_while(|&k| r[(run_start + k) % n] == lo).count();
    let start = (run_start + run_len / 2) % n;
    let lin: Vec<usize> = (0..n).map(|k| r[(start + k) % n]).collect();
    let peak_first = lin.iter().position(|&x| x == hi).expect("peak exists");
    let peak_len = lin[peak_first..].iter().take_while(|&&x| x == hi).count();
    let split = peak_first + peak_len.div_ceil(2);
    let lanes = (0..n).map(|k| usize::from(k >= split)).collect();
    (start, lanes)
}

/// Stamps the sequence onto a fresh canvas.
pub fn assemble_texture(
    seq: &AceSequence,
    library: &MinutiaeLibrary,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<CoatTexture, SynthesisError> {
    cfg.validate()?;
    seq.validate()?;
    for m in &seq.minutiae {
        if library.get(m.kind, m.region).is_empty() {
            return Err(SynthesisError::LibraryGap {
                kind: m.kind,
                region: m.region,
            });
        }
    }
    let mut rng = rng::rng(seed);
    let n = seq.len();
    let (start, lanes) = lane_layout(seq);
    let (w, h) = (cfg.canvas_width, cfg.canvas_height);
    let mut raster = Raster::filled(w, h, 0.0f32);
    let mut placements = Vec::with_capacity(n);
    let mut stripes = Vec::new();
    let pitch = cfg.stripe_pitch as f64;
    let step = cfg.patch_step();
    // lane 0 cursor moves right, lane 1 cursor moves left
    let mut cursor = [0.0, w as f64];
    let mut anchor_placement = 0;
    for k in 0..n {
        let i = (start + k) % n;
        let m = &seq.minutiae[i];
        let lane = lanes[k];
        let (b0, b1) = cfg.band(m.region);
        let needed = seq.ridge_counts[i] as f64 * pitch + step;
        let (item_lo, dir) = if lane == 0 {
            let c = cursor[0].max(b0);
            if c + needed > b1 {
                return Err(SynthesisError::CanvasOverflow { region: m.region, lane });
            }
            cursor[0] = c + needed;
            (c, 1.0)
        } else {
            let c = cursor[1].min(b1);
            if c - needed < b0 {
                return Err(SynthesisError::CanvasOverflow { region: m.region, lane });
            }
            cursor[1] = c - needed;
            (c, -1.0)
        };
        // stripes first, then the patch, in path direction
        for s in 0..seq.ridge_counts[i] {
            let x = item_lo + dir * (s as f64 + 0.5) * pitch;
            stripes.push(PlainStripe { x, lane });
        }
        let patch_lo = item_lo + dir * seq.ridge_counts[i] as f64 * pitch;
        let cx = patch_lo + dir * step / 2.0;
        let (l0, l1) = cfg.lane_bounds(lane);
        let centre = Point2::new(cx, (l0 + l1) / 2.0);
        let candidates = library.get(m.kind, m.region);
        let patch = &candidates[rng.random_range(0..candidates.len())];
        let placed = stamp_patch(&mut raster, &patch.image, &patch.minutia, m, centre, cfg)?;
        if i == seq.anchor_index {
            anchor_placement = placements.len();
        }
        placements.push(Placement {
            minutia: placed,
            anchor_px: centre,
            lane,
        });
    }
    for s in &stripes {
        let (l0, l1) = cfg.lane_bounds(s.lane);
        let margin = 8.0;
        stroke_polyline(
            &mut raster,
            &[Point2::new(s.x, l0 + margin), Point2::new(s.x, l1 - 1.0 - margin)],
            cfg.stripe_half_width,
        );
    }
    Ok(CoatTexture {
        raster,
        placements,
        stripes,
        anchor_placement,
        config: cfg.clone(),
    })
}

/// Rotates a library patch to the target orientation and max-blends it into the
/// canvas, centred at `centre`. Returns the placed minutia.
fn stamp_patch(
    canvas: &mut Raster<f32>,
    image: &Raster<f32>,
    source: &Minutia,
    target: &Minutia,
    centre: Point2<f64>,
    cfg: &SynthesisConfig,
) -> Result<Minutia, SynthesisError> {
    let delta = (target.angles.orientation - source.angles.orientation).to_radians();
    let (s, c) = delta.sin_cos();
    let size = cfg.patch_size as f64;
    let half = (size - 1.0) / 2.0;
    let (sw, sh) = (image.width() as f64 - 1.0, image.height() as f64 - 1.0);
    let x0 = (centre.x - half).round() as i64;
    let y0 = (centre.y - half).round() as i64;
    for py in 0..cfg.patch_size as i64 {
        for px in 0..cfg.patch_size as i64 {
            let (x, y) = (x0 + px, y0 + py);
            if x < 0 || y < 0 || x >= canvas.width() as i64 || y >= canvas.height() as i64 {
                continue;
            }
            // output offset from centre, rotated back into the library frame
            let (u, v) = ((px as f64 - half) / (size - 1.0), (py as f64 - half) / (size - 1.0));
            let (lu, lv) = (c * u + s * v, -s * u + c * v);
            let val = image.sample(((lu + 0.5) * sw) as f32, ((lv + 0.5) * sh) as f32, Border::Constant(0.0));
            let (xu, yu) = (x as usize, y as usize);
            if val > canvas.get(xu, yu) {
                canvas.set(xu, yu, val);
            }
        }
    }
    let (w1, h1) = ((canvas.width() - 1) as f64, (canvas.height() - 1) as f64);
    let keypoints = source
        .keypoints
        .iter()
        .map(|k| {
            let (u, v) = (k.x - 0.5, k.y - 0.5);
            let (ru, rv) = (c * u - s * v, s * u + c * v);
            let x = x0 as f64 + (ru + 0.5) * (size - 1.0);
            let y = y0 as f64 + (rv + 0.5) * (size - 1.0);
            Keypoint::new((x / w1).clamp(0.0, 1.0), (y / h1).clamp(0.0, 1.0))
        })
        .collect();
    let mut angles = source.angles;
    angles.orientation = target.angles.orientation;
    Ok(Minutia::new(target.kind, keypoints, angles, target.region)?)
}

/// Recovers the sequence from placement positions and stripe geometry alone:
/// items are ordered along the path, stripes between placements become ridge
/// counts and each region is read off the band holding the patch centre.
pub fn read_sequence(texture: &CoatTexture, side: Side) -> Result<AceSequence, SynthesisError> {
    let w = texture.config.canvas_width as f64;
    let key = |lane: usize, x: f64| (lane, if lane == 0 { x } else { w - x });
    enum Item {
        Stripe,
        Patch(usize),
    }
    let mut items: Vec<((usize, f64), Item)> = texture
        .stripes
        .iter()
        .map(|s| (key(s.lane, s.x), Item::Stripe))
        .chain(
            texture
                .placements
                .iter()
                .enumerate()
                .map(|(i, p)| (key(p.lane, p.anchor_px.x), Item::Patch(i))),
        )
        .collect();
    items.sort_by(|a, b| a.0 .0.cmp(&b.0 .0).then(a.0 .1.total_cmp(&b.0 .1)));
    let mut minutiae = Vec::new();
    let mut ridge_counts: Vec<u32> = Vec::new();
    let mut pending = 0u32;
    let mut anchor = 0;
    for (_, item) in &items {
        match item {
            Item::Stripe => pending += 1,
            Item::Patch(i) => {
                let p = &texture.placements[*i];
                let mut m = p.minutia.clone();
                m.region = texture.region_of(p);
                if *i == texture.anchor_placement {
                    anchor = minutiae.len();
                }
                minutiae.push(m);
                ridge_counts.push(pending);
                pending = 0;
            }
        }
    }
    if let Some(first) = ridge_counts.first_mut() {
        *first += pending;
    }
    Ok(AceSequence::new(minutiae, ridge_counts, anchor, side)?)
}

/// A virtual individual: one body side with its sequence and texture.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualIdentity {
    pub id: String,
    pub side: Side,
    pub sequence: AceSequence,
    pub texture: CoatTexture,
}

/// Everything needed to rebuild an identity deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySpec {
    pub id: String,
    pub side: Side,
    pub sequence: AceSequence,
    pub texture_seed: u64,
}

/// Attempts per identity before giving up on drawing a fresh sequence.
const UNIQUE_ATTEMPTS: usize = 1000;

/// Draws `n_ids` pairwise distinct sequences (as cyclic token strings). Sides
/// alternate, each side being its own identity.
pub fn plan_identities(
    n_ids: usize,
    stats: &RegionStats,
    cfg: &SynthesisConfig,
    seed: u64,
) -> Result<Vec<IdentitySpec>, SynthesisError> {
    if n_ids == 0 {
        return Err(SynthesisError::NoIdentities);
    }
    cfg.validate()?;
    stats.validate()?;
    let width = (n_ids - 1).to_string().len().max(5);
    let mut seen: HashSet<Vec<AceToken>> = HashSet::with_capacity(n_ids);
    let mut out = Vec::with_capacity(n_ids);
    for i in 0..n_ids {
        let side = if i % 2 == 0 { Side::Left } else { Side::Right };
        let id_seed = rng::derive(seed, i as u64);
        let mut chosen = None;
        for attempt in 0..UNIQUE_ATTEMPTS {
            let s = rng::derive(id_seed, attempt as u64);
            let seq = sample_sequence(stats, &cfg.ridge_counts, side, s)?;
            if seen.insert(seq.canonical_tokens()) {
                chosen = Some(seq);
                break;
            }
        }
        let sequence = chosen.ok_or(SynthesisError::UniquenessExhausted(UNIQUE_ATTEMPTS))?;
        out.push(IdentitySpec {
            id: format!("{}{:0width$}", cfg.id_prefix, i),
            side,
            sequence,
            texture_seed: rng::derive(id_seed, u64::MAX),
        });
    }
    Ok(out)
}

pub fn realize_identity(
    spec: &IdentitySpec,
    library: &MinutiaeLibrary,
    cfg: &SynthesisConfig,
) -> Result<VirtualIdentity, SynthesisError> {
    Ok(VirtualIdentity {
        id: spec.id.clone(),
        side: spec.side,
        sequence: spec.sequence.clone(),
        texture: assemble_texture(&spec.sequence, library, cfg, spec.texture_seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ace::encode;
    use crate::augment::{build_library, canonical_seed_patches, AugmentConfig};

    fn library() -> MinutiaeLibrary {
        build_library(&canonical_seed_patches(48), 2, &AugmentConfig::default(), 5).unwrap()
    }

    fn seq_of(items: &[(MinutiaKind, f64, RegionId, u32)]) -> AceSequence {
        let minutiae = items
            .iter()
            .map(|&(k, o, r, _)| Minutia::canonical(k, o, r).unwrap())
            .collect();
        AceSequence::new(minutiae, items.iter().map(|i| i.3).collect(), 0, Side::Left).unwrap()
    }

    #[test]
    fn default_stats_are_valid() {
        RegionStats::default().validate().unwrap();
        let mut s = RegionStats::default();
        s.kind_probs[1][0] += 0.01;
        assert!(s.validate().is_err());
    }

    #[test]
    fn ridge_count_pmf_sums_to_one() {
        let law = RidgeCountLaw::default();
        let total: f64 = (0..=law.max).map(|k| law.pmf(k)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((law.pmf(0) - 0.5 / (1.0 - 0.5f64.powi(7))).abs() < 1e-15);
    }

    #[test]
    fn point_mass_gives_all_ridges() {
        let stats = RegionStats {
            kind_probs: [[1.0, 0.0, 0.0, 0.0]; 3],
            ..RegionStats::default()
        };
        for s in 0..20 {
            let seq = sample_sequence(&stats, &RidgeCountLaw::default(), Side::Left, s).unwrap();
            assert!(seq.minutiae.iter().all(|m| m.kind == MinutiaKind::Ridge));
        }
    }

    #[test]
    fn region_counts_stay_in_range() {
        let stats = RegionStats::default();
        for s in 0..200 {
            let seq = sample_sequence(&stats, &RidgeCountLaw::default(), Side::Right, s).unwrap();
            for r in RegionId::ALL {
                let c = seq.minutiae.iter().filter(|m| m.region == r).count() as u32;
                let [lo, hi] = stats.count_range[r.index()];
                assert!((lo..=hi).contains(&c));
            }
        }
    }

    #[test]
    fn single_minutia_stamps_one_patch() {
        let seq = seq_of(&[(MinutiaKind::Bifurcation, 100.0, RegionId::Mid, 0)]);
        let t = assemble_texture(&seq, &library(), &SynthesisConfig::default(), 1).unwrap();
        assert_eq!(t.placements.len(), 1);
        assert!(t.stripes.is_empty());
        assert!(t.raster.pixels().iter().any(|&v| v > 0.5));
    }

    #[test]
    fn ridge_counts_become_stripes_before_patches() {
        let seq = seq_of(&[
            (MinutiaKind::Ridge, 80.0, RegionId::Fore, 2),
            (MinutiaKind::Enclosure, 10.0, RegionId::Fore, 0),
        ]);
        let t = assemble_texture(&seq, &library(), &SynthesisConfig::default(), 1).unwrap();
        assert_eq!(t.stripes.len(), 2);
        let first = t.placements[0].anchor_px.x;
        let second = t.placements[1].anchor_px.x;
        assert!(t.stripes.iter().all(|s| s.x < first));
        assert!(first < second);
    }

    #[test]
    fn texture_reads_back_to_its_sequence() {
        let lib = library();
        let cfg = SynthesisConfig::default();
        for s in 0..30 {
            let seq = sample_sequence(&RegionStats::default(), &cfg.ridge_counts, Side::Left, s).unwrap();
            let t = assemble_texture(&seq, &lib, &cfg, s).unwrap();
            let back = read_sequence(&t, Side::Left).unwrap();
            assert_eq!(encode(&back).unwrap(), encode(&seq).unwrap());
        }
    }

    #[test]
    fn rotated_anchor_reads_back() {
        let lib = library();
        let cfg = SynthesisConfig::default();
        let mut seq = sample_sequence(&RegionStats::default(), &cfg.ridge_counts, Side::Left, 4).unwrap();
        seq.anchor_index = seq.len() / 2;
        let t = assemble_texture(&seq, &lib, &cfg, 0).unwrap();
        assert_eq!(encode(&read_sequence(&t, Side::Left).unwrap()).unwrap(), encode(&seq).unwrap());
    }

    #[test]
    fn placements_stay_in_their_band() {
        let lib = library();
        let cfg = SynthesisConfig::default();
        for s in 0..30 {
            let seq = sample_sequence(&RegionStats::default(), &cfg.ridge_counts, Side::Left, s).unwrap();
            let t = assemble_texture(&seq, &lib, &cfg, s).unwrap();
            let half = cfg.patch_step() / 2.0;
            for p in &t.placements {
                let (b0, b1) = cfg.band(p.minutia.region);
                assert!(p.anchor_px.x - half >= b0 - 1e-9 && p.anchor_px.x + half <= b1 + 1e-9);
            }
        }
    }

    #[test]
    fn missing_library_entry_is_reported() {
        let seq = seq_of(&[(MinutiaKind::Ridge, 80.0, RegionId::Hind, 0)]);
        let err = assemble_texture(&seq, &MinutiaeLibrary::default(), &SynthesisConfig::default(), 0);
        assert_eq!(
            err.unwrap_err(),
            SynthesisError::LibraryGap {
                kind: MinutiaKind::Ridge,
                region: RegionId::Hind
            }
        );
    }

    #[test]
    fn overlong_region_overflows() {
        let items: Vec<_> = (0..20).map(|_| (MinutiaKind::Ridge, 80.0, RegionId::Fore, 6)).collect();
        let err = assemble_texture(&seq_of(&items), &library(), &SynthesisConfig::default(), 0);
        assert!(matches!(err, Err(SynthesisError::CanvasOverflow { .. })));
    }

    #[test]
    fn planned_identities_are_distinct_and_alternate_sides() {
        let plan = plan_identities(50, &RegionStats::default(), &SynthesisConfig::default(), 3).unwrap();
        let set: HashSet<_> = plan.iter().map(|p| p.sequence.canonical_tokens()).collect();
        assert_eq!(set.len(), 50);
        assert_eq!(plan[0].side, Side::Left);
        assert_eq!(plan[1].side, Side::Right);
        assert_eq!(plan[7].id, "vt00007");
    }

    #[test]
    fn assembly_is_deterministic() {
        let lib = library();
        let cfg = SynthesisConfig::default();
        let seq = sample_sequence(&RegionStats::default(), &cfg.ridge_counts, Side::Left, 8).unwrap();
        assert_eq!(
            assemble_texture(&seq, &lib, &cfg, 3).unwrap(),
            assemble_texture(&seq, &lib, &cfg, 3).unwrap()
        );
    }
}
