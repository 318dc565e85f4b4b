use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{augment_minutia, AugmentConfig, AugmentError};
use crate::draw::render_minutia;
use crate::minutiae::{Minutia, MinutiaKind, RegionId};
use crate::raster::{Raster, RasterError};
use crate::rng;

/// Retries per variant before giving up on a seed patch.
pub const MAX_ATTEMPTS: usize = 64;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("library directory {0} does not exist")]
    MissingDir(PathBuf),
    #[error("library directory {0} holds no annotated patches")]
    Empty(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Raster { path: PathBuf, source: RasterError },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Annotation {
        path: PathBuf,
        source: crate::minutiae::MinutiaError,
    },
}

/// A stripe mask patch with its minutia annotation in patch-normalized
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedPatch {
    pub image: Raster<f32>,
    pub minutia: Minutia,
}

impl AnnotatedPatch {
    /// Writes `<stem>.png` and the sidecar `<stem>.json`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), LibraryError> {
        let png = dir.join(format!("{stem}.png"));
        self.image
            .save_png(&png)
            .map_err(|source| LibraryError::Raster { path: png, source })?;
        let json = dir.join(format!("{stem}.json"));
        let body = serde_json::to_string_pretty(&self.minutia).map_err(|source| LibraryError::Json {
            path: json.clone(),
            source,
        })?;
        fs::write(&json, body).map_err(|source| LibraryError::Io { path: json, source })
    }

    pub fn load(png: &Path) -> Result<Self, LibraryError> {
        let image = Raster::load_png(png).map_err(|source| LibraryError::Raster {
            path: png.to_path_buf(),
            source,
        })?;
        let json = png.with_extension("json");
        let text = fs::read_to_string(&json).map_err(|source| LibraryError::Io {
            path: json.clone(),
            source,
        })?;
        let minutia: Minutia = serde_json::from_str(&text).map_err(|source| LibraryError::Json {
            path: json.clone(),
            source,
        })?;
        minutia
            .validate()
            .map_err(|source| LibraryError::Annotation { path: json, source })?;
        Ok(Self { image, minutia })
    }
}

/// Loads every `*.png` with a sidecar `*.json` annotation, sorted by file name.
pub fn load_patch_dir(dir: &Path) -> Result<Vec<AnnotatedPatch>, LibraryError> {
    if !dir.is_dir() {
        return Err(LibraryError::MissingDir(dir.to_path_buf()));
    }
    let entries = fs::read_dir(dir).map_err(|source| LibraryError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut pngs: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "png") && p.with_extension("json").is_file())
        .collect();
    pngs.sort();
    if pngs.is_empty() {
        return Err(LibraryError::Empty(dir.to_path_buf()));
    }
    pngs.iter().map(|p| AnnotatedPatch::load(p)).collect()
}

/// One drawn seed patch per (kind, region), with region-dependent orientation.
pub fn canonical_seed_patches(size: usize) -> Vec<AnnotatedPatch> {
    let mut out = Vec::new();
    for kind in MinutiaKind::ALL {
        for region in RegionId::ALL {
            let base = if kind == MinutiaKind::Convergence { 270.0 } else { 90.0 };
            let orientation = base + 10.0 * (region.index() as f64 - 1.0);
            let minutia = Minutia::canonical(kind, orientation, region).expect("canonical layout is valid");
            let image = render_minutia(&minutia, size, (size as f64 / 24.0).max(1.0)).expect("valid minutia");
            out.push(AnnotatedPatch { image, minutia });
        }
    }
    out
}

/// Augmented minutiae indexed by kind and region.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MinutiaeLibrary {
    entries: BTreeMap<(MinutiaKind, RegionId), Vec<AnnotatedPatch>>,
}

impl MinutiaeLibrary {
    pub fn insert(&mut self, patch: AnnotatedPatch) {
        self.entries
            .entry((patch.minutia.kind, patch.minutia.region))
            .or_default()
            .push(patch);
    }

    pub fn get(&self, kind: MinutiaKind, region: RegionId) -> &[AnnotatedPatch] {
        self.entries.get(&(kind, region)).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnnotatedPatch> {
        self.entries.values().flatten()
    }

    pub fn kind_histogram(&self) -> [usize; 4] {
        let mut h = [0; 4];
        for p in self.iter() {
            h[p.minutia.kind.index()] += 1;
        }
        h
    }

    /// Largest patch side over all entries.
    pub fn max_patch_size(&self) -> (usize, usize) {
        self.iter().fold((0, 0), |(w, h), p| {
            (w.max(p.image.width()), h.max(p.image.height()))
        })
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), LibraryError> {
        fs::create_dir_all(dir).map_err(|source| LibraryError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for ((kind, region), patches) in &self.entries {
            for (i, p) in patches.iter().enumerate() {
                p.save(dir, &format!("{}_{}_{i:04}", kind.name(), region.letter()))?;
            }
        }
        Ok(())
    }

    /// Reads a directory written by [`MinutiaeLibrary::save_dir`] (or any
    /// directory of annotated patches).
    pub fn load_dir(dir: &Path) -> Result<Self, LibraryError> {
        let mut lib = Self::default();
        for p in load_patch_dir(dir)? {
            lib.insert(p);
        }
        Ok(lib)
    }
}

/// Builds `n_per_seed` augmented variants of every seed patch. Variants whose
/// annotation no longer validates are redrawn, up to [`MAX_ATTEMPTS`] times.
pub fn build_library(
    seeds: &[AnnotatedPatch],
    n_per_seed: usize,
    cfg: &AugmentConfig,
    seed: u64,
) -> Result<MinutiaeLibrary, AugmentError> {
    cfg.validate()?;
    for (index, s) in seeds.iter().enumerate() {
        s.minutia
            .validate()
            .map_err(|source| AugmentError::InvalidSeed { index, source })?;
    }
    let mut lib = MinutiaeLibrary::default();
    for (i, patch) in seeds.iter().enumerate() {
        let patch_seed = rng::derive(seed, i as u64);
        for v in 0..n_per_seed {
            let mut last = None;
            let mut made = None;
            for attempt in 0..MAX_ATTEMPTS {
                let s = rng::derive(patch_seed, (v * MAX_ATTEMPTS + attempt) as u64);
                match augment_minutia(patch, cfg, s) {
                    Ok(p) => {
                        made = Some(p);
                        break;
                    }
                    Err(AugmentError::KindBrokenByAugmentation { last: e, .. }) => last = Some(e),
                    Err(e) => return Err(e),
                }
            }
            match made {
                Some(p) => lib.insert(p),
                None => {
                    return Err(AugmentError::KindBrokenByAugmentation {
                        kind: patch.minutia.kind,
                        attempts: MAX_ATTEMPTS,
                        last: last.expect("at least one attempt"),
                    })
                }
            }
        }
    }
    Ok(lib)
}
