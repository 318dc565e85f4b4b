//! Whole virtual populations: identities, capture plans and manifest rows.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::ace::{encode, AceError};
use crate::augment::MinutiaeLibrary;
use crate::capture::{draw_capture, render_capture, CaptureConfig, CaptureError};
use crate::manifest::{write_manifest, ManifestError, ManifestRow, DEFAULT_SPLIT};
use crate::raster::{Raster, RasterError};
use crate::rng;
use crate::synthesis::{plan_identities, realize_identity, IdentitySpec, RegionStats, SynthesisConfig, SynthesisError, VirtualIdentity};

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Ace(#[from] AceError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Raster { path: PathBuf, source: RasterError },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub fn image_path(id: &str, view: usize) -> String {
    format!("images/{id}_v{view:02}.png")
}

pub fn texture_path(id: &str) -> String {
    format!("textures/{id}.png")
}

fn capture_seed(spec: &IdentitySpec) -> u64 {
    rng::derive(spec.texture_seed, 1)
}

/// Manifest rows for `views` captures of every identity. Capture windows are
/// drawn here; rendering them is deferred.
pub fn manifest_rows(
    specs: &[IdentitySpec],
    synth: &SynthesisConfig,
    capture: &CaptureConfig,
    views: usize,
) -> Result<Vec<ManifestRow>, PopulationError> {
    let mut rows = Vec::with_capacity(specs.len() * views);
    for spec in specs {
        let text = encode(&spec.sequence)?.into_string();
        for v in 0..views {
            let rec = draw_capture(synth.canvas_width, synth.canvas_height, capture, v, capture_seed(spec))?;
            rows.push(ManifestRow {
                image_path: image_path(&spec.id, v),
                text: text.clone(),
                id: spec.id.clone(),
                side: spec.side,
                split: DEFAULT_SPLIT.into(),
                view_index: v,
                capture: Some(rec),
            });
        }
    }
    Ok(rows)
}

/// Identities with their textures, plus one manifest row per view.
#[derive(Debug, Clone)]
pub struct Population {
    pub identities: Vec<VirtualIdentity>,
    pub rows: Vec<ManifestRow>,
}

#[allow(clippy::too_many_arguments)]
pub fn synthesize_population(
    n_ids: usize,
    views: usize,
    stats: &RegionStats,
    library: &MinutiaeLibrary,
    synth: &SynthesisConfig,
    capture: &CaptureConfig,
    seed: u64,
) -> Result<Population, PopulationError> {
    let specs = plan_identities(n_ids, stats, synth, seed)?;
    let rows = manifest_rows(&specs, synth, capture, views)?;
    let identities = specs
        .par_iter()
        .map(|s| realize_identity(s, library, synth))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Population { identities, rows })
}

/// Renders the image a manifest row refers to.
pub fn render_row(identity: &VirtualIdentity, row: &ManifestRow, capture: &CaptureConfig) -> Result<Raster<f32>, PopulationError> {
    let rec = match &row.capture {
        Some(r) => r.clone(),
        None => draw_capture(
            identity.texture.raster.width(),
            identity.texture.raster.height(),
            capture,
            row.view_index,
            0,
        )?,
    };
    Ok(render_capture(&identity.texture.raster, &rec, capture))
}

/// Writes textures, captures and `manifest.jsonl` under `out`, one identity
/// at a time per worker.
pub fn write_population(
    specs: &[IdentitySpec],
    library: &MinutiaeLibrary,
    synth: &SynthesisConfig,
    capture: &CaptureConfig,
    views: usize,
    out: &Path,
) -> Result<Vec<ManifestRow>, PopulationError> {
    for sub in ["images", "textures"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|source| PopulationError::Io { path: d, source })?;
    }
    let rows = manifest_rows(specs, synth, capture, views)?;
    specs.par_iter().enumerate().try_for_each(|(i, spec)| -> Result<(), PopulationError> {
        let ident = realize_identity(spec, library, synth)?;
        let tp = out.join(texture_path(&spec.id));
        ident
            .texture
            .raster
            .save_png(&tp)
            .map_err(|source| PopulationError::Raster { path: tp, source })?;
        for row in &rows[i * views..(i + 1) * views] {
            let img = render_row(&ident, row, capture)?;
            let p = out.join(&row.image_path);
            img.save_png(&p).map_err(|source| PopulationError::Raster { path: p, source })?;
        }
        Ok(())
    })?;
    write_manifest(&out.join("manifest.jsonl"), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ace::decode_with_side;
    use crate::augment::{build_library, canonical_seed_patches, AugmentConfig};
    use crate::synthesis::read_sequence;

    #[test]
    fn single_identity_single_view() {
        let lib = build_library(&canonical_seed_patches(48), 1, &AugmentConfig::default(), 0).unwrap();
        let p = synthesize_population(
            1,
            1,
            &RegionStats::default(),
            &lib,
            &SynthesisConfig::default(),
            &CaptureConfig::default(),
            9,
        )
        .unwrap();
        assert_eq!(p.rows.len(), 1);
        let ident = &p.identities[0];
        let decoded = decode_with_side(&p.rows[0].text, p.rows[0].side).unwrap();
        assert!(decoded.cyclically_equivalent(&ident.sequence));
        assert!(read_sequence(&ident.texture, ident.side).unwrap().cyclically_equivalent(&decoded));
        let img = render_row(ident, &p.rows[0], &CaptureConfig::default()).unwrap();
        let rec = p.rows[0].capture.as_ref().unwrap();
        assert_eq!((img.width(), img.height()), (rec.out_w, rec.out_h));
    }

    #[test]
    fn row_count_is_ids_times_views() {
        let specs = plan_identities(30, &RegionStats::default(), &SynthesisConfig::default(), 1).unwrap();
        let rows = manifest_rows(&specs, &SynthesisConfig::default(), &CaptureConfig::default(), 12).unwrap();
        assert_eq!(rows.len(), 360);
        assert!(rows.iter().all(|r| r.split == DEFAULT_SPLIT));
    }

    #[test]
    fn writes_files() {
        let lib = build_library(&canonical_seed_patches(48), 1, &AugmentConfig::default(), 0).unwrap();
        let specs = plan_identities(2, &RegionStats::default(), &SynthesisConfig::default(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let rows = write_population(
            &specs,
            &lib,
            &SynthesisConfig::default(),
            &CaptureConfig::default(),
            2,
            dir.path(),
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!(dir.path().join(&r.image_path).is_file());
        }
        assert!(dir.path().join("manifest.jsonl").is_file());
    }
}
