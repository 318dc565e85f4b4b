//! Flat TOML run configuration bundling every module's settings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::AugmentConfig;
use crate::capture::CaptureConfig;
use crate::loss::{DEFAULT_LOGIT_SCALE, DEFAULT_MARGIN};
use crate::matching::MatchConfig;
use crate::synthesis::{RegionStats, SynthesisConfig};

/// File name of the configuration snapshot written into run directories.
pub const SNAPSHOT_NAME: &str = "config.toml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{field} path does not exist: {path}")]
    MissingPath { field: &'static str, path: PathBuf },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub library_dir: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub margin: f64,
    /// Triplet difficulty factor in [0, 1).
    pub gamma: f64,
    pub logit_scale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            gamma: 0.0,
            logit_scale: DEFAULT_LOGIT_SCALE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub augment: AugmentConfig,
    pub capture: CaptureConfig,
    pub synthesis: SynthesisConfig,
    pub stats: RegionStats,
    pub matcher: MatchConfig,
    pub loss: LossConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Parses, validates, and checks that the library and manifest paths
    /// exist. The output directory may be created later.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::from_toml(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.augment.validate().map_err(|e| inv(&e))?;
        self.capture.validate().map_err(|e| inv(&e))?;
        self.synthesis.validate().map_err(|e| inv(&e))?;
        self.stats.validate().map_err(|e| inv(&e))?;
        self.matcher.weights.validate().map_err(|e| inv(&e))?;
        let l = &self.loss;
        if !(l.margin.is_finite() && l.margin >= 0.0 && l.gamma >= 0.0 && l.gamma < 1.0 && l.logit_scale > 0.0) {
            return Err(ConfigError::Invalid("loss: margin must be finite and non-negative, gamma in [0, 1), logit scale positive".into()));
        }
        Ok(())
    }

    pub fn check_paths(&self) -> Result<(), ConfigError> {
        for (field, p) in [("library_dir", &self.paths.library_dir), ("manifest", &self.paths.manifest)] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(ConfigError::MissingPath { field, path: p.clone() });
                }
            }
        }
        Ok(())
    }

    /// Writes `config.toml` into `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<PathBuf, ConfigError> {
        let p = dir.join(SNAPSHOT_NAME);
        fs::write(&p, self.to_toml()).map_err(|source| ConfigError::Io { path: p.clone(), source })?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_roundtrip() {
        let mut c = RunConfig::default();
        c.seed = 42;
        c.capture.noise_probability = 0.25;
        c.paths.output_dir = Some("runs/a".into());
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sead = 3").is_err());
        assert!(RunConfig::from_toml("[capture]\nnoise = 0.1").is_err());
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c = RunConfig::from_toml("seed = 7\n[matcher.weights]\nindel = 2.0\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.matcher.weights.indel, 2.0);
        assert_eq!(c.matcher.weights.kind_mismatch, 1.0);
    }

    #[test]
    fn gamma_range_checked() {
        let mut c = RunConfig::default();
        c.loss.gamma = 1.0;
        assert!(c.validate().is_err());
        c.loss.gamma = 0.5;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn missing_paths_are_named() {
        let mut c = RunConfig::default();
        c.paths.library_dir = Some("/nonexistent/lib".into());
        let e = c.check_paths().unwrap_err();
        assert!(e.to_string().contains("/nonexistent/lib"));
    }

    #[test]
    fn snapshot_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig { seed: 9, ..RunConfig::default() };
        let p = c.write_snapshot(dir.path()).unwrap();
        assert_eq!(RunConfig::load(&p).unwrap(), c);
    }
}
