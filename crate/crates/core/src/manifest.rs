//! JSON-lines manifests pairing images with descriptor text and identity.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ace::Side;
use crate::capture::CaptureRecord;

pub const DEFAULT_SPLIT: &str = "train";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub image_path: String,
    pub text: String,
    pub id: String,
    pub side: Side,
    pub split: String,
    pub view_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capture: Option<CaptureRecord>,
}

pub fn to_jsonl(rows: &[ManifestRow]) -> String {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r).expect("rows serialize"));
        s.push('\n');
    }
    s
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), ManifestError> {
    let io = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(fs::File::create(path).map_err(io)?);
    for r in rows {
        serde_json::to_writer(&mut w, r).map_err(|source| ManifestError::Json {
            path: path.to_path_buf(),
            line: 0,
            source,
        })?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads a manifest; blank lines are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, ManifestError> {
    let io = |source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(fs::File::open(path).map_err(io)?);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).map_err(|source| ManifestError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?);
    }
    Ok(rows)
}

/// Distinct ids in first-appearance order.
pub fn unique_ids(rows: &[ManifestRow]) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    rows.iter()
        .filter(|r| seen.insert(r.id.as_str()))
        .map(|r| r.id.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, view: usize) -> ManifestRow {
        ManifestRow {
            image_path: format!("images/{id}_v{view:02}.png"),
            text: "R0a1F".into(),
            id: id.into(),
            side: Side::Left,
            split: DEFAULT_SPLIT.into(),
            view_index: view,
            capture: None,
        }
    }

    #[test]
    fn roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        let rows = vec![row("a", 0), row("a", 1), row("b", 0)];
        write_manifest(&p, &rows).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), rows);
        assert_eq!(fs::read_to_string(&p).unwrap(), to_jsonl(&rows));
        assert_eq!(unique_ids(&rows), vec!["a".to_string(), "b".to_string()]);
    }

    #[test]
    fn field_names_are_stable() {
        let v: serde_json::Value = serde_json::to_value(row("x", 3)).unwrap();
        let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["id", "image_path", "side", "split", "text", "view_index"]);
        assert_eq!(v["side"], "left");
    }

    #[test]
    fn bad_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        fs::write(&p, format!("{}\n{{oops\n", serde_json::to_string(&row("a", 0)).unwrap())).unwrap();
        assert!(matches!(read_manifest(&p), Err(ManifestError::Json { line: 2, .. })));
    }
}
