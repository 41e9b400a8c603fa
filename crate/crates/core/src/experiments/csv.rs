//! Numeric CSV artifacts with a JSON metadata sidecar.
//!
//! Values are written with 17 significant digits so a read-back reproduces
//! every `f64` exactly. Nothing time- or host-dependent is written, so equal
//! inputs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CsvArtifact {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub meta: ArtifactMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArtifactMeta {
    pub artifact: String,
    pub version: u32,
    pub crate_version: String,
    pub experiment: String,
    pub seed: u64,
    pub config_hash: String,
    pub columns: Vec<String>,
    pub rows: usize,
    /// Meaning of coded columns and other notes.
    pub notes: Vec<String>,
}

impl CsvArtifact {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            meta: ArtifactMeta {
                artifact: name.to_string(),
                version: ARTIFACT_VERSION,
                crate_version: env!("CARGO_PKG_VERSION").to_string(),
                experiment: String::new(),
                seed: 0,
                config_hash: String::new(),
                columns: Vec::new(),
                rows: 0,
                notes: Vec::new(),
            },
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header of {}", self.name);
        self.rows.push(row);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.meta.notes.push(text.into());
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// CSV text.
    pub fn render(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|v| format_value(*v)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    fn sidecar(&self) -> String {
        let mut meta = self.meta.clone();
        meta.columns = self.columns.clone();
        meta.rows = self.rows.len();
        serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n"
    }
}

/// 17 significant digits; non-finite values as `nan`, `inf`, `-inf`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// SHA-256 of a serialized value, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(bytes))
}

/// Writes `<dir>/<name>.csv` and `<dir>/<name>.json`, returning both paths.
pub fn write_csv(artifact: &CsvArtifact, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let csv = dir.join(format!("{}.csv", artifact.name));
    let json = dir.join(format!("{}.json", artifact.name));
    fs::write(&csv, artifact.render()).map_err(|e| Error::Io(format!("{}: {e}", csv.display())))?;
    if let Err(e) = fs::write(&json, artifact.sidecar()) {
        let _ = fs::remove_file(&csv);
        return Err(Error::Io(format!("{}: {e}", json.display())));
    }
    Ok(vec![csv, json])
}

/// Writes every artifact; on failure removes whatever was already written.
pub fn write_all(artifacts: &[CsvArtifact], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for a in artifacts {
        match write_csv(a, dir) {
            Ok(p) => written.extend(p),
            Err(e) => {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(e);
            }
        }
    }
    Ok(written)
}

/// Parses a CSV written by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    let rows = lines
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|c| c.parse::<f64>().map_err(|e| Error::Parse(format!("{} line {}: {e}", path.display(), i + 2))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}
