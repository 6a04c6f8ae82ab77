//! Artifact writing: atomic, deterministic files.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;

/// Write a file atomically: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Deterministic CSV assembly. Floats use Rust's shortest round-trip
/// formatting, so identical runs produce byte-identical files.
pub struct CsvBuilder {
    out: String,
}

impl CsvBuilder {
    pub fn new(header: &[&str]) -> Self {
        CsvBuilder { out: format!("{}\n", header.join(",")) }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.out.push_str(&fields.join(","));
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn artifact_paths(out_dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
    (
        out_dir.join("manifest.json"),
        out_dir.join("results.csv"),
        out_dir.join("summary.json"),
    )
}
