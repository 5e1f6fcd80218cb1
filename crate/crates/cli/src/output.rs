//! Artifact emission: CSV tables, JSON reports and the run manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// 17 significant digits, enough to round-trip any double.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_time_seconds: f64,
    pub pass: bool,
    pub artifacts: Vec<ArtifactEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Collects artifacts written to one output directory.
#[derive(Debug)]
pub struct ArtifactSink {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

impl ArtifactSink {
    pub fn create(dir: impl AsRef<Path>) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, entries: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entries(&self) -> &[ArtifactEntry] {
        &self.entries
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.entries.push(ArtifactEntry {
            name: name.into(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    /// Pretty JSON, newline terminated.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut text = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        text.push(b'\n');
        self.write_bytes(name, &text)
    }

    pub fn write_csv(&mut self, name: &str, table: &CsvTable) -> io::Result<()> {
        self.write_bytes(name, table.render().as_bytes())
    }

    /// Writes the manifest; it is not itself listed as an artifact.
    pub fn finish(&self, mut manifest: Manifest) -> io::Result<Manifest> {
        manifest.artifacts = self.entries.clone();
        let mut text = serde_json::to_vec_pretty(&manifest).map_err(io::Error::other)?;
        text.push(b'\n');
        fs::File::create(self.dir.join(MANIFEST_NAME))?.write_all(&text)?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell<'a> {
    Num(f64),
    Int(u64),
    Text(&'a str),
}

#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<String>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, cells: &[Cell<'_>]) {
        debug_assert_eq!(cells.len(), self.header.len());
        let line: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::Num(x) => fmt_f64(*x),
                Cell::Int(k) => k.to_string(),
                Cell::Text(s) => s.to_string(),
            })
            .collect();
        self.rows.push(line.join(","));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(r);
            out.push('\n');
        }
        out
    }
}
