//! CSV in/out, hashing and the run manifest.

use crate::error::{CliError, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Deserialize every row of a headed CSV. Parse failures carry `file:line`.
pub fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row.map_err(|e| csv_error(path, e))?);
    }
    if rows.is_empty() {
        return Err(CliError::NoData(format!("{} has no rows", path.display())));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map(|p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        kind => {
            let at = match line {
                Some(l) => format!("{}:{l}", path.display()),
                None => path.display().to_string(),
            };
            CliError::validation(at, format!("{kind:?}"))
        }
    }
}

/// Render a CSV in memory; floats use Rust's shortest round-trip form so
/// identical inputs give identical bytes.
pub fn render_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    /// Relative to the experiment directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunEntry {
    pub label: String,
    pub seed: u64,
    pub algorithm: String,
    pub final_risk: Option<f64>,
    pub diverged: bool,
    pub file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub build: String,
    pub config: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub files: Vec<FileEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub runs: Vec<RunEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn build_id() -> String {
    format!(
        "optlab {} ({})",
        env!("CARGO_PKG_VERSION"),
        env!("OPTLAB_GIT_DESCRIBE")
    )
}

/// Tracks files written into one experiment directory.
pub struct OutputDir {
    pub root: PathBuf,
    pub files: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn entry(rel: &str, contents: &[u8]) -> FileEntry {
        FileEntry {
            path: rel.to_string(),
            sha256: sha256_hex(contents),
            bytes: contents.len() as u64,
        }
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        write_file(&self.root.join(rel), contents)?;
        self.files.push(Self::entry(rel, contents));
        Ok(())
    }

    pub fn finish(mut self, mut manifest: Manifest) -> Result<PathBuf> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.files = self.files;
        let mut json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        json.push('\n');
        let path = self.root.join("manifest.json");
        write_file(&path, json.as_bytes())?;
        Ok(path)
    }
}
