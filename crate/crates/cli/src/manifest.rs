//! Atomic artifact output and the per-run manifest.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    Csv,
    Svg,
    #[default]
    Both,
}

impl Format {
    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    fn svg(self) -> bool {
        matches!(self, Format::Svg | Format::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub tool_version: String,
    pub wall_time_seconds: f64,
    /// File names relative to the output directory, in write order.
    pub files: Vec<String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Writes files into one directory via temp file and rename, remembering each name.
pub struct ArtifactWriter {
    dir: PathBuf,
    format: Format,
    files: Vec<String>,
    started: Instant,
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

impl ArtifactWriter {
    pub fn new(dir: &Path, format: Format) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes regardless of the chosen format.
    pub fn file(&mut self, name: &str, contents: &[u8]) -> io::Result<()> {
        write_atomic(&self.dir.join(name), contents)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn csv(&mut self, name: &str, contents: &str) -> io::Result<()> {
        if self.format.csv() {
            self.file(name, contents.as_bytes())?;
        }
        Ok(())
    }

    pub fn svg(&mut self, name: &str, contents: &str) -> io::Result<()> {
        if self.format.svg() {
            self.file(name, contents.as_bytes())?;
        }
        Ok(())
    }

    pub fn finish(self, subcommand: &str, config_hash: &str) -> io::Result<RunManifest> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config_hash: config_hash.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
            files: self.files,
        };
        let json = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        write_atomic(&self.dir.join(MANIFEST_NAME), json.as_bytes())?;
        Ok(manifest)
    }
}
