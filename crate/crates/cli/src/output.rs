//! Artifact writing. Files are written once, from one thread, and listed with
//! their size and SHA-256 in `manifest.json`; nothing time-dependent is recorded.

use crate::error::CliError;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    entries: Vec<ArtifactEntry>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: u32,
    tool_version: &'a str,
    scenario: &'a str,
    subcommand: &'a str,
    files: &'a [ArtifactEntry],
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), entries: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn put(&mut self, name: &str, data: Vec<u8>) -> Result<(), CliError> {
        std::fs::write(self.dir.join(name), &data)?;
        self.entries.push(ArtifactEntry { name: name.to_string(), bytes: data.len() as u64, sha256: hex(&Sha256::digest(&data)) });
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut data = serde_json::to_vec_pretty(value)?;
        data.push(b'\n');
        self.put(name, data)
    }

    /// Numeric table; values are written in shortest round-trip form.
    pub fn csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), CliError>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        let data = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        self.put(name, data)
    }

    pub fn finish(mut self, scenario: &str, subcommand: &str) -> Result<PathBuf, CliError> {
        let entries = std::mem::take(&mut self.entries);
        let m = Manifest { schema: crate::config::SCHEMA_VERSION, tool_version: env!("CARGO_PKG_VERSION"), scenario, subcommand, files: &entries };
        let mut data = serde_json::to_vec_pretty(&m)?;
        data.push(b'\n');
        std::fs::write(self.dir.join("manifest.json"), data)?;
        Ok(self.dir)
    }
}
