//! Plain-text run manifest: configuration echo, versions, per-stage
//! timings, and one `file <name> <sha256> <bytes>` line per emitted output,
//! so reruns can be audited byte for byte.

use sha2::{Digest, Sha256};
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Default)]
pub struct RunManifest {
    pairs: Vec<(String, String)>,
    files: Vec<FileRecord>,
}

impl RunManifest {
    pub fn new() -> Self {
        let mut m = Self::default();
        m.set("version.spdc", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.pairs.push((key.to_string(), value.to_string()));
    }

    pub fn set_timing(&mut self, stage: &str, elapsed: Duration) {
        self.set(
            &format!("timing.{stage}_ms"),
            format!("{:.3}", elapsed.as_secs_f64() * 1e3),
        );
    }

    /// Hash and record an emitted file.
    pub fn record_file(&mut self, name: &str, path: &Path) -> io::Result<()> {
        let data = fs::read(path)?;
        let mut hasher = Sha256::new();
        hasher.update(&data);
        let digest = hasher.finalize();
        let mut sha256 = String::with_capacity(64);
        for byte in digest {
            sha256.push_str(&format!("{byte:02x}"));
        }
        self.files.push(FileRecord {
            name: name.to_string(),
            sha256,
            bytes: data.len() as u64,
        });
        Ok(())
    }

    pub fn files(&self) -> &[FileRecord] {
        &self.files
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (key, value) in &self.pairs {
            writeln!(w, "{key} = {value}")?;
        }
        for f in &self.files {
            writeln!(w, "file {} {} {}", f.name, f.sha256, f.bytes)?;
        }
        Ok(())
    }
}
