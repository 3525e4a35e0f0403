//! Output files, their sidecars and the hashed manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub seed: u64,
    pub passed: Option<bool>,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn hash_of(&self, file: &str) -> Option<&str> {
        self.files.iter().find(|e| e.file == file).map(|e| e.sha256.as_str())
    }
}

/// Collects the files of one run. Everything is written from one thread, in
/// the order of the calls.
pub struct ArtifactWriter {
    dir: PathBuf,
    config: Value,
    entries: Vec<ManifestEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path, config: &ExperimentConfig) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(ArtifactWriter {
            dir: dir.to_path_buf(),
            config: serde_json::to_value(config).expect("config serializes"),
            entries: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn write_raw(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.entries.push(ManifestEntry {
            file: name.to_string(),
            bytes: bytes.len(),
            sha256: hex::encode(Sha256::digest(bytes)),
        });
        Ok(())
    }

    /// Writes `name` with a header row plus `name.json` embedding the config.
    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write_raw(name, text.as_bytes())?;
        let sidecar = json!({
            "file": name,
            "columns": header,
            "rows": rows.len(),
            "config": self.config,
        });
        self.json(&format!("{name}.json"), &sidecar)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write_raw(name, text.as_bytes())
    }

    /// Writes `manifest.json`, which lists every other file.
    pub fn finish(self, experiment: &str, seed: u64, passed: Option<bool>) -> CliResult<Manifest> {
        let manifest = Manifest {
            experiment: experiment.to_string(),
            seed,
            passed,
            files: self.entries,
        };
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(manifest)
    }
}

/// Fixed formatting so reruns produce identical bytes.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.12e}")
    }
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}
