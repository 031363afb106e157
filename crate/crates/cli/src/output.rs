//! Output staging: every artifact is rendered in memory first and written
//! only once the whole run has succeeded, each through a temp file and rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub struct Outputs {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_vec_pretty(value).map_err(narx::Error::from)?;
        text.push(b'\n');
        self.files.push((name.to_string(), text));
        Ok(())
    }

    pub fn raw(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: impl IntoIterator<Item = Vec<String>>,
    ) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(narx::Error::from)?;
        for row in rows {
            w.write_record(&row).map_err(narx::Error::from)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io {
            path: self.dir.join(name),
            source: e.into_error(),
        })?;
        self.files.push((name.to_string(), bytes));
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Writes every staged file, then the manifest last.
    pub fn commit(mut self, mut manifest: Manifest) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.dir).map_err(|source| CliError::Io {
            path: self.dir.clone(),
            source,
        })?;
        manifest.outputs = self.names();
        manifest.outputs.push(MANIFEST.to_string());
        manifest.finished_at = now();
        self.json(MANIFEST, &manifest)?;
        for (name, bytes) in &self.files {
            let path = self.dir.join(name);
            let io = |source| CliError::Io {
                path: path.clone(),
                source,
            };
            let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
            tmp.write_all(bytes).map_err(io)?;
            tmp.persist(&path).map_err(|e| io(e.error))?;
        }
        Ok(())
    }
}

const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

pub fn input_file(path: &Path) -> Result<InputFile, CliError> {
    let bytes = std::fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(InputFile {
        path: path.to_path_buf(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl Manifest {
    pub fn start(command: &str, seed: Option<u64>, parameters: serde_json::Value, inputs: Vec<InputFile>) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            seed,
            parameters,
            inputs,
            started_at: now(),
            finished_at: String::new(),
            outputs: Vec::new(),
        }
    }
}

/// Shortest round-trip decimal form; `""` for missing values.
pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
