//! Output directory writer that stamps every file with the config hash.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::Resolved;
use crate::error::CliError;

pub struct OutputDir {
    dir: PathBuf,
    hash: String,
    written: Vec<String>,
}

impl OutputDir {
    /// Creates the directory and writes `config.resolved.toml`.
    pub fn create(resolved: &Resolved) -> Result<Self, CliError> {
        let dir = resolved.config.output.dir.clone();
        std::fs::create_dir_all(&dir)
            .map_err(|source| CliError::Output { path: dir.display().to_string(), source })?;
        let mut out = OutputDir { dir, hash: resolved.hash.clone(), written: Vec::new() };
        out.bytes("config.resolved.toml", resolved.to_toml().as_bytes())?;
        Ok(out)
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    /// Comment line that opens every CSV file.
    pub fn csv_header(&self) -> String {
        format!("# config_hash: {}\n", self.hash)
    }

    pub fn bytes(&mut self, name: &str, data: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, data).map_err(|source| CliError::Output { path: path.display().to_string(), source })?;
        self.written.push(name.to_string());
        Ok(path)
    }

    /// Writes `body` prefixed by [`Self::csv_header`]. The body carries its
    /// own column header line.
    pub fn csv(&mut self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let text = format!("{}{body}", self.csv_header());
        self.bytes(name, text.as_bytes())
    }

    /// Writes a JSON object with `config_hash` added to its top level.
    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<PathBuf, CliError> {
        let value = serde_json::to_value(value).expect("report serializes");
        let mut map = match value {
            Value::Object(m) => m,
            other => {
                let mut m = Map::new();
                m.insert("data".into(), other);
                m
            }
        };
        map.insert("config_hash".into(), Value::String(self.hash.clone()));
        let mut text = serde_json::to_string_pretty(&Value::Object(map)).expect("report serializes");
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }
}
