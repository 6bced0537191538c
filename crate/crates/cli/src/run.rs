//! Run configuration, provenance and report output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything that determines a run's outputs. Inputs are identified by
/// content digest, so the hash does not depend on where files live; the
/// output directory and worker count are deliberately left out.
#[derive(Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub tool_version: &'static str,
    pub inputs: BTreeMap<String, String>,
    pub params: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_owned(),
            tool_version: TOOL_VERSION,
            inputs: BTreeMap::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| loads_core::Error::Io {
            path: path.to_owned(),
            source: e,
        })?;
        self.inputs.insert(role.to_owned(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn optional_input(&mut self, role: &str, path: Option<&Path>) -> Result<()> {
        match path {
            Some(p) => self.input(role, p),
            None => Ok(()),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) {
        self.params.insert(
            key.to_owned(),
            serde_json::to_value(value).expect("parameter serializes"),
        );
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool_version: &'static str,
    pub config_hash: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

/// Writes reports into one directory, stamping each with provenance.
pub struct Output {
    dir: PathBuf,
    provenance: Provenance,
}

impl Output {
    pub fn create(dir: &Path, config: &RunConfig) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| loads_core::Error::Io {
            path: dir.to_owned(),
            source: e,
        })?;
        let out = Output {
            dir: dir.to_owned(),
            provenance: Provenance {
                tool_version: TOOL_VERSION,
                config_hash: config.hash(),
            },
        };
        out.json("run_config.json", &serde_json::json!({ "run_config": config }))?;
        Ok(out)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// `body` must serialize as a JSON object.
    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<()> {
        let env = Envelope {
            provenance: &self.provenance,
            body,
        };
        let mut text = serde_json::to_string_pretty(&env)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV text preceded by a `#` provenance line.
    pub fn csv(&self, name: &str, body: &str) -> Result<()> {
        let text = format!(
            "# loads {} config {}\n{body}",
            self.provenance.tool_version, self.provenance.config_hash
        );
        self.write(name, text.as_bytes())
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| loads_core::Error::Io { path, source: e })?;
        Ok(())
    }
}
