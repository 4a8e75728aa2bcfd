//! Provenance envelopes and file I/O.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use conefield::hash::sha256_hex;

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Input name to SHA-256 of its bytes.
    pub inputs: BTreeMap<String, String>,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
}

/// JSON output: provenance, the graph the result refers to, and the result.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Document<T> {
    pub provenance: Provenance,
    pub graph: Option<String>,
    pub result: T,
}

/// Collects input hashes while files are read.
pub struct Run {
    command: String,
    inputs: BTreeMap<String, String>,
    params: serde_json::Value,
    seed: Option<u64>,
}

impl Run {
    pub fn new(command: &str, params: serde_json::Value, seed: Option<u64>) -> Self {
        Run {
            command: command.to_string(),
            inputs: BTreeMap::new(),
            params,
            seed,
        }
    }

    /// Reads a file, recording its hash under `name`.
    pub fn read(&mut self, name: &str, path: &Path) -> Result<String, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
        self.inputs.insert(name.to_string(), sha256_hex(text.as_bytes()));
        Ok(text)
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            tool: "conefield".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command.clone(),
            inputs: self.inputs.clone(),
            params: self.params.clone(),
            seed: self.seed,
        }
    }

    pub fn write_json<T: Serialize>(&self, path: &Path, graph: Option<&str>, result: &T) -> Result<(), Failure> {
        let doc = Document {
            provenance: self.provenance(),
            graph: graph.map(str::to_string),
            result,
        };
        let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Data(e.to_string()))?;
        text.push('\n');
        write(path, &text)
    }

    /// Writes `body` behind a `# provenance` comment line.
    pub fn write_text(&self, path: &Path, body: &str) -> Result<(), Failure> {
        let head = serde_json::to_string(&self.provenance()).map_err(|e| Failure::Data(e.to_string()))?;
        write(path, &format!("# provenance {head}\n{body}"))
    }
}

pub fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

pub fn parse_document<T: DeserializeOwned>(text: &str, path: &Path) -> Result<Document<T>, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}
