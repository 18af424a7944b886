use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{CliError, CliResult};

/// What a subcommand produced, before it is written out.
#[derive(Debug, Default)]
pub struct Record {
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    /// Files still to be written, relative to the output directory.
    pub files: Vec<(String, Vec<u8>)>,
    /// Files the command already wrote itself.
    pub written: Vec<String>,
    /// Lines echoed to stdout.
    pub summary: Vec<String>,
    /// A numeric contract that failed; the run still writes its outputs.
    pub violation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: String,
    /// Fully resolved command line, config file entries included.
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub outputs: Vec<Artifact>,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub summary: Vec<String>,
    #[serde(skip)]
    pub violation: Option<String>,
}

pub const MANIFEST: &str = "manifest.json";

impl RunManifest {
    pub fn new(subcommand: &str, args: &[String], record: Record, out: &Path, wall_time_s: f64) -> CliResult<Self> {
        fs::create_dir_all(out)?;
        let mut outputs = Vec::new();
        for (name, bytes) in &record.files {
            let path = out.join(name);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(&path, bytes)?;
            outputs.push(Artifact {
                path: name.clone(),
                sha256: hex::encode(Sha256::digest(bytes)),
            });
        }
        for name in &record.written {
            let bytes = fs::read(out.join(name))?;
            outputs.push(Artifact {
                path: name.clone(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(Self {
            subcommand: subcommand.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            args: args.to_vec(),
            config: record.config,
            seed: record.seed,
            outputs,
            wall_time_s,
            summary: record.summary,
            violation: record.violation,
        })
    }

    pub fn write(&self, out: &Path) -> CliResult<PathBuf> {
        let path = out.join(MANIFEST);
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Io(e.into()))?;
        fs::write(&path, text + "\n")?;
        Ok(path)
    }

    pub fn read_args(path: &Path) -> CliResult<Vec<String>> {
        let text = fs::read_to_string(path)?;
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Ok(m.args)
    }
}
