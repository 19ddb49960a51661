//! Run manifests: what a command read, wrote and was configured with.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use phishguard::Error;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::commands::{self, Invocation, FORMAT_VERSION};
use crate::config::RunConfig;
use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub invocation: Invocation,
    pub config: RunConfig,
    pub inputs: Vec<InputFile>,
    /// File names inside the output directory.
    pub outputs: Vec<String>,
    pub duration_secs: f64,
}

fn sha256_file(p: &Path) -> phishguard::Result<String> {
    let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(
        invocation: Invocation,
        config: RunConfig,
        inputs: &[PathBuf],
        outputs: Vec<String>,
        duration_secs: f64,
    ) -> phishguard::Result<Self> {
        let inputs = inputs
            .iter()
            .map(|p| {
                Ok(InputFile {
                    path: p.clone(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<phishguard::Result<_>>()?;
        Ok(RunManifest {
            format_version: FORMAT_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            invocation,
            config,
            inputs,
            outputs,
            duration_secs,
        })
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}-manifest.json")
    }
}

pub fn write(m: &RunManifest, dir: &Path) -> phishguard::Result<()> {
    let p = dir.join(RunManifest::file_name(m.invocation.name()));
    fs::write(&p, serde_json::to_string_pretty(m)? + "\n").map_err(|e| Error::io(&p, e))
}

/// Re-executes the recorded invocation with the recorded configuration.
pub fn replay(manifest_path: &Path, out_dir: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(Error::from)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported manifest format_version {}", m.format_version)).into());
    }
    if m.tool_version != env!("CARGO_PKG_VERSION") {
        warn!(
            "manifest written by version {}, replaying with {}",
            m.tool_version,
            env!("CARGO_PKG_VERSION")
        );
    }
    for input in &m.inputs {
        match sha256_file(&input.path) {
            Ok(h) if h == input.sha256 => {}
            Ok(_) => warn!("{} changed since the recorded run", input.path.display()),
            Err(e) => return Err(e.into()),
        }
    }
    m.config.validate()?;
    commands::execute(&m.invocation, &m.config, out_dir)
}
