//! Run manifests: `<output>.manifest.json` next to the primary output,
//! recording the arguments and parsed configuration needed to replay a run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, Command};

#[derive(Serialize)]
struct Output {
    path: PathBuf,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    argv: &'a [String],
    config: &'a Command,
    outputs: Vec<Output>,
}

pub fn path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Writes the manifest for a finished command; `outputs[0]` names it.
pub fn write(command: &Command, argv: &[String], outputs: &[PathBuf]) -> Result<(), CliError> {
    let Some(primary) = outputs.first() else { return Ok(()) };
    let mut files = Vec::with_capacity(outputs.len());
    for p in outputs {
        let data = fs::read(p)?;
        files.push(Output { path: p.clone(), bytes: data.len() as u64, sha256: hex::encode(Sha256::digest(&data)) });
    }
    let manifest = Manifest { tool: "bet", version: env!("CARGO_PKG_VERSION"), argv, config: command, outputs: files };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
    text.push('\n');
    fs::write(path_for(primary), text)?;
    Ok(())
}
