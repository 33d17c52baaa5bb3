//! Run manifests: what went in, with which settings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
struct InputEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: Option<u64>,
    inputs: Vec<InputEntry>,
    flags: BTreeMap<String, serde_json::Value>,
}

fn sha256_hex(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes the manifest to `target`. Flags are the subcommand's settings
/// minus anything that cannot change the output (thread count).
pub fn write(
    target: &Path,
    command: &str,
    seed: Option<u64>,
    inputs: &[PathBuf],
    flags: &impl Serialize,
) -> Result<(), CliError> {
    let mut entries = Vec::new();
    for path in inputs {
        entries.push(InputEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(path)?,
        });
    }
    let mut flags: BTreeMap<String, serde_json::Value> = match serde_json::to_value(flags) {
        Ok(serde_json::Value::Object(map)) => map.into_iter().collect(),
        _ => BTreeMap::new(),
    };
    flags.remove("jobs");
    let manifest = Manifest {
        tool: "revpref",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        inputs: entries,
        flags,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(target, text + "\n").map_err(|e| CliError::io(target, e))
}

/// `out.csv` → `out.csv.manifest.json`; a directory gets `manifest.json`.
pub fn path_for(output: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        output.join("manifest.json")
    } else {
        let mut name = output.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        output.with_file_name(name)
    }
}
