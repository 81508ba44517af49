use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cosmos::config::CosmosConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: CosmosConfig,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}

pub fn digest_inputs(paths: &[&Path]) -> Result<Vec<InputDigest>> {
    paths
        .iter()
        .map(|p| Ok(InputDigest { path: p.to_path_buf(), sha256: sha256_file(p)? }))
        .collect()
}

/// Under strict reproducibility, a previous manifest of the same command in
/// the output directory must list identical input digests.
pub fn check_previous(dir: &Path, command: &str, inputs: &[InputDigest]) -> Result<()> {
    let path = dir.join(MANIFEST_NAME);
    if !path.exists() {
        return Ok(());
    }
    let prev: RunManifest = serde_json::from_reader(BufReader::new(File::open(&path)?))
        .with_context(|| format!("reading {}", path.display()))?;
    if prev.command != command {
        return Ok(());
    }
    for cur in inputs {
        if let Some(old) = prev.inputs.iter().find(|d| d.path == cur.path) {
            if old.sha256 != cur.sha256 {
                bail!(cosmos::CosmosError::InvalidInput(format!(
                    "input digest mismatch for {} (manifest {}, now {})",
                    cur.path.display(),
                    old.sha256,
                    cur.sha256
                )));
            }
        }
    }
    Ok(())
}

pub fn write(dir: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(MANIFEST_NAME);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(f, manifest)?;
    Ok(path)
}
