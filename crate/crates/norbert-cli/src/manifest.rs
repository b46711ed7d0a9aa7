//! Run manifests: every subcommand records its resolved configuration,
//! input hashes, seed, and planned outputs before writing anything, so a
//! deterministic run can be reproduced byte for byte from the manifest.

use norbert_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub input_hashes: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub deterministic: bool,
    /// Wall-clock start; the only field allowed to differ between identical
    /// deterministic runs.
    pub timestamp_unix: f64,
}

impl RunManifest {
    pub fn new<C: Serialize>(
        subcommand: &str,
        config: &C,
        inputs: &[&Path],
        seed: Option<u64>,
        outputs: &[&Path],
        deterministic: bool,
    ) -> Result<Self> {
        let mut input_hashes = BTreeMap::new();
        for path in inputs {
            input_hashes.insert(path.display().to_string(), sha256_file(path)?);
        }
        Ok(RunManifest {
            subcommand: subcommand.to_string(),
            config: serde_json::to_value(config)
                .map_err(|e| Error::format(format!("manifest config: {e}")))?,
            input_hashes,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            deterministic,
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
        })
    }

    /// Write to `<workdir>/<subcommand>.manifest.json`. Called before any
    /// output file is produced.
    pub fn write(&self, workdir: &Path) -> Result<PathBuf> {
        let path = workdir.join(format!("{}.manifest.json", self.subcommand));
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("manifest: {e}")))?;
        fs::write(&path, json)?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut h = Sha256::new();
    h.update(&bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}
