use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance block embedded in every file a command writes.
///
/// Output paths are recorded relative to the output directory so that the
/// same invocation into a different directory still produces identical
/// bytes.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Option<String>,
    pub config_sha256: Option<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coordinate_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_strategy: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

impl RunManifest {
    pub fn new(command: &'static str, config: Option<&Path>) -> Result<Self> {
        let config_sha256 = config
            .map(|p| {
                let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
                Ok::<_, anyhow::Error>(hex::encode(Sha256::digest(&bytes)))
            })
            .transpose()?;
        Ok(Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: config.map(|p| p.display().to_string()),
            config_sha256,
            inputs: Vec::new(),
            outputs: Vec::new(),
            coordinate_mode: None,
            feature_strategy: None,
            seeds: Vec::new(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }

    /// Single-line form for `#` comment headers.
    pub fn comment(&self) -> String {
        format!("manifest {}", serde_json::to_string(self).expect("manifest serializes"))
    }
}

/// Writes through a sibling temporary file and renames it into place, so a
/// reader never sees a half-written output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = PathBuf::from(path);
    tmp.as_mut_os_string().push(".tmp");
    std::fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}

pub fn commented(manifest: &RunManifest, body: &str) -> String {
    format!("# {}\n{body}", manifest.comment())
}
