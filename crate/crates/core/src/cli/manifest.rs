use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::montecarlo::ExperimentConfig;

/// Provenance record written next to every output as `<out>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<PathBuf>,
}

pub(crate) fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over the resolved configuration (defaults and derived β
/// included), rendered as lowercase hex.
pub fn config_digest(cfg: &ExperimentConfig) -> String {
    sha256_hex(format!("{cfg:?}").as_bytes())
}

impl RunManifest {
    pub(crate) fn start(config_digest: String) -> Self {
        Self {
            config_digest,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            outputs: Vec::new(),
        }
    }

    pub fn path_for(out: &Path) -> PathBuf {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        out.with_file_name(name)
    }

    /// Stamps the finish time and writes the manifest beside `out`.
    pub(crate) fn finish(mut self, out: &Path) -> Result<Self> {
        self.finished_unix_ms = now_ms();
        let json = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)?;
        std::fs::write(Self::path_for(out), json + "\n")?;
        Ok(self)
    }
}
