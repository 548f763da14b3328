use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Everything needed to reproduce a run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    /// Wall-clock creation time; the only non-reproducible field.
    pub created_unix_s: u64,
    pub seed: u64,
    pub config: Config,
    pub artifacts: BTreeMap<String, Artifact>,
}

impl RunManifest {
    pub fn new(config: Config) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            seed: config.run.seed,
            config,
            artifacts: BTreeMap::new(),
        }
    }

    pub fn load(dir: &Path) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Err(CliError::Missing(vec![path.display().to_string()]));
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Malformed {
            path,
            message: e.to_string(),
        })
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }

    /// Records `name` (a file inside `dir`) with its digest.
    pub fn add_artifact(&mut self, dir: &Path, name: &str) -> CliResult<()> {
        let path = dir.join(name);
        let (sha256, bytes) = sha256_file(&path).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.insert(
            name.to_string(),
            Artifact {
                path: name.to_string(),
                sha256,
                bytes,
            },
        );
        Ok(())
    }
}

/// Hex SHA-256 and length of a file.
pub fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((hex::encode(hasher.finalize()), total))
}
