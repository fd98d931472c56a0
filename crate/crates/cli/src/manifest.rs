use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const VERSION: &str = match option_env!("WRSN_GIT_DESCRIBE") {
    Some(v) => v,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

/// Record tying every artifact of one command invocation together.
///
/// The id hashes the command, the resolved configuration text, the seeds and
/// the tool version, so repeated runs with identical inputs share an id.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub id: String,
    pub command: String,
    pub version: String,
    pub scenario_path: Option<PathBuf>,
    pub algo_path: Option<PathBuf>,
    pub checkpoint_path: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub eval_seeds: Vec<u64>,
    /// Resolved configuration actually used.
    pub scenario: String,
    pub algo: Option<String>,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub artifacts: Vec<String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

impl RunManifest {
    pub fn new(command: &str, out_dir: &Path, seed: u64, eval_seeds: &[u64], scenario: String, algo: Option<String>) -> Self {
        let mut h = Sha256::new();
        for part in [command, VERSION, &scenario, algo.as_deref().unwrap_or("")] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        h.update(seed.to_le_bytes());
        for s in eval_seeds {
            h.update(s.to_le_bytes());
        }
        Self {
            id: hex::encode(&h.finalize()[..8]),
            command: command.to_string(),
            version: VERSION.to_string(),
            scenario_path: None,
            algo_path: None,
            checkpoint_path: None,
            out_dir: out_dir.to_path_buf(),
            seed,
            eval_seeds: eval_seeds.to_vec(),
            scenario,
            algo,
            started_unix: now(),
            finished_unix: None,
            artifacts: Vec::new(),
        }
    }

    /// Mixes extra inputs (such as checkpoint bytes) into the id.
    pub fn bind(&mut self, extra: &[u8]) {
        let mut h = Sha256::new();
        h.update(self.id.as_bytes());
        h.update(extra);
        self.id = hex::encode(&h.finalize()[..8]);
    }

    pub fn write(&mut self) -> Result<(), CliError> {
        self.finished_unix = Some(now());
        let path = self.out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::output(&path, e))
    }
}
