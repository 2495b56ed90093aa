//! Provenance records written next to every output.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use ccsl::synthgen::GenSettings;
use ccsl::FitConfig;
use serde::{Deserialize, Serialize};

use crate::config::GridCell;

/// Schema version of every JSON and CSV output.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Flag,
    Config,
    Entropy,
}

/// Resolved settings a command ran with.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub generation: Option<GenSettings>,
    pub fit: Option<FitConfig>,
    pub grid: Option<Vec<GridCell>>,
    pub realizations: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub config: ConfigSnapshot,
    /// SHA-256 of every input file, keyed by file name.
    pub inputs: BTreeMap<String, String>,
    /// Every file the command wrote.
    pub outputs: Vec<String>,
    /// SHA-256 of the outputs that do not embed this manifest.
    pub output_digests: BTreeMap<String, String>,
    /// Seconds since the Unix epoch; absent in reproducible mode.
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, seed_source: SeedSource, reproducible: bool) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            seed_source,
            config: ConfigSnapshot::default(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            output_digests: BTreeMap::new(),
            started_at: (!reproducible).then(now),
            finished_at: None,
        }
    }

    pub fn finish(&mut self) {
        if self.started_at.is_some() {
            self.finished_at = Some(now());
        }
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
