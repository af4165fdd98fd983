use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use listk_core::OracleStats;
use serde::Serialize;

/// Record of one invocation, written next to its outputs.
///
/// Everything except the timestamps and the parallelism width is a pure
/// function of the inputs for non-remote oracles.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub parallelism: usize,
    pub started_at: String,
    pub finished_at: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle_stats: Option<OracleStats>,
    pub outputs: Vec<PathBuf>,
}

pub struct ManifestBuilder {
    command: &'static str,
    started: DateTime<Utc>,
}

impl ManifestBuilder {
    pub fn start(command: &'static str) -> Self {
        ManifestBuilder {
            command,
            started: Utc::now(),
        }
    }

    pub fn finish(
        self,
        config: impl Serialize,
        seed: Option<u64>,
        parallelism: usize,
        oracle_stats: Option<OracleStats>,
        outputs: Vec<PathBuf>,
    ) -> Result<RunManifest> {
        Ok(RunManifest {
            tool: "listk",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            parallelism,
            started_at: self.started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            oracle_stats,
            outputs,
        })
    }
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}

/// Explicit path, else `<out>.manifest.json` when there is an output file.
pub fn manifest_path(explicit: Option<&Path>, out: Option<&Path>) -> Option<PathBuf> {
    explicit.map(Path::to_path_buf).or_else(|| {
        out.map(|o| {
            let mut s = o.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        })
    })
}
