//! Experiment runner behind the `gietlab` binary: scenario configuration,
//! the built-in scenarios, and artifact writing with a run manifest.

pub mod config;
pub mod error;
pub mod scenarios;

pub use config::{Budget, GietSource, Samples, Scenario, ScenarioConfig};
pub use error::CliError;
pub use scenarios::{run_scenario, ScenarioOutput};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Bumped whenever a summary or CSV layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub precision_bits: u32,
    pub config_sha256: String,
    pub files: Vec<ManifestEntry>,
}

fn pretty(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Write `summary.json`, the CSV series, `config.json` and `manifest.json`
/// into `dir`. Returns the manifest.
pub fn write_outputs(dir: &Path, cfg: &ScenarioConfig, out: &ScenarioOutput) -> Result<Manifest, CliError> {
    std::fs::create_dir_all(dir)?;
    let mut cfg_doc = cfg.clone();
    cfg_doc.out = None;
    let mut files = vec![("summary.json".to_string(), pretty(&out.summary)), ("config.json".to_string(), pretty(&cfg_doc))];
    files.extend(out.series.iter().cloned());
    let mut entries = Vec::new();
    for (name, body) in &files {
        std::fs::write(dir.join(name), body)?;
        entries.push(ManifestEntry { name: name.clone(), bytes: body.len(), sha256: hex::encode(Sha256::digest(body.as_bytes())) });
    }
    let manifest = Manifest {
        tool: "gietlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        schema_version: SCHEMA_VERSION,
        scenario: cfg.scenario.name().into(),
        seed: cfg.seed,
        precision_bits: cfg.precision_bits,
        config_sha256: cfg.hash(),
        files: entries,
    };
    std::fs::write(dir.join("manifest.json"), pretty(&manifest))?;
    Ok(manifest)
}
