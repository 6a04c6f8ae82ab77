//! Run manifests: enough provenance to reproduce every artifact.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Content hash binding the raw config text to the effective seed and the
/// noise hook. Every CSV row carries its short form.
pub fn config_hash(config_text: &str, seed: u64, noise_off: bool) -> String {
    let mut hasher = Sha256::new();
    hasher.update(config_text.as_bytes());
    hasher.update(seed.to_le_bytes());
    hasher.update([u8::from(noise_off)]);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn short_hash(full: &str) -> &str {
    &full[..16.min(full.len())]
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub kind: String,
    pub seed: u64,
    pub noise_off: bool,
    pub config_hash: String,
    pub created_utc: String,
    /// Echo of the parsed config.
    pub config: Value,
    /// Resolved quantities (c, epsilon, gamma, offers, ...) per experiment.
    pub resolved: Value,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

pub fn now_utc() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}
