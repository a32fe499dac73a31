//! Seed derivation and output provenance headers.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = "suggest-audit";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable that, when set to `1`, suppresses wall-clock fields.
pub const DETERMINISTIC_ENV: &str = "SUGGEST_AUDIT_DETERMINISTIC";

/// Stage seed: the first eight bytes (little endian) of
/// `sha256(master_le ‖ stage)`.
pub fn derive_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Lowercase hex sha256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn deterministic_from_env() -> bool {
    std::env::var(DETERMINISTIC_ENV).is_ok_and(|v| v == "1")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_at: Option<DateTime<Utc>>,
}

impl Provenance {
    /// `config` is hashed as given; wall-clock time is recorded unless
    /// `deterministic`.
    pub fn new(config: &[u8], deterministic: bool) -> Self {
        Self {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            config_hash: sha256_hex(config),
            seeds: BTreeMap::new(),
            generated_at: (!deterministic).then(Utc::now),
        }
    }

    pub fn with_seed(mut self, stage: &str, seed: u64) -> Self {
        self.seeds.insert(stage.to_string(), seed);
        self
    }

    /// `# key: value` comment lines for CSV and JSON-lines outputs.
    pub fn comment_header(&self) -> String {
        let mut s = format!(
            "# tool: {} {}\n# config_sha256: {}\n",
            self.tool, self.version, self.config_hash
        );
        let seeds: Vec<String> = self.seeds.iter().map(|(k, v)| format!("{k}={v}")).collect();
        s.push_str(&format!("# seeds: {}\n", seeds.join(" ")));
        if let Some(t) = self.generated_at {
            s.push_str(&format!(
                "# generated_at: {}\n",
                t.format("%Y-%m-%dT%H:%M:%SZ")
            ));
        }
        s
    }
}
