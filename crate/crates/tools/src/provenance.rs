//! Stamps every output with the tool version, the seed and a hash of the
//! effective configuration.

use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = concat!("carlo ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn new(seed: u64, config_text: &str) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_string(),
            seed,
            config_hash: sha256_hex(config_text.as_bytes())[..16].to_string(),
        }
    }

    /// One-line comment form used at the top of CSV and PGM files.
    pub fn comment(&self) -> String {
        format!(
            "# tool={} seed={} config={}",
            self.tool_version.replace(' ', "/"),
            self.seed,
            self.config_hash
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash over several named byte blobs, order-sensitive.
pub fn sha256_of_parts<'a>(parts: impl IntoIterator<Item = (&'a str, &'a [u8])>) -> String {
    let mut h = Sha256::new();
    for (name, bytes) in parts {
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
