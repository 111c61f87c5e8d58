//! Provenance stamped into every output file.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = "spinlab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the JSON-serialized run configuration. Output locations
    /// are not part of the configuration.
    pub config_sha256: String,
}

impl Meta {
    pub fn new<C: Serialize>(command: &str, seed: u64, config: &C) -> Self {
        let json = serde_json::to_vec(&(command, seed, config)).expect("configurations serialize");
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            seed,
            config_sha256: sha256_hex(&json),
        }
    }

    /// `# key=value` lines for text formats.
    pub fn comment_block(&self) -> String {
        format!(
            "# tool={}\n# version={}\n# command={}\n# seed={}\n# config_sha256={}\n",
            self.tool, self.version, self.command, self.seed, self.config_sha256
        )
    }

    /// Recovers the metadata from the leading `#` lines of a text file.
    pub fn from_comments(text: &str) -> Option<Self> {
        let get = |key: &str| {
            text.lines()
                .take_while(|l| l.starts_with('#'))
                .find_map(|l| l.trim_start_matches('#').trim().strip_prefix(key)?.strip_prefix('='))
                .map(str::to_owned)
        };
        Some(Self {
            tool: get("tool")?,
            version: get("version")?,
            command: get("command")?,
            seed: get("seed")?.parse().ok()?,
            config_sha256: get("config_sha256")?,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_tracks_config_and_seed() {
        let a = Meta::new("simulate", 1, &("qm", 10));
        assert_eq!(a, Meta::new("simulate", 1, &("qm", 10)));
        assert_ne!(a.config_sha256, Meta::new("simulate", 2, &("qm", 10)).config_sha256);
        assert_ne!(a.config_sha256, Meta::new("simulate", 1, &("qm", 11)).config_sha256);
        assert_eq!(a.config_sha256.len(), 64);
    }

    #[test]
    fn comment_block_round_trip() {
        let m = Meta::new("geodesic", u64::MAX, &());
        let text = format!("{}s,t\n1,2\n", m.comment_block());
        assert_eq!(Meta::from_comments(&text), Some(m));
        assert_eq!(Meta::from_comments("s,t\n"), None);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
