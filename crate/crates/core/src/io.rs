//! Artifact files and their manifests.
//!
//! Every stage writes its outputs, then a manifest naming the SHA-256 of each
//! input and output. A stage counts as complete only when its manifest exists
//! and every listed file still hashes to the recorded value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HplError, Result};

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| HplError::io(path, e))?;
    Ok(sha256_bytes(&bytes))
}

/// Writes through a temporary sibling and renames, so a crash never leaves
/// a truncated artifact under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| HplError::io(dir, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| HplError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HplError::io(path, e))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HplError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    write_atomic(path, &out)
}

/// Record of one stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    /// Hash of the configuration section this stage depends on.
    pub config_hash: String,
    /// File name to SHA-256, for upstream artifacts read by the stage.
    pub inputs: BTreeMap<String, String>,
    /// File name to SHA-256, for artifacts written by the stage.
    pub outputs: BTreeMap<String, String>,
    /// Stage-specific counts and parameters.
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn file_name(stage: &str) -> String {
        format!("{stage}.manifest.json")
    }

    pub fn path(dir: &Path, stage: &str) -> PathBuf {
        dir.join(Self::file_name(stage))
    }

    pub fn load(dir: &Path, stage: &str) -> Result<Manifest> {
        read_json(&Self::path(dir, stage))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_json(&Self::path(dir, &self.stage), self)
    }

    /// Hashes the named files in `dir`.
    pub fn hash_files(dir: &Path, names: &[&str]) -> Result<BTreeMap<String, String>> {
        names
            .iter()
            .map(|n| Ok((n.to_string(), sha256_file(&dir.join(n))?)))
            .collect()
    }

    /// True when every recorded output is present with the recorded hash.
    pub fn outputs_intact(&self, dir: &Path) -> bool {
        self.outputs
            .iter()
            .all(|(name, hash)| sha256_file(&dir.join(name)).is_ok_and(|h| &h == hash))
    }
}

/// SHA-256 of the canonical JSON of `value`.
pub fn config_hash<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(sha256_bytes(serde_json::to_string(value)?.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_bytes(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        write_jsonl(&dir.path().join("a.jsonl"), &[1, 2, 3]).unwrap();
        let m = Manifest {
            stage: "s".into(),
            seed: 1,
            config_hash: config_hash(&1).unwrap(),
            inputs: BTreeMap::new(),
            outputs: Manifest::hash_files(dir.path(), &["a.jsonl"]).unwrap(),
            details: serde_json::json!({"n": 3}),
        };
        m.save(dir.path()).unwrap();
        let back = Manifest::load(dir.path(), "s").unwrap();
        assert_eq!(back, m);
        assert!(back.outputs_intact(dir.path()));
        std::fs::write(dir.path().join("a.jsonl"), "1\n").unwrap();
        assert!(!back.outputs_intact(dir.path()));
        std::fs::remove_file(dir.path().join("a.jsonl")).unwrap();
        assert!(!back.outputs_intact(dir.path()));
    }
}
