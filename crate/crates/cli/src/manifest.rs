//! Run manifest: what was run, with which config, and hashes of every output.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub config_hash: String,
    pub started_at: String,
    pub finished_at: String,
    /// ok, failed (a check or solver did not succeed) or error.
    pub status: String,
    pub exit_code: i32,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes each file into `dir` and returns its manifest entry.
pub fn write_artifacts(dir: &Path, files: &[(String, Vec<u8>)]) -> std::io::Result<Vec<Artifact>> {
    std::fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|(name, data)| {
            std::fs::write(dir.join(name), data)?;
            Ok(Artifact { path: name.clone(), sha256: sha256_hex(data), bytes: data.len() })
        })
        .collect()
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    /// Names of artifacts that are missing or whose hash no longer matches.
    pub fn invalid_artifacts(&self, dir: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|a| std::fs::read(dir.join(&a.path)).map(|d| sha256_hex(&d) != a.sha256).unwrap_or(true))
            .map(|a| a.path.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let arts = write_artifacts(dir.path(), &[("a.csv".into(), b"x,y\n1,2\n".to_vec()), ("b.json".into(), b"{}".to_vec())])
            .unwrap();
        let m = RunManifest {
            toolkit_version: "0".into(),
            command: "gamma".into(),
            config_hash: sha256_hex(b""),
            started_at: "t0".into(),
            finished_at: "t1".into(),
            status: "ok".into(),
            exit_code: 0,
            artifacts: arts,
        };
        m.write(dir.path()).unwrap();
        let back = RunManifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        assert!(back.invalid_artifacts(dir.path()).is_empty());
        std::fs::write(dir.path().join("a.csv"), b"x,y\n1,3\n").unwrap();
        std::fs::remove_file(dir.path().join("b.json")).unwrap();
        assert_eq!(back.invalid_artifacts(dir.path()), vec!["a.csv".to_string(), "b.json".to_string()]);
    }
}
