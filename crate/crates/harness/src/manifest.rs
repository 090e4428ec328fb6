//! Run manifest: config hash, versions, wall times and a checksum for every
//! output file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the run directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub verb: String,
    pub config_sha256: String,
    pub seed: u64,
    pub replicates: usize,
    pub threads: usize,
    pub wall_seconds: f64,
    pub replicate_wall_seconds: Vec<f64>,
    pub failed_replicates: Vec<usize>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect(root, &p, out)?;
        } else if p.strip_prefix(root).map(|r| r != Path::new(MANIFEST_FILE)) == Ok(true) {
            out.push(p);
        }
    }
    Ok(())
}

/// Every file under `root` except the manifest, sorted by relative path.
pub fn list_files(root: &Path) -> Result<Vec<FileEntry>, HarnessError> {
    let mut paths = Vec::new();
    collect(root, root, &mut paths)?;
    let mut entries = paths
        .iter()
        .map(|p| {
            let bytes = std::fs::read(p)?;
            let rel = p
                .strip_prefix(root)
                .expect("collected under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            Ok(FileEntry {
                path: rel,
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(entries)
}

impl Manifest {
    pub fn write(&self, root: &Path) -> Result<(), HarnessError> {
        std::fs::write(root.join(MANIFEST_FILE), serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read(root: &Path) -> Result<Self, HarnessError> {
        Ok(serde_json::from_slice(&std::fs::read(root.join(MANIFEST_FILE))?)?)
    }

    /// Files whose current checksum differs from the recorded one, or that
    /// are missing.
    pub fn stale_files(&self, root: &Path) -> Vec<String> {
        self.files
            .iter()
            .filter(|f| match std::fs::read(root.join(&f.path)) {
                Ok(b) => sha256_hex(&b) != f.sha256,
                Err(_) => true,
            })
            .map(|f| f.path.clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_abc() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn listing_skips_the_manifest_and_recurses() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("a")).unwrap();
        std::fs::write(dir.path().join("a/x.csv"), "1").unwrap();
        std::fs::write(dir.path().join("b.csv"), "22").unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), "{}").unwrap();
        let files = list_files(dir.path()).unwrap();
        let names: Vec<_> = files.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(names, ["a/x.csv", "b.csv"]);
        assert_eq!(files[1].bytes, 2);
    }
}
