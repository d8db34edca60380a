//! Run manifests: inputs, configuration hash, seed and output hashes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

/// Files below `root` in sorted order, as paths relative to `root`.
pub fn list_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let entry = entry?;
            let p = entry.path();
            if entry.file_type()?.is_dir() {
                stack.push(p);
            } else if let Ok(rel) = p.strip_prefix(root) {
                out.push(rel.to_path_buf());
            }
        }
    }
    out.sort();
    Ok(out)
}

fn rel_string(p: &Path) -> String {
    p.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/")
}

impl Manifest {
    /// Hashes every file under `out` except an existing manifest.
    pub fn collect(command: &str, seed: u64, config_text: &str, inputs: &[PathBuf], out: &Path) -> Result<Self> {
        let inputs = inputs
            .iter()
            .filter(|p| p.is_file())
            .map(|p| Ok(FileHash { path: p.display().to_string(), sha256: file_hash(p)? }))
            .collect::<Result<Vec<_>>>()?;
        let mut outputs = Vec::new();
        for rel in list_files(out)? {
            if rel == Path::new(MANIFEST_FILE) {
                continue;
            }
            outputs.push(FileHash { path: rel_string(&rel), sha256: file_hash(&out.join(&rel))? });
        }
        Ok(Manifest {
            command: command.to_string(),
            seed,
            config_sha256: sha256_hex(config_text.as_bytes()),
            inputs,
            outputs,
        })
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// Hash over all output hashes, one value per run.
    pub fn outputs_digest(&self) -> String {
        let joined: String = self.outputs.iter().map(|f| format!("{} {}\n", f.sha256, f.path)).collect();
        sha256_hex(joined.as_bytes())
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
    fn collects_sorted_outputs_without_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("b")).unwrap();
        fs::write(dir.path().join("b/x.txt"), "x").unwrap();
        fs::write(dir.path().join("a.txt"), "a").unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "{}").unwrap();
        let m = Manifest::collect("synth", 7, "k = v", &[], dir.path()).unwrap();
        let paths: Vec<_> = m.outputs.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["a.txt", "b/x.txt"]);
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"a"));
    }
}
