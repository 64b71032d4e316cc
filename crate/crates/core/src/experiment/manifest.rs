//! Content manifests for artifact directories: each output file is named
//! with its sha-256 digest, plus one digest over the whole set. Two runs
//! produced the same artifacts exactly when their combined digests match,
//! which turns reproducibility checks into a single string comparison.

use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// `/`-separated path relative to the artifact directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Sorted by path.
    pub files: Vec<ManifestEntry>,
    /// Digest over the sorted `path\nsha256\n` lines. Paths are relative,
    /// so the value is independent of where the directory lives.
    pub combined: String,
}

impl Manifest {
    /// Hash the named files under `dir`.
    pub fn compute(dir: &Path, rel_paths: &[&str]) -> Result<Self> {
        let mut paths: Vec<&str> = rel_paths.to_vec();
        paths.sort_unstable();
        for pair in paths.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::usage(format!("manifest: duplicate path `{}`", pair[0])));
            }
        }
        let mut files = Vec::with_capacity(paths.len());
        for path in paths {
            files.push(ManifestEntry {
                path: path.to_string(),
                sha256: sha256_file(&dir.join(path))?,
            });
        }
        let combined = combined_digest(&files);
        Ok(Manifest {
            version: super::config::FORMAT_VERSION,
            files,
            combined,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| Error::format(format!("manifest encode: {e}")))?;
        fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let json = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let manifest: Manifest = serde_json::from_str(&json)
            .map_err(|e| Error::format(format!("manifest parse: {e}")))?;
        if manifest.combined != combined_digest(&manifest.files) {
            return Err(Error::format("manifest: combined digest does not match entries"));
        }
        Ok(manifest)
    }

    /// Re-hash every listed file on disk and compare against the stored
    /// digests; any drift is a protocol error naming the file.
    pub fn verify(dir: &Path) -> Result<Self> {
        let manifest = Self::read(dir)?;
        for entry in &manifest.files {
            let actual = sha256_file(&dir.join(&entry.path))?;
            if actual != entry.sha256 {
                return Err(Error::protocol(format!(
                    "manifest: `{}` changed since it was sealed",
                    entry.path
                )));
            }
        }
        Ok(manifest)
    }
}

/// Streaming sha-256 of one file, as lowercase hex.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path)
        .map_err(|e| Error::protocol(format!("manifest: cannot read {}: {e}", path.display())))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex(&hasher.finalize()))
}

fn combined_digest(files: &[ManifestEntry]) -> String {
    let mut hasher = Sha256::new();
    for entry in files {
        hasher.update(entry.path.as_bytes());
        hasher.update(b"\n");
        hasher.update(entry.sha256.as_bytes());
        hasher.update(b"\n");
    }
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
