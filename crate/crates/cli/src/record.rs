use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const RECORD_FILE: &str = "run_record.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output root.
    pub path: PathBuf,
    /// Hex SHA-256 of the file, or of the sorted `(path, hash)` listing for a
    /// directory.
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub config_sha256: String,
    pub wall_clock_s: f64,
    pub artifacts: Vec<Artifact>,
}

/// Append-only log of completed stages for one output root.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Configuration of the most recent stage, as TOML.
    pub config: String,
    pub stages: Vec<StageEntry>,
}

impl RunRecord {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(RECORD_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        std::fs::create_dir_all(root)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(root.join(RECORD_FILE), text)?;
        Ok(())
    }

    /// Most recent entry for `stage`.
    pub fn latest(&self, stage: &str) -> Option<&StageEntry> {
        self.stages.iter().rev().find(|e| e.stage == stage)
    }

    pub fn append(&mut self, config: String, entry: StageEntry) {
        self.config = config;
        self.stages.push(entry);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut listing = String::new();
        for (rel, hash) in tree_hashes(path, Path::new(""))? {
            listing.push_str(&format!("{}\t{hash}\n", rel.display()));
        }
        Ok(sha256_hex(listing.as_bytes()))
    } else {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(sha256_hex(&bytes))
    }
}

fn tree_hashes(dir: &Path, rel: &Path) -> Result<Vec<(PathBuf, String)>> {
    let mut names: Vec<_> = std::fs::read_dir(dir)?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<Result<_, _>>()?;
    names.sort();
    let mut out = Vec::new();
    for name in names {
        let full = dir.join(&name);
        let r = rel.join(&name);
        if full.is_dir() {
            out.extend(tree_hashes(&full, &r)?);
        } else {
            out.push((r, hash_path(&full)?));
        }
    }
    Ok(out)
}
