//! Content-addressed result cache. Each entry is a JSON blob holding the
//! exact bytes of every output a command produced.

use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::output::write_atomic;

/// Output files and standard output of one command run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    /// `(role, bytes)` in a fixed order; roles map to paths at write time.
    pub files: Vec<(String, Vec<u8>)>,
    pub stdout: String,
}

impl Outputs {
    pub fn file(&mut self, role: &str, bytes: Vec<u8>) {
        self.files.push((role.to_string(), bytes));
    }

    fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for (role, bytes) in &self.files {
            hasher.update(role.as_bytes());
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
        }
        hasher.update(self.stdout.as_bytes());
        hex::encode(hasher.finalize())
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    digest: String,
    outputs: Outputs,
}

/// Hex SHA-256 of the canonical key document (network hash, command,
/// parameters, tolerances and the crate version).
pub fn key(doc: &Value) -> String {
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))
}

pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new(dir: PathBuf) -> Self {
        Cache { dir }
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    /// A stored result, or `None`. Unreadable or inconsistent entries are
    /// deleted with a warning.
    pub fn get(&self, key: &str) -> Option<Outputs> {
        let path = self.path(key);
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<Entry>(&bytes) {
            Ok(e) if e.key == key && e.outputs.digest() == e.digest => Some(e.outputs),
            _ => {
                log::warn!("discarding corrupt cache entry {}", path.display());
                let _ = std::fs::remove_file(&path);
                None
            }
        }
    }

    pub fn put(&self, key: &str, outputs: &Outputs) -> Result<()> {
        let entry = Entry { key: key.to_string(), digest: outputs.digest(), outputs: outputs.clone() };
        write_atomic(&self.path(key), &serde_json::to_vec(&entry)?)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}
