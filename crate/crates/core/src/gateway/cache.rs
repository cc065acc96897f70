use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::AgentResponse;
use crate::prompt::sha256_hex;

/// Identity of one cached completion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheKey {
    pub agent_id: String,
    pub model_name: String,
    pub prompt_hash: String,
    pub decoding_digest: String,
}

impl CacheKey {
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("key serializes");
        sha256_hex(json.as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    key: CacheKey,
    response: AgentResponse,
}

/// One file per entry, written atomically (temp file then rename), so
/// concurrent readers never observe a partial entry.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResponseCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.digest()))
    }

    /// Number of live entries.
    pub fn len(&self) -> usize {
        fs::read_dir(&self.dir)
            .map(|rd| {
                rd.filter_map(Result::ok)
                    .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                    .count()
            })
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, key: &CacheKey) -> Option<AgentResponse> {
        let path = self.path(key);
        let bytes = fs::read(&path).ok()?;
        match serde_json::from_slice::<CacheEntry>(&bytes) {
            Ok(entry) if entry.key == *key => Some(entry.response),
            _ => {
                self.quarantine(&path);
                None
            }
        }
    }

    pub fn store(&self, key: &CacheKey, response: &AgentResponse) -> std::io::Result<()> {
        let entry = CacheEntry {
            key: key.clone(),
            response: response.clone(),
        };
        let bytes = serde_json::to_vec_pretty(&entry).expect("entry serializes");
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(&bytes)?;
        tmp.flush()?;
        tmp.persist(self.path(key)).map_err(|e| e.error)?;
        Ok(())
    }

    fn quarantine(&self, path: &Path) {
        let qdir = self.dir.join("quarantine");
        let moved = fs::create_dir_all(&qdir)
            .and_then(|_| fs::rename(path, qdir.join(path.file_name().expect("entry has a name"))));
        match moved {
            Ok(()) => warn!(path = %path.display(), "quarantined corrupt cache entry"),
            Err(e) => warn!(path = %path.display(), error = %e, "could not quarantine cache entry"),
        }
    }
}
