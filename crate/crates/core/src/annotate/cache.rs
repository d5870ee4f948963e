use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Key of one cached endpoint response.
pub fn cache_key(input_hash: &str, prompt_hash: &str, model_id: &str) -> String {
    let mut h = Sha256::new();
    for part in [input_hash, prompt_hash, model_id] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    model: String,
    response: String,
}

/// Response cache: one JSON record per key under `dir/<key>.json`, mirrored in memory.
///
/// Distinct keys may be read and inserted concurrently. Files are written to a
/// temporary name and renamed into place.
#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: RwLock<HashMap<String, String>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(ResponseCache { dir: Some(dir), memory: RwLock::default() })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get(&self, key: &str) -> Result<Option<String>> {
        if let Some(hit) = self.memory.read().unwrap().get(key) {
            return Ok(Some(hit.clone()));
        }
        let Some(dir) = &self.dir else { return Ok(None) };
        let path = dir.join(format!("{key}.json"));
        match fs::read_to_string(&path) {
            Ok(text) => {
                let record: Record =
                    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
                self.memory.write().unwrap().insert(key.to_owned(), record.response.clone());
                Ok(Some(record.response))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn insert(&self, key: &str, model: &str, response: &str) -> Result<()> {
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{key}.json"));
            let tmp = dir.join(format!(".{key}.{}.tmp", std::process::id()));
            let record = Record { model: model.to_owned(), response: response.to_owned() };
            let text = crate::corpus::json::to_sorted_string(&record)?;
            fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        }
        self.memory.write().unwrap().insert(key.to_owned(), response.to_owned());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_records_survive_a_new_instance() {
        let dir = tempfile::tempdir().unwrap();
        let key = cache_key(&content_hash(b"img"), "p", "m");
        ResponseCache::on_disk(dir.path()).unwrap().insert(&key, "m", "DESC").unwrap();
        let fresh = ResponseCache::on_disk(dir.path()).unwrap();
        assert_eq!(fresh.get(&key).unwrap().as_deref(), Some("DESC"));
        assert!(dir.path().join(format!("{key}.json")).exists());
        assert_eq!(fresh.get("absent").unwrap(), None);
    }

    #[test]
    fn keys_separate_fields() {
        assert_ne!(cache_key("ab", "c", "m"), cache_key("a", "bc", "m"));
    }
}
