//! Append-only response store: one JSON file per cache key.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use disco_core::query::{GatewayError, QueryResponse};

#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

fn cache_err(e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Cache(e.to_string())
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(cache_err)?;
        Ok(Self {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str) -> PathBuf {
        let shard = key.get(..2).unwrap_or("__");
        self.dir.join(shard).join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<QueryResponse>, GatewayError> {
        match fs::read(self.path(key)) {
            Ok(bytes) => serde_json::from_slice(&bytes).map(Some).map_err(cache_err),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(cache_err(e)),
        }
    }

    /// Stores `response` unless the key is already present. The record is
    /// written to a temporary file and renamed so readers never see a partial one.
    pub fn put(&self, key: &str, response: &QueryResponse) -> Result<(), GatewayError> {
        let path = self.path(key);
        let _guard = self.write_lock.lock().map_err(cache_err)?;
        if path.exists() {
            return Ok(());
        }
        let parent = path.parent().expect("cache path has a shard directory");
        fs::create_dir_all(parent).map_err(cache_err)?;
        let mut stored = response.clone();
        stored.from_cache = false;
        let bytes = serde_json::to_vec(&stored).map_err(cache_err)?;
        let tmp = parent.join(format!(".{key}.tmp"));
        let mut f = fs::File::create(&tmp).map_err(cache_err)?;
        f.write_all(&bytes).map_err(cache_err)?;
        f.sync_all().map_err(cache_err)?;
        fs::rename(&tmp, &path).map_err(cache_err)
    }

    pub fn len(&self) -> usize {
        let Ok(shards) = fs::read_dir(&self.dir) else {
            return 0;
        };
        shards
            .flatten()
            .filter_map(|s| fs::read_dir(s.path()).ok())
            .flat_map(|entries| entries.flatten())
            .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn response(text: &str) -> QueryResponse {
        QueryResponse {
            raw_text: text.into(),
            token_distributions: None,
            from_cache: false,
            latency_ms: 12,
            backend_name: "b".into(),
        }
    }

    #[test]
    fn put_get_append_only() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        assert_eq!(cache.get("abcd").unwrap(), None);
        cache.put("abcd", &response("first")).unwrap();
        cache.put("abcd", &response("second")).unwrap();
        assert_eq!(cache.get("abcd").unwrap().unwrap().raw_text, "first");
        assert_eq!(cache.len(), 1);
    }
}
