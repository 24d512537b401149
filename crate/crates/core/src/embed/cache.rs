//! Content-addressed embedding cache.
//!
//! Keyed by SHA-256 of `(model-id, text)`; one binary record per key under
//! `vectors/` (format in [`super::vecfile`]) plus an append-only `index.log`
//! listing stored digests. Writes are serialized through a mutex
//! (single-writer); reads go straight to the record files.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::error::Result;

use super::vecfile;

/// Cache key: hex SHA-256 of `model_id || 0x1f || text`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EmbeddingCacheKey {
    pub digest: String,
}

pub fn cache_key(model_id: &str, text: &str) -> EmbeddingCacheKey {
    let mut h = Sha256::new();
    h.update(model_id.as_bytes());
    h.update([0x1f]);
    h.update(text.as_bytes());
    let digest = h.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    EmbeddingCacheKey { digest: s }
}

pub struct EmbeddingCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl EmbeddingCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(dir.join("vectors"))?;
        Ok(EmbeddingCache {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    fn record_path(&self, key: &EmbeddingCacheKey) -> PathBuf {
        self.dir.join("vectors").join(format!("{}.bin", key.digest))
    }

    /// Bit-exact stored vector, or None on a miss.
    pub fn get(&self, key: &EmbeddingCacheKey) -> Result<Option<Vec<f32>>> {
        let path = self.record_path(key);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(vecfile::read_single(&path)?))
    }

    pub fn put(&self, key: &EmbeddingCacheKey, values: &[f32]) -> Result<()> {
        let _guard = self.write_lock.lock().expect("cache lock poisoned");
        let path = self.record_path(key);
        if path.exists() {
            return Ok(());
        }
        vecfile::write_single(&path, values)?;
        let mut index = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join("index.log"))?;
        writeln!(index, "{}", key.digest)?;
        Ok(())
    }

    /// Number of digests recorded in the index.
    pub fn len(&self) -> Result<usize> {
        let path = self.dir.join("index.log");
        if !path.exists() {
            return Ok(0);
        }
        Ok(std::fs::read_to_string(path)?.lines().count())
    }

    pub fn is_empty(&self) -> Result<bool> {
        Ok(self.len()? == 0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_is_deterministic_and_text_sensitive() {
        let a = cache_key("model", "hello");
        let b = cache_key("model", "hello");
        let c = cache_key("model", "hello!");
        let d = cache_key("other", "hello");
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a.digest.len(), 64);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let key = cache_key("m", "text");
        assert!(cache.get(&key).unwrap().is_none());
        let values = vec![0.1f32, -0.25, f32::MIN_POSITIVE, 1e-38];
        cache.put(&key, &values).unwrap();
        let loaded = cache.get(&key).unwrap().unwrap();
        assert_eq!(values.len(), loaded.len());
        for (a, b) in values.iter().zip(&loaded) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(cache.len().unwrap(), 1);
    }

    #[test]
    fn put_is_idempotent() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::open(dir.path()).unwrap();
        let key = cache_key("m", "t");
        cache.put(&key, &[1.0]).unwrap();
        cache.put(&key, &[1.0]).unwrap();
        assert_eq!(cache.len().unwrap(), 1);
    }

    #[test]
    fn concurrent_puts_do_not_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let cache = std::sync::Arc::new(EmbeddingCache::open(dir.path()).unwrap());
        std::thread::scope(|s| {
            for t in 0..4 {
                let cache = cache.clone();
                s.spawn(move || {
                    for i in 0..25 {
                        let key = cache_key("m", &format!("{t}-{i}"));
                        cache.put(&key, &[t as f32, i as f32]).unwrap();
                    }
                });
            }
        });
        assert_eq!(cache.len().unwrap(), 100);
    }
}
