use std::collections::HashMap;
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Encoder;
use crate::error::Result;
use crate::jsonl::{read_jsonl, write_jsonl};

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    identity: String,
    key: String,
    vector: Vec<f64>,
}

/// Memoizing wrapper keyed by (encoder identity, SHA-256 of the input).
///
/// Entries can be persisted to and reloaded from a JSONL file; entries written
/// by a different encoder identity are ignored on load.
pub struct CachedEncoder<E> {
    inner: E,
    entries: RwLock<HashMap<String, Vec<f64>>>,
}

impl<E: Encoder> CachedEncoder<E> {
    pub fn new(inner: E) -> Self {
        Self { inner, entries: RwLock::new(HashMap::new()) }
    }

    pub fn key(text: &str) -> String {
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(&self, path: &Path) -> Result<usize> {
        let mut loaded = 0;
        let mut map = self.entries.write().unwrap();
        for (_, e) in read_jsonl::<CacheEntry>(path)? {
            if e.identity == self.inner.identity() && e.vector.len() == self.inner.dim() {
                map.insert(e.key, e.vector);
                loaded += 1;
            }
        }
        Ok(loaded)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let map = self.entries.read().unwrap();
        let mut keys: Vec<_> = map.keys().collect();
        keys.sort();
        let entries: Vec<CacheEntry> = keys
            .into_iter()
            .map(|k| CacheEntry { identity: self.inner.identity().to_string(), key: k.clone(), vector: map[k].clone() })
            .collect();
        write_jsonl(path, &entries)
    }
}

impl<E: Encoder> Encoder for CachedEncoder<E> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn identity(&self) -> &str {
        self.inner.identity()
    }

    fn concurrent(&self) -> bool {
        self.inner.concurrent()
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        let key = Self::key(text);
        if let Some(v) = self.entries.read().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let v = self.inner.encode(text)?;
        self.entries.write().unwrap().insert(key, v.clone());
        Ok(v)
    }
}
