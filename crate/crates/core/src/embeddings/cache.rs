//! Append-only JSON-lines embedding cache.
//!
//! Each line is `{"k":"<provider>/<model>/<hash>","v":[...],"t":"<iso8601>"}`
//! where `hash` is the FNV-1a-64 hex of the UTF-8 text. A torn final line
//! (crash mid-append) is skipped on load.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::Vector;
use crate::error::{Error, Result};
use crate::hash::fnv1a64_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    #[serde(rename = "k")]
    pub key: String,
    #[serde(rename = "v")]
    pub vector: Vector,
    #[serde(rename = "t")]
    pub created_at: DateTime<Utc>,
}

pub fn cache_key(provider: &str, model_id: &str, text: &str) -> String {
    format!("{provider}/{model_id}/{}", fnv1a64_hex(text.as_bytes()))
}

#[derive(Debug)]
pub struct EmbeddingCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, Vector>>,
    writer: Mutex<Option<File>>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    /// Open (creating if needed) a cache file and load its entries.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for line in BufReader::new(file).lines() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(entry) => {
                        entries.insert(entry.key, entry.vector);
                    }
                    Err(e) => tracing::warn!(path = %path.display(), "skipping unreadable cache line: {e}"),
                }
            }
        } else if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        // start a fresh line after a torn tail
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.last().is_some_and(|b| *b != b'\n') {
            file.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        Ok(Self {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Vector> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    /// Insert and append to the backing file. Appends are serialized; each
    /// entry is written as a single line.
    pub fn put(&self, key: &str, vector: &Vector) -> Result<()> {
        let mut writer = self.writer.lock().expect("cache writer lock");
        if let Some(file) = writer.as_mut() {
            let entry = CacheEntry {
                key: key.to_string(),
                vector: vector.clone(),
                created_at: Utc::now(),
            };
            let mut line = serde_json::to_string(&entry).expect("cache entry serializes");
            line.push('\n');
            let path = self.path.clone().unwrap_or_default();
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| Error::io(path, e))?;
        }
        self.entries
            .write()
            .expect("cache lock")
            .insert(key.to_string(), vector.clone());
        Ok(())
    }
}
