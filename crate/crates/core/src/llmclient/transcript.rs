use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One request/response exchange. Live clients write one entry per attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub fp: String,
    pub request: Value,
    /// Parsed JSON body, or the raw text when it is not JSON.
    pub response: Value,
    pub t: DateTime<Utc>,
    /// HTTP status; absent for transport failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<u16>,
    #[serde(default)]
    pub attempt: u32,
}

impl TranscriptEntry {
    pub fn is_success(&self) -> bool {
        self.status.is_none_or(|s| (200..300).contains(&s)) && !self.response.is_string()
    }
}

/// Append-only JSON-lines transcript file.
#[derive(Debug)]
pub struct Transcript {
    path: PathBuf,
    inner: Mutex<(File, HashSet<String>)>,
}

impl Transcript {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut seen = HashSet::new();
        if path.exists() {
            for entry in read_transcript(&path)? {
                if entry.is_success() {
                    seen.insert(entry.fp);
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(Self {
            path,
            inner: Mutex::new((file, seen)),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, fp: &str) -> bool {
        self.inner.lock().expect("transcript lock").1.contains(fp)
    }

    /// Append one entry as a single line.
    pub fn append(&self, entry: &TranscriptEntry) -> Result<()> {
        let mut line = serde_json::to_string(entry).expect("transcript entry serializes");
        line.push('\n');
        let mut guard = self.inner.lock().expect("transcript lock");
        guard
            .0
            .write_all(line.as_bytes())
            .and_then(|_| guard.0.flush())
            .map_err(|e| Error::io(&self.path, e))?;
        if entry.is_success() {
            guard.1.insert(entry.fp.clone());
        }
        Ok(())
    }

    /// Append unless a successful entry with this fingerprint is already present.
    pub fn append_once(&self, entry: &TranscriptEntry) -> Result<bool> {
        if self.contains(&entry.fp) {
            return Ok(false);
        }
        self.append(entry)?;
        Ok(true)
    }
}

/// Read every entry of a transcript file; torn or unreadable lines are skipped.
pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(e) => out.push(e),
            Err(err) => tracing::warn!(path = %path.display(), "skipping transcript line: {err}"),
        }
    }
    Ok(out)
}
