use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::transcript::read_transcript;
use super::{parse_choices, request_fingerprint, ChatClient, GenerationRecord, GenerationRequest, Transcript, TranscriptEntry};
use crate::error::{Error, Result};

/// Resolves generations from recorded transcripts only. Never touches the
/// network.
pub struct ReplayClient {
    model_id: String,
    entries: Arc<HashMap<String, TranscriptEntry>>,
    transcript: Option<Arc<Transcript>>,
}

impl ReplayClient {
    /// The same fixtures served under another model id.
    pub fn for_model(&self, model_id: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            entries: self.entries.clone(),
            transcript: None,
        }
    }

    /// Copy each replayed exchange into `transcript` once.
    pub fn with_transcript(mut self, transcript: Arc<Transcript>) -> Self {
        self.transcript = Some(transcript);
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn jsonl_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("transcript")] {
        if !sub.is_dir() {
            continue;
        }
        for entry in std::fs::read_dir(&sub).map_err(|e| Error::io(&sub, e))? {
            let path = entry.map_err(|e| Error::io(&sub, e))?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Load every `*.jsonl` transcript in `dir` (or `dir/transcript`). Only
/// successful exchanges are kept; for a repeated fingerprint the first wins.
pub fn load_replay(dir: impl AsRef<Path>, model_id: &str) -> Result<ReplayClient> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "replay directory not found"),
        ));
    }
    let mut entries = HashMap::new();
    for file in jsonl_files(dir)? {
        for e in read_transcript(&file)? {
            if e.is_success() {
                entries.entry(e.fp.clone()).or_insert(e);
            }
        }
    }
    Ok(ReplayClient {
        model_id: model_id.to_string(),
        entries: Arc::new(entries),
        transcript: None,
    })
}

impl ChatClient for ReplayClient {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<GenerationRecord>> {
        let payload = request.payload(&self.model_id)?;
        let fp = request_fingerprint(&payload);
        let entry = self.entries.get(&fp).ok_or_else(|| Error::FixtureMissing {
            fingerprint: fp.clone(),
            prompt_id: request.prompt.id.clone(),
            persona: request.persona_label().to_string(),
        })?;
        let records = parse_choices(&entry.response, request, &self.model_id, &fp, entry.t)?;
        if let Some(t) = &self.transcript {
            t.append_once(entry)?;
        }
        Ok(records)
    }
}
