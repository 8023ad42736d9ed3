use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use serde_json::Value;

use super::{parse_choices, ReplayClient, request_fingerprint, ChatClient, GenerationRecord, GenerationRequest, Transcript, TranscriptEntry};
use crate::error::{Error, Result};
use crate::http::{join_url, HttpTransport, RetryPolicy};

/// Client for an OpenAI-compatible `/v1/chat/completions` endpoint.
pub struct HttpChatClient {
    endpoint: String,
    model_id: String,
    api_key: Option<String>,
    transport: HttpTransport,
    transcript: Option<Arc<Transcript>>,
}

impl HttpChatClient {
    pub fn new(endpoint: &str, model_id: &str, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model_id: model_id.to_string(),
            api_key,
            transport: HttpTransport::new(RetryPolicy::default(), Duration::ZERO, Duration::from_secs(300)),
            transcript: None,
        }
    }

    pub fn with_transport(mut self, policy: RetryPolicy, min_interval: Duration) -> Self {
        self.transport = HttpTransport::new(policy, min_interval, Duration::from_secs(300));
        self
    }

    pub fn with_transcript(mut self, transcript: Arc<Transcript>) -> Self {
        self.transcript = Some(transcript);
        self
    }
}

impl ChatClient for HttpChatClient {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<GenerationRecord>> {
        let payload = request.payload(&self.model_id)?;
        let fp = request_fingerprint(&payload);
        let body = payload.to_string();
        let mut log_err: Option<Error> = None;
        let result = self.transport.post_json(
            &join_url(&self.endpoint, "v1/chat/completions"),
            self.api_key.as_deref(),
            &body,
            |attempt| {
                let Some(t) = &self.transcript else { return };
                let response = serde_json::from_str::<Value>(&attempt.body)
                    .unwrap_or_else(|_| Value::String(attempt.body.clone()));
                let entry = TranscriptEntry {
                    fp: fp.clone(),
                    request: payload.clone(),
                    response,
                    t: Utc::now(),
                    status: attempt.status,
                    attempt: attempt.attempt,
                };
                if let Err(e) = t.append(&entry) {
                    log_err.get_or_insert(e);
                }
            },
        );
        if let Some(e) = log_err {
            return Err(e);
        }
        let text = result?;
        let response: Value = serde_json::from_str(&text)
            .map_err(|e| Error::MalformedResponse(format!("chat response is not JSON: {e}")))?;
        parse_choices(&response, request, &self.model_id, &fp, Utc::now())
    }
}

/// Serves cells already present in a run's transcript from there and sends
/// the rest to the live endpoint, so an interrupted run can be resumed.
pub struct ResumingClient {
    done: ReplayClient,
    live: HttpChatClient,
}

impl ResumingClient {
    pub fn new(done: ReplayClient, live: HttpChatClient) -> Self {
        Self { done, live }
    }
}

impl ChatClient for ResumingClient {
    fn model_id(&self) -> &str {
        self.live.model_id()
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<Vec<GenerationRecord>> {
        match self.done.generate(request) {
            Err(Error::FixtureMissing { .. }) => self.live.generate(request),
            other => other,
        }
    }
}
