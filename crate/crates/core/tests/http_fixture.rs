use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use badx_core::embeddings::{EmbeddingCache, ProviderConfig, ProviderKind, RemoteEmbedder, TextEmbedder};
use badx_core::http::RetryPolicy;
use badx_core::llmclient::{
    read_transcript, ChatClient, GenerationRequest, HttpChatClient, PromptSpec, SamplingParams, Transcript,
};
use badx_core::Error;
use serde_json::{json, Value};

/// Serves canned `(status, body)` replies in order, one per connection, and
/// records each request body.
struct Script {
    url: String,
    seen: Arc<Mutex<Vec<Value>>>,
}

fn serve(replies: Vec<(u16, String)>) -> Script {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut buf = vec![0u8; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(serde_json::from_slice(&buf).unwrap_or(Value::Null));
            let mut stream = stream;
            let head = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
                body.len()
            );
            stream.write_all(head.as_bytes()).unwrap();
            stream.write_all(body.as_bytes()).unwrap();
        }
    });
    Script { url, seen }
}

fn fast_retries() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 5,
        base_delay: Duration::from_millis(1),
        jitter: 0.0,
    }
}

fn chat_body(n: usize) -> String {
    let choices: Vec<Value> = (0..n)
        .map(|i| json!({"index": i, "message": {"role": "assistant", "content": format!("answer {i}")}, "finish_reason": "stop"}))
        .collect();
    json!({"choices": choices}).to_string()
}

fn prompt() -> PromptSpec {
    PromptSpec {
        id: "P1".into(),
        text: "What makes a good leader?".into(),
        theme: None,
        class_id: None,
    }
}

#[test]
fn rate_limits_are_retried_and_every_attempt_logged() {
    let limited = json!({"error": "slow down"}).to_string();
    let server = serve(vec![(429, limited.clone()), (429, limited), (200, chat_body(5))]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    let transcript = Arc::new(Transcript::open(&path).unwrap());
    let client = HttpChatClient::new(&server.url, "m", None)
        .with_transport(fast_retries(), Duration::ZERO)
        .with_transcript(transcript);
    let params = SamplingParams::default();
    let p = prompt();
    let records = client
        .generate(&GenerationRequest { prompt: &p, persona: None, params: &params })
        .unwrap();
    assert_eq!(records.len(), 5);
    assert_eq!(records[3].text, "answer 3");

    let entries = read_transcript(&path).unwrap();
    let statuses: Vec<Option<u16>> = entries.iter().map(|e| e.status).collect();
    assert_eq!(statuses, vec![Some(429), Some(429), Some(200)]);
    assert!(entries.windows(2).all(|w| w[0].fp == w[1].fp));
    assert_eq!(server.seen.lock().unwrap().len(), 3);
}

#[test]
fn short_choice_list_is_malformed() {
    let server = serve(vec![(200, chat_body(3))]);
    let client = HttpChatClient::new(&server.url, "m", None).with_transport(fast_retries(), Duration::ZERO);
    let params = SamplingParams::default();
    let p = prompt();
    let err = client
        .generate(&GenerationRequest { prompt: &p, persona: None, params: &params })
        .unwrap_err();
    assert!(matches!(err, Error::MalformedResponse(_)), "{err}");
}

#[test]
fn request_carries_sampling_parameters() {
    let server = serve(vec![(200, chat_body(5))]);
    let client = HttpChatClient::new(&server.url, "m", None).with_transport(fast_retries(), Duration::ZERO);
    let params = SamplingParams::default();
    let p = prompt();
    client
        .generate(&GenerationRequest { prompt: &p, persona: None, params: &params })
        .unwrap();
    let body = server.seen.lock().unwrap()[0].clone();
    assert_eq!(body["model"], "m");
    assert_eq!(body["n"], 5);
    assert_eq!(body["temperature"], 0.7);
    assert_eq!(body["top_p"], 0.9);
    assert_eq!(body["max_tokens"], 512);
    assert_eq!(body["seed"], 42);
}

fn remote(url: &str, cache: Arc<EmbeddingCache>) -> RemoteEmbedder {
    let cfg = ProviderConfig {
        kind: ProviderKind::Remote,
        model_id: "e".into(),
        endpoint: Some(url.to_string()),
        dim: 3,
        file_path: None,
    };
    RemoteEmbedder::with_policy(cfg, cache, None, fast_retries())
}

fn embedding_body(vectors: &[[f64; 3]]) -> String {
    let data: Vec<Value> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| json!({"index": i, "embedding": v}))
        .collect();
    json!({"data": data}).to_string()
}

#[test]
fn cached_texts_are_not_resent() {
    let server = serve(vec![(200, embedding_body(&[[0.0, 0.0, 1.0]]))]);
    let cache = Arc::new(EmbeddingCache::in_memory());
    let seed = serve(vec![(200, embedding_body(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))]);
    let seeded = remote(&seed.url, cache.clone());
    seeded.embed_texts(&["alpha".into(), "beta".into()]).unwrap();
    assert_eq!(cache.len(), 2);

    let embedder = remote(&server.url, cache);
    let texts: Vec<String> = vec!["alpha".into(), "gamma".into(), "beta".into()];
    let out = embedder.embed_texts(&texts).unwrap();
    assert_eq!(out[0].as_slice(), &[1.0, 0.0, 0.0]);
    assert_eq!(out[1].as_slice(), &[0.0, 0.0, 1.0]);
    assert_eq!(out[2].as_slice(), &[0.0, 1.0, 0.0]);
    let seen = server.seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0]["input"], json!(["gamma"]));
    drop(seen);

    // everything cached now: a repeat makes no request at all
    let again = embedder.embed_texts(&texts).unwrap();
    assert_eq!(again, out);
    assert_eq!(server.seen.lock().unwrap().len(), 1);
}

#[test]
fn vector_count_mismatch_is_protocol_error() {
    let server = serve(vec![(200, embedding_body(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))]);
    let embedder = remote(&server.url, Arc::new(EmbeddingCache::in_memory()));
    let err = embedder
        .embed_texts(&["a".into(), "b".into(), "c".into()])
        .unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
    assert!(embedder.cache().is_empty());
}
