//! Blocking JSON-over-HTTP with retry, backoff and a per-endpoint pacing budget.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    /// Each delay is stretched by a uniform factor in `[1, 1 + jitter)`.
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            base_delay: Duration::from_secs(1),
            jitter: 0.25,
        }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, attempt: u32) -> Duration {
        let base = self.base_delay.mul_f64(2f64.powi(attempt as i32));
        let factor = 1.0 + rand::rng().random_range(0.0..self.jitter.max(f64::MIN_POSITIVE));
        base.mul_f64(factor)
    }
}

/// What happened on one attempt; handed to the caller's observer so it can be
/// written to a transcript.
#[derive(Debug, Clone)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub status: Option<u16>,
    pub body: String,
}

pub struct HttpTransport {
    agent: ureq::Agent,
    policy: RetryPolicy,
    min_interval: Duration,
    last_request: Mutex<Option<Instant>>,
}

impl HttpTransport {
    pub fn new(policy: RetryPolicy, min_interval: Duration, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            policy,
            min_interval,
            last_request: Mutex::new(None),
        }
    }

    pub fn policy(&self) -> &RetryPolicy {
        &self.policy
    }

    fn pace(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let mut last = self.last_request.lock().expect("pacing lock");
        if let Some(prev) = *last {
            let since = prev.elapsed();
            if since < self.min_interval {
                thread::sleep(self.min_interval - since);
            }
        }
        *last = Some(Instant::now());
    }

    fn send_once(&self, url: &str, bearer: Option<&str>, body: &str) -> std::result::Result<(u16, String, Option<Duration>), String> {
        self.pace();
        let mut req = self
            .agent
            .post(url)
            .header("Content-Type", "application/json");
        if let Some(token) = bearer {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok((status, text, retry_after))
    }

    /// POST `body` to `url`, retrying on 429, 5xx and transport failures.
    /// Returns the body of the first 2xx response.
    pub fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
        mut observe: impl FnMut(&AttemptRecord),
    ) -> Result<String> {
        let max = self.policy.max_attempts.max(1);
        let mut last_status = 0u16;
        let mut last_err = String::new();
        for attempt in 0..max {
            match self.send_once(url, bearer, body) {
                Ok((status, text, retry_after)) => {
                    observe(&AttemptRecord {
                        attempt,
                        status: Some(status),
                        body: text.clone(),
                    });
                    match status {
                        200..=299 => return Ok(text),
                        401 | 403 => {
                            return Err(Error::Auth(format!("HTTP {status} from {url}")))
                        }
                        429 | 500..=599 => {
                            last_status = status;
                            if attempt + 1 < max {
                                let mut d = self.policy.delay_for(attempt);
                                if let Some(ra) = retry_after {
                                    d = d.max(ra);
                                }
                                tracing::warn!(status, attempt, delay_ms = d.as_millis() as u64, "retrying");
                                thread::sleep(d);
                            }
                        }
                        _ => {
                            return Err(Error::Protocol(format!(
                                "HTTP {status} from {url}: {}",
                                truncate(&text, 200)
                            )))
                        }
                    }
                }
                Err(e) => {
                    observe(&AttemptRecord {
                        attempt,
                        status: None,
                        body: e.clone(),
                    });
                    last_status = 0;
                    last_err = e;
                    if attempt + 1 < max {
                        thread::sleep(self.policy.delay_for(attempt));
                    }
                }
            }
        }
        if last_status == 0 {
            Err(Error::Network(format!(
                "{url}: {last_err} (after {max} attempts)"
            )))
        } else {
            Err(Error::RateLimited {
                attempts: max,
                status: last_status,
            })
        }
    }
}

fn truncate(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

pub fn join_url(endpoint: &str, path: &str) -> String {
    format!("{}/{}", endpoint.trim_end_matches('/'), path.trim_start_matches('/'))
}
