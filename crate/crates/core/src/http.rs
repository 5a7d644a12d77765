//! Blocking JSON-over-HTTP with retry and exponential backoff.

use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay_ms: 250,
            timeout_secs: 120,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1 << attempt.min(10)))
    }
}

#[derive(Debug, Error)]
pub enum HttpError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Decode(String),
}

impl HttpError {
    pub fn attempts(&self) -> u32 {
        match self {
            HttpError::Transport { attempts, .. } => *attempts,
            _ => 1,
        }
    }
}

#[derive(Clone)]
pub struct JsonClient {
    client: Client,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl JsonClient {
    pub fn new(api_key: Option<String>, retry: RetryPolicy) -> Result<Self, HttpError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(retry.timeout_secs))
            .build()
            .map_err(|e| HttpError::Transport {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(JsonClient { client, api_key, retry })
    }

    /// POSTs `body`, retrying connection failures and 429/5xx responses other
    /// than 501. The
    /// same idempotency key is sent on every attempt of one logical request.
    pub fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, HttpError> {
        let key = uuid::Uuid::new_v4().to_string();
        let mut last = String::new();
        let attempts = self.retry.max_attempts.max(1);
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(self.retry.delay(attempt - 1));
            }
            let mut req = self.client.post(url).header("Idempotency-Key", &key).json(body);
            if let Some(k) = &self.api_key {
                req = req.bearer_auth(k);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let value: Value = resp.json().map_err(|e| HttpError::Decode(e.to_string()))?;
                        return serde_json::from_value(value).map_err(|e| HttpError::Decode(e.to_string()));
                    }
                    let body = resp.text().unwrap_or_default();
                    let transient = status == StatusCode::TOO_MANY_REQUESTS
                        || (status.is_server_error() && status != StatusCode::NOT_IMPLEMENTED);
                    if transient {
                        last = format!("HTTP {}: {}", status.as_u16(), body);
                        continue;
                    }
                    return Err(HttpError::Status {
                        status: status.as_u16(),
                        body,
                    });
                }
                Err(e) => last = e.to_string(),
            }
        }
        Err(HttpError::Transport {
            attempts,
            message: last,
        })
    }
}

pub fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}
