//! Blocking JSON-over-HTTP helper shared by the remote backends.

use std::time::Duration;

/// Failure of one HTTP exchange.
#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    /// Network failure, timeout, 429 or 5xx: worth retrying.
    #[error("{0}")]
    Transient(String),
    /// Any other non-success status or an unreadable body.
    #[error("{0}")]
    Permanent(String),
}

/// A configured client with optional bearer credentials.
#[derive(Debug, Clone)]
pub struct JsonClient {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl JsonClient {
    pub fn new(timeout: Duration, api_key: Option<String>) -> Result<Self, HttpError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| HttpError::Permanent(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { client, api_key })
    }

    /// Reads the key from `env_var`; an unset or empty variable means none.
    pub fn api_key_from_env(env_var: &str) -> Option<String> {
        std::env::var(env_var).ok().filter(|k| !k.is_empty())
    }

    pub fn post(
        &self,
        url: &str,
        body: &serde_json::Value,
    ) -> Result<serde_json::Value, HttpError> {
        self.post_with_headers(url, body, &[])
    }

    /// Like [`post`](Self::post), adding extra request headers.
    pub fn post_with_headers(
        &self,
        url: &str,
        body: &serde_json::Value,
        headers: &[(&str, &str)],
    ) -> Result<serde_json::Value, HttpError> {
        let mut req = self.client.post(url).json(body);
        if let Some(k) = &self.api_key {
            req = req.bearer_auth(k);
        }
        for (name, value) in headers {
            req = req.header(*name, *value);
        }
        let resp = req
            .send()
            .map_err(|e| HttpError::Transient(format!("POST {url}: {e}")))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| HttpError::Transient(format!("reading response from {url}: {e}")))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(HttpError::Transient(format!(
                "{url} returned {status}: {}",
                snippet(&text)
            )));
        }
        if !status.is_success() {
            return Err(HttpError::Permanent(format!(
                "{url} returned {status}: {}",
                snippet(&text)
            )));
        }
        serde_json::from_str(&text)
            .map_err(|e| HttpError::Permanent(format!("{url} returned invalid JSON: {e}")))
    }
}

fn snippet(s: &str) -> String {
    let mut out: String = s.chars().take(200).collect();
    if s.chars().count() > 200 {
        out.push('…');
    }
    out
}
