use base64::Engine;
use serde_json::{json, Value};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use super::{ModelBackend, ModelError, ModelRequest};
use crate::http::{HttpError, JsonClient};

/// Subject wildcard in replay files.
pub const ANY_SUBJECT: &str = "*";

/// Recorded responses keyed by `(prompt_id, subject)`.
///
/// Replay files are CSV with header `prompt_id,subject,response`. A subject of
/// `*` matches any subject without an exact row.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    model_id: String,
    rows: HashMap<(String, String), String>,
    calls: std::sync::Arc<AtomicUsize>,
}

#[derive(serde::Deserialize)]
struct ReplayRow {
    prompt_id: String,
    subject: String,
    response: String,
}

impl ReplayBackend {
    pub fn from_rows<I, S>(model_id: &str, rows: I) -> Self
    where
        I: IntoIterator<Item = (S, S, S)>,
        S: Into<String>,
    {
        Self {
            model_id: model_id.to_string(),
            rows: rows
                .into_iter()
                .map(|(p, s, r)| ((p.into(), s.into()), r.into()))
                .collect(),
            calls: Default::default(),
        }
    }

    pub fn from_csv(model_id: &str, path: &Path) -> Result<Self, ModelError> {
        let mut rdr = csv::Reader::from_path(path)
            .map_err(|e| ModelError::Replay(format!("{}: {e}", path.display())))?;
        let mut rows = Vec::new();
        for (i, r) in rdr.deserialize::<ReplayRow>().enumerate() {
            let r = r.map_err(|e| {
                ModelError::Replay(format!("{}: row {}: {e}", path.display(), i + 2))
            })?;
            rows.push((r.prompt_id, r.subject, r.response));
        }
        Ok(Self::from_rows(model_id, rows))
    }

    /// Number of `generate` calls served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl ModelBackend for ReplayBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn is_remote(&self) -> bool {
        false
    }

    fn cacheable(&self) -> bool {
        false
    }

    fn generate(&self, req: &ModelRequest<'_>) -> Result<String, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = |s: &str| (req.prompt_id.to_string(), s.to_string());
        self.rows
            .get(&key(req.subject))
            .or_else(|| self.rows.get(&key(ANY_SUBJECT)))
            .cloned()
            .ok_or_else(|| ModelError::ReplayMiss {
                model_id: self.model_id.clone(),
                prompt_id: req.prompt_id.to_string(),
                subject: req.subject.to_string(),
            })
    }
}

#[derive(Debug, Clone)]
enum MockFailure {
    None,
    Transient,
    Permanent,
}

/// Synthesized responses with an optional artificial delay.
///
/// Without a configured response the text echoes the prompt id and subject,
/// so outputs stay deterministic and distinguishable.
#[derive(Debug, Clone)]
pub struct MockModelBackend {
    model_id: String,
    delay: Duration,
    responses: BTreeMap<String, String>,
    failure: MockFailure,
    calls: std::sync::Arc<AtomicUsize>,
}

impl MockModelBackend {
    pub fn new(model_id: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            delay: Duration::ZERO,
            responses: BTreeMap::new(),
            failure: MockFailure::None,
            calls: Default::default(),
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    /// Fixed response for one prompt id.
    pub fn with_response(mut self, prompt_id: &str, text: &str) -> Self {
        self.responses
            .insert(prompt_id.to_string(), text.to_string());
        self
    }

    /// Every call fails; `transient` selects a retryable error.
    pub fn failing(mut self, transient: bool) -> Self {
        self.failure = if transient {
            MockFailure::Transient
        } else {
            MockFailure::Permanent
        };
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ModelBackend for MockModelBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn is_remote(&self) -> bool {
        false
    }

    fn generate(&self, req: &ModelRequest<'_>) -> Result<String, ModelError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        match self.failure {
            MockFailure::Transient => {
                return Err(ModelError::Transport(format!(
                    "{}: simulated outage",
                    self.model_id
                )))
            }
            MockFailure::Permanent => {
                return Err(ModelError::Protocol(format!(
                    "{}: simulated rejection",
                    self.model_id
                )))
            }
            MockFailure::None => {}
        }
        Ok(self
            .responses
            .get(req.prompt_id)
            .cloned()
            .unwrap_or_else(|| {
                format!(
                    "{} response to {} for {}.",
                    self.model_id, req.prompt_id, req.subject
                )
            }))
    }
}

/// Gemini `generateContent` endpoint with the video sent inline.
#[derive(Debug, Clone)]
pub struct GeminiBackend {
    model_id: String,
    base_url: String,
    api_key: Option<String>,
    client: JsonClient,
}

/// Default API root for [`GeminiBackend`].
pub const GEMINI_BASE_URL: &str = "https://generativelanguage.googleapis.com";

impl GeminiBackend {
    pub fn new(
        model_id: &str,
        base_url: &str,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, ModelError> {
        let client =
            JsonClient::new(timeout, None).map_err(|e| ModelError::Protocol(e.to_string()))?;
        Ok(Self {
            model_id: model_id.to_string(),
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            client,
        })
    }

    fn url(&self) -> String {
        format!(
            "{}/v1beta/models/{}:generateContent",
            self.base_url, self.model_id
        )
    }
}

fn request_body(req: &ModelRequest<'_>) -> Value {
    let mut parts = Vec::new();
    if let Some(m) = req.media {
        parts.push(json!({
            "inline_data": {
                "mime_type": m.mime,
                "data": base64::engine::general_purpose::STANDARD.encode(m.data.as_slice()),
            }
        }));
    }
    parts.push(json!({ "text": req.prompt_text }));
    json!({ "contents": [{ "role": "user", "parts": parts }] })
}

fn response_text(body: &Value) -> Option<String> {
    let parts = body
        .get("candidates")?
        .get(0)?
        .get("content")?
        .get("parts")?
        .as_array()?;
    let text: String = parts
        .iter()
        .filter_map(|p| p.get("text").and_then(Value::as_str))
        .collect();
    Some(text)
}

impl ModelBackend for GeminiBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn generate(&self, req: &ModelRequest<'_>) -> Result<String, ModelError> {
        let key = self.api_key.as_deref().ok_or_else(|| {
            ModelError::Protocol(format!("{}: no API key configured", self.model_id))
        })?;
        if let Some(m) = req.media {
            log::info!(
                "{}: sending {} ({} bytes)",
                self.model_id,
                m.source,
                m.data.len()
            );
        }
        let url = self.url();
        let body = self
            .client
            .post_with_headers(&url, &request_body(req), &[("x-goog-api-key", key)])
            .map_err(|e| match e {
                HttpError::Transient(m) => ModelError::Transport(m),
                HttpError::Permanent(m) => ModelError::Protocol(m),
            })?;
        response_text(&body)
            .ok_or_else(|| ModelError::Protocol(format!("{url}: response has no candidate text")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ermodels::Media;

    fn req<'a>(prompt_id: &'a str, subject: &'a str) -> ModelRequest<'a> {
        ModelRequest {
            prompt_id,
            prompt_text: "p",
            subject,
            media: None,
        }
    }

    #[test]
    fn replay_exact_then_wildcard() {
        let b = ReplayBackend::from_rows(
            "m",
            [
                ("er", "E01", "exact"),
                ("er", "*", "any"),
                ("other", "E02", "x"),
            ],
        );
        assert_eq!(b.generate(&req("er", "E01")).unwrap(), "exact");
        assert_eq!(b.generate(&req("er", "E09")).unwrap(), "any");
        assert!(matches!(
            b.generate(&req("other", "E01")),
            Err(ModelError::ReplayMiss { .. })
        ));
        assert_eq!(b.calls(), 3);
    }

    #[test]
    fn mock_counts_and_fails() {
        let m = MockModelBackend::new("m").with_response("er", "calm");
        assert_eq!(m.generate(&req("er", "E")).unwrap(), "calm");
        assert_eq!(
            m.generate(&req("x", "E")).unwrap(),
            "m response to x for E."
        );
        assert_eq!(m.calls(), 2);
        let f = MockModelBackend::new("m").failing(true);
        assert!(f.generate(&req("er", "E")).unwrap_err().is_transient());
    }

    #[test]
    fn gemini_wire_format() {
        let media = Media::from_bytes("clip", b"abc".to_vec(), "video/mp4");
        let r = ModelRequest {
            prompt_id: "er",
            prompt_text: "describe",
            subject: "E",
            media: Some(&media),
        };
        let b = request_body(&r);
        assert_eq!(b["contents"][0]["parts"][0]["inline_data"]["data"], "YWJj");
        assert_eq!(b["contents"][0]["parts"][1]["text"], "describe");
        let resp = json!({"candidates": [{"content": {"parts": [{"text": "The human "}, {"text": "smiles."}]}}]});
        assert_eq!(response_text(&resp).unwrap(), "The human smiles.");
        assert_eq!(response_text(&json!({})), None);
    }
}
