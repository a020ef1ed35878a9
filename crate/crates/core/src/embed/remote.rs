use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Duration;

use super::{EmbedError, EmbeddingBackend};
use crate::http::{HttpError, JsonClient};

/// Request/response shape of the embedding endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemoteFormat {
    /// `{"inputs": text}` -> `[f, ...]` or `[[f, ...]]` (feature extraction).
    #[default]
    FeatureExtraction,
    /// `{"model": id, "input": text}` -> `{"data": [{"embedding": [...]}]}`.
    OpenAi,
}

/// Embeddings from an HTTP endpoint.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    id: String,
    dim: usize,
    url: String,
    format: RemoteFormat,
    normalizes: bool,
    client: JsonClient,
}

impl RemoteBackend {
    /// `backend_id` is passed to the service opaquely (e.g.
    /// `BAAI/bge-large-en-v1.5`).
    pub fn new(
        backend_id: &str,
        dim: usize,
        url: &str,
        format: RemoteFormat,
        normalizes: bool,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Result<Self, EmbedError> {
        let client =
            JsonClient::new(timeout, api_key).map_err(|e| EmbedError::Protocol(e.to_string()))?;
        Ok(Self {
            id: backend_id.to_string(),
            dim,
            url: url.to_string(),
            format,
            normalizes,
            client,
        })
    }
}

fn numbers(v: &Value) -> Option<Vec<f64>> {
    v.as_array()?.iter().map(Value::as_f64).collect()
}

fn parse_vector(format: RemoteFormat, body: &Value) -> Option<Vec<f64>> {
    match format {
        RemoteFormat::FeatureExtraction => numbers(body).or_else(|| {
            let outer = body.as_array()?;
            if outer.len() == 1 {
                numbers(&outer[0])
            } else {
                None
            }
        }),
        RemoteFormat::OpenAi => numbers(body.get("data")?.get(0)?.get("embedding")?),
    }
}

impl EmbeddingBackend for RemoteBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn normalizes(&self) -> bool {
        self.normalizes
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn embed_text(&self, joined: &str) -> Result<Vec<f64>, EmbedError> {
        let body = match self.format {
            RemoteFormat::FeatureExtraction => json!({ "inputs": joined }),
            RemoteFormat::OpenAi => json!({ "model": self.id, "input": joined }),
        };
        let resp = self.client.post(&self.url, &body).map_err(|e| match e {
            HttpError::Transient(m) => EmbedError::Transport(m),
            HttpError::Permanent(m) => EmbedError::Protocol(m),
        })?;
        parse_vector(self.format, &resp).ok_or_else(|| {
            EmbedError::Protocol(format!("{}: response is not an embedding vector", self.url))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_flat_and_nested_vectors() {
        let f = RemoteFormat::FeatureExtraction;
        assert_eq!(parse_vector(f, &json!([0.5, 1.0])), Some(vec![0.5, 1.0]));
        assert_eq!(parse_vector(f, &json!([[0.5, 1.0]])), Some(vec![0.5, 1.0]));
        assert_eq!(parse_vector(f, &json!([[0.5], [1.0]])), None);
        assert_eq!(parse_vector(f, &json!({"error": "x"})), None);
    }

    #[test]
    fn openai_shape() {
        let body = json!({"data": [{"embedding": [0.25, -1.0]}]});
        assert_eq!(
            parse_vector(RemoteFormat::OpenAi, &body),
            Some(vec![0.25, -1.0])
        );
    }
}
