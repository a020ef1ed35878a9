//! Emotion-recognition model adapters.
//!
//! Three producers of text for an episode:
//!
//! * a generative multimodal model answering a free-description prompt,
//! * the same kind of model constrained to "emotion label, object1, ..." output,
//! * a stacked perception baseline joining a face-emotion classifier with an
//!   object detector.
//!
//! Multimodal backends implement [`ModelBackend`] and come as replay (recorded
//! responses), mock (synthesized, optional delay) and remote (Gemini API).
//! [`ModelRunner`] adds retries, the on-disk response cache and the offline
//! switch, and times each call.

mod backends;
mod prompts;

pub use backends::{GeminiBackend, MockModelBackend, ReplayBackend, ANY_SUBJECT, GEMINI_BASE_URL};
pub use prompts::{prompt, prompts, PromptError, PromptTemplate, PROMPT_SET_VERSION};

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use crate::cache::{sha256_fields, sha256_hex, CacheError, DiskCache};
use crate::corpus::EpisodeRecord;
use crate::exec::{retry, RetryPolicy};

/// Cache namespace for model responses.
pub const CACHE_NAMESPACE: &str = "models";
/// Env var holding the multimodal-model API key.
pub const API_KEY_ENV: &str = "EHK_VLM_API_KEY";
/// Minimum detector confidence for an object to appear in baseline output.
pub const OBJECT_THRESHOLD: f64 = 0.8;
/// Model id reported for stacked-baseline outputs.
pub const BASELINE_MODEL_ID: &str = "stacked-cnn";
/// Emotion term used when the face backend finds no face.
pub const NO_FACE: &str = "unknown";

/// Model adapter failure.
#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("model {model_id} returned an empty response")]
    EmptyResponse { model_id: String },
    #[error("replay {model_id} has no response for prompt {prompt_id:?}, subject {subject:?}")]
    ReplayMiss {
        model_id: String,
        prompt_id: String,
        subject: String,
    },
    #[error("replay file: {0}")]
    Replay(String),
    #[error("offline: no cached response for {model_id}/{key}")]
    OfflineMiss { model_id: String, key: String },
    #[error("cannot read media {path}: {msg}")]
    Media { path: String, msg: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("invalid detection: {0}")]
    Detection(String),
}

impl ModelError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ModelError::Transport(_))
    }
}

/// Video (or clip) bytes with their content digest.
#[derive(Debug, Clone)]
pub struct Media {
    /// Path or stream identifier, for logs only.
    pub source: String,
    /// Hex sha256 of `data`.
    pub digest: String,
    pub mime: String,
    pub data: Arc<Vec<u8>>,
}

impl Media {
    pub fn from_bytes(source: &str, data: Vec<u8>, mime: &str) -> Self {
        Self {
            source: source.to_string(),
            digest: sha256_hex(&data),
            mime: mime.to_string(),
            data: Arc::new(data),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ModelError> {
        let data = std::fs::read(path).map_err(|e| ModelError::Media {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Ok(Self::from_bytes(
            &path.display().to_string(),
            data,
            mime_for(path),
        ))
    }
}

fn mime_for(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("mp4") | Some("m4v") => "video/mp4",
        Some("mov") => "video/quicktime",
        Some("webm") => "video/webm",
        Some("avi") => "video/x-msvideo",
        Some("mkv") => "video/x-matroska",
        _ => "application/octet-stream",
    }
}

/// One prompt sent to a backend.
#[derive(Debug, Clone)]
pub struct ModelRequest<'a> {
    pub prompt_id: &'a str,
    /// Fully rendered prompt.
    pub prompt_text: &'a str,
    /// Episode id or session key; used by replay lookups.
    pub subject: &'a str,
    pub media: Option<&'a Media>,
}

/// A multimodal text generator.
pub trait ModelBackend: Send + Sync {
    fn model_id(&self) -> &str;
    /// Whether calls leave the process (forbidden offline without a cache hit).
    fn is_remote(&self) -> bool;
    /// Whether responses should go through the disk cache.
    fn cacheable(&self) -> bool {
        true
    }
    fn generate(&self, req: &ModelRequest<'_>) -> Result<String, ModelError>;
}

/// Which adapter produced an output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Generative,
    ClassifierLabels,
    StackedLabels,
}

/// A model's raw text for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub model_id: String,
    pub episode_id: String,
    pub raw_text: String,
    pub kind: OutputKind,
    pub latency_s: f64,
    /// Served from the response cache.
    #[serde(default)]
    pub cached: bool,
}

/// Stored response layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CachedResponse {
    pub prompt_hash: String,
    pub media_digest: String,
    pub raw_text: String,
    pub latency_s: f64,
    pub timestamp: String,
}

/// Result of one runner call.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub raw_text: String,
    pub latency_s: f64,
    pub cached: bool,
}

/// Cache key of a request.
pub fn cache_key(model_id: &str, prompt_text: &str, media_digest: &str) -> String {
    sha256_fields(&[model_id, prompt_text, media_digest])
}

/// A backend with retry, caching and offline policy.
#[derive(Clone)]
pub struct ModelRunner {
    backend: Arc<dyn ModelBackend>,
    cache: Option<DiskCache>,
    offline: bool,
    retry: RetryPolicy,
    concurrency: usize,
}

impl std::fmt::Debug for ModelRunner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelRunner")
            .field("backend", &self.backend.model_id())
            .field("offline", &self.offline)
            .finish()
    }
}

impl ModelRunner {
    pub fn new(backend: Arc<dyn ModelBackend>) -> Self {
        Self {
            backend,
            cache: None,
            offline: false,
            retry: RetryPolicy::default(),
            concurrency: 4,
        }
    }

    pub fn with_cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn retry_policy(mut self, policy: RetryPolicy) -> Self {
        self.retry = policy;
        self
    }

    pub fn concurrency(mut self, limit: usize) -> Self {
        self.concurrency = limit.max(1);
        self
    }

    pub fn concurrency_limit(&self) -> usize {
        self.concurrency
    }

    pub fn model_id(&self) -> &str {
        self.backend.model_id()
    }

    /// Looks a response up without calling the backend.
    pub fn cache_lookup(&self, key: &str) -> Result<Option<CachedResponse>, ModelError> {
        match &self.cache {
            Some(c) => Ok(c.get_json(CACHE_NAMESPACE, self.backend.model_id(), key)?),
            None => Ok(None),
        }
    }

    pub fn cache_store(&self, key: &str, entry: &CachedResponse) -> Result<(), ModelError> {
        if let Some(c) = &self.cache {
            c.put_json(CACHE_NAMESPACE, self.backend.model_id(), key, entry)?;
        }
        Ok(())
    }

    /// Renders `prompt_id` with `vars` and runs it.
    pub fn complete(
        &self,
        prompt_id: &str,
        vars: &BTreeMap<&str, &str>,
        subject: &str,
        media: Option<&Media>,
    ) -> Result<Completion, ModelError> {
        let prompt_text = prompt(prompt_id)?.render(vars)?;
        let model_id = self.backend.model_id().to_string();
        let digest = media.map(|m| m.digest.as_str()).unwrap_or("");
        let key = cache_key(&model_id, &prompt_text, digest);
        let use_cache = self.backend.cacheable() && self.cache.is_some();

        if use_cache {
            if let Some(hit) = self.cache_lookup(&key)? {
                if !hit.raw_text.trim().is_empty() {
                    return Ok(Completion {
                        raw_text: hit.raw_text,
                        latency_s: hit.latency_s,
                        cached: true,
                    });
                }
                log::warn!("cached response {model_id}/{key} is empty; ignoring it");
            }
        }
        if self.offline && self.backend.is_remote() {
            return Err(ModelError::OfflineMiss { model_id, key });
        }

        let req = ModelRequest {
            prompt_id,
            prompt_text: &prompt_text,
            subject,
            media,
        };
        let t0 = Instant::now();
        let raw_text = retry(&self.retry, ModelError::is_transient, |_| {
            self.backend.generate(&req)
        })?;
        let latency_s = t0.elapsed().as_secs_f64();
        if raw_text.trim().is_empty() {
            return Err(ModelError::EmptyResponse { model_id });
        }
        if use_cache {
            self.cache_store(
                &key,
                &CachedResponse {
                    prompt_hash: sha256_hex(prompt_text.as_bytes()),
                    media_digest: digest.to_string(),
                    raw_text: raw_text.clone(),
                    latency_s,
                    timestamp: chrono::Utc::now()
                        .to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                },
            )?;
        }
        Ok(Completion {
            raw_text,
            latency_s,
            cached: false,
        })
    }
}

fn episode_media(episode: &EpisodeRecord, corpus_root: &Path) -> Result<Media, ModelError> {
    Media::from_file(&corpus_root.join(&episode.video_path))
}

/// Free-text emotion description of an episode's video.
pub fn run_generative(
    episode: &EpisodeRecord,
    corpus_root: &Path,
    prompt_id: &str,
    runner: &ModelRunner,
) -> Result<ModelOutput, ModelError> {
    let media = episode_media(episode, corpus_root)?;
    let c = runner.complete(
        prompt_id,
        &BTreeMap::new(),
        &episode.episode_id,
        Some(&media),
    )?;
    Ok(ModelOutput {
        model_id: runner.model_id().to_string(),
        episode_id: episode.episode_id.clone(),
        raw_text: c.raw_text,
        kind: OutputKind::Generative,
        latency_s: c.latency_s,
        cached: c.cached,
    })
}

/// Label-constrained output for the ablation. The text is stored verbatim;
/// see [`parse_classifier_output`].
pub fn run_vlm_classifier(
    episode: &EpisodeRecord,
    corpus_root: &Path,
    runner: &ModelRunner,
) -> Result<ModelOutput, ModelError> {
    let mut out = run_generative(episode, corpus_root, "vlm_classifier", runner)?;
    out.kind = OutputKind::ClassifierLabels;
    Ok(out)
}

/// Emotion label and object terms of a classifier answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierParse {
    pub emotion_label: String,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("classifier output is empty")]
    Empty,
    #[error("classifier output has no emotion label before the first comma")]
    NoLabel,
}

/// Splits `"emotion, obj1, obj2"`. Terms are trimmed, empty object terms
/// dropped and case preserved.
pub fn parse_classifier_output(raw_text: &str) -> Result<ClassifierParse, ParseError> {
    if raw_text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let (head, tail) = match raw_text.split_once(',') {
        Some((h, t)) => (h, Some(t)),
        None => (raw_text, None),
    };
    let emotion_label = head.trim();
    if emotion_label.is_empty() {
        return Err(ParseError::NoLabel);
    }
    let objects = tail
        .map(|t| {
            t.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
        .unwrap_or_default();
    Ok(ClassifierParse {
        emotion_label: emotion_label.to_string(),
        objects,
    })
}

/// Inverse of [`parse_classifier_output`] for comma-free terms.
pub fn format_classifier(p: &ClassifierParse) -> String {
    std::iter::once(p.emotion_label.as_str())
        .chain(p.objects.iter().map(String::as_str))
        .collect::<Vec<_>>()
        .join(", ")
}

/// One object detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
}

impl Detection {
    pub fn new(label: &str, confidence: f64) -> Result<Self, ModelError> {
        let label = label.trim();
        if label.is_empty() || label.contains(',') {
            return Err(ModelError::Detection(format!("bad label {label:?}")));
        }
        if !(0.0..=1.0).contains(&confidence) {
            return Err(ModelError::Detection(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            label: label.to_string(),
            confidence,
        })
    }
}

/// Highest-scoring label; exact ties go to the lexicographically smallest.
pub fn dominant_emotion(scores: &[(String, f64)]) -> Option<String> {
    scores
        .iter()
        .filter(|(_, s)| !s.is_nan())
        .min_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)))
        .map(|(l, _)| l.clone())
}

/// Most frequent per-frame label; ties go to the lexicographically smallest.
pub fn modal_label(frames: &[String]) -> Option<String> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for f in frames {
        *counts.entry(f.as_str()).or_default() += 1;
    }
    counts
        .into_iter()
        .min_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)))
        .map(|(l, _)| l.to_string())
}

/// `"<emotion> <obj1>, <obj2>, ..."` from detections at or above
/// `threshold`, first occurrence of each label kept.
pub fn format_baseline(emotion: &str, detections: &[Detection], threshold: f64) -> String {
    let mut seen = HashSet::new();
    let objects: Vec<&str> = detections
        .iter()
        .filter(|d| d.confidence >= threshold)
        .map(|d| d.label.as_str())
        .filter(|l| seen.insert(*l))
        .collect();
    if objects.is_empty() {
        emotion.to_string()
    } else {
        format!("{emotion} {}", objects.join(", "))
    }
}

/// Face-emotion classifier: per-label scores, or `None` if no face.
pub trait FaceBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn emotion_scores(
        &self,
        subject: &str,
        media: Option<&Media>,
    ) -> Result<Option<Vec<(String, f64)>>, ModelError>;
}

/// Object detector.
pub trait ObjectBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn detect(&self, subject: &str, media: Option<&Media>) -> Result<Vec<Detection>, ModelError>;
}

/// Recorded perception results for one episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PerceptionRecord {
    /// `None` when no face was found.
    #[serde(default)]
    pub emotions: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    pub detections: Vec<Detection>,
}

/// Face and object results replayed from a JSON file mapping episode id to
/// [`PerceptionRecord`].
#[derive(Debug, Clone)]
pub struct PerceptionFixture {
    id: String,
    records: BTreeMap<String, PerceptionRecord>,
}

impl PerceptionFixture {
    pub fn new(id: &str, records: BTreeMap<String, PerceptionRecord>) -> Result<Self, ModelError> {
        for (ep, r) in &records {
            for d in &r.detections {
                Detection::new(&d.label, d.confidence)
                    .map_err(|e| ModelError::Replay(format!("{ep}: {e}")))?;
            }
        }
        Ok(Self {
            id: id.to_string(),
            records,
        })
    }

    pub fn from_json(id: &str, path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Replay(format!("{}: {e}", path.display())))?;
        let records = serde_json::from_str(&text)
            .map_err(|e| ModelError::Replay(format!("{}: {e}", path.display())))?;
        Self::new(id, records)
    }

    fn record(&self, subject: &str) -> Result<&PerceptionRecord, ModelError> {
        self.records
            .get(subject)
            .ok_or_else(|| ModelError::ReplayMiss {
                model_id: self.id.clone(),
                prompt_id: "perception".into(),
                subject: subject.into(),
            })
    }
}

impl FaceBackend for PerceptionFixture {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn emotion_scores(
        &self,
        subject: &str,
        _media: Option<&Media>,
    ) -> Result<Option<Vec<(String, f64)>>, ModelError> {
        Ok(self
            .record(subject)?
            .emotions
            .as_ref()
            .map(|m| m.iter().map(|(k, v)| (k.clone(), *v)).collect()))
    }
}

impl ObjectBackend for PerceptionFixture {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn detect(&self, subject: &str, _media: Option<&Media>) -> Result<Vec<Detection>, ModelError> {
        Ok(self.record(subject)?.detections.clone())
    }
}

/// Dominant face emotion plus confident object labels.
pub fn run_stacked_baseline(
    episode: &EpisodeRecord,
    corpus_root: &Path,
    face: &dyn FaceBackend,
    objects: &dyn ObjectBackend,
) -> Result<ModelOutput, ModelError> {
    let path = corpus_root.join(&episode.video_path);
    let media = if path.is_file() {
        Some(Media::from_file(&path)?)
    } else {
        None
    };
    let t0 = Instant::now();
    let id = episode.episode_id.as_str();
    let emotion = match face
        .emotion_scores(id, media.as_ref())?
        .as_deref()
        .and_then(dominant_emotion)
    {
        Some(e) => e,
        None => {
            log::warn!("{id}: no face found; emotion reported as {NO_FACE:?}");
            NO_FACE.to_string()
        }
    };
    let detections = objects.detect(id, media.as_ref())?;
    let raw_text = format_baseline(&emotion, &detections, OBJECT_THRESHOLD);
    Ok(ModelOutput {
        model_id: BASELINE_MODEL_ID.to_string(),
        episode_id: episode.episode_id.clone(),
        raw_text,
        kind: OutputKind::StackedLabels,
        latency_s: t0.elapsed().as_secs_f64(),
        cached: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(l: &str, c: f64) -> Detection {
        Detection::new(l, c).unwrap()
    }

    #[test]
    fn parse_examples() {
        let p = parse_classifier_output("neutral, person, chair, box").unwrap();
        assert_eq!(p.emotion_label, "neutral");
        assert_eq!(p.objects, ["person", "chair", "box"]);
        let p = parse_classifier_output("happy").unwrap();
        assert_eq!((p.emotion_label.as_str(), p.objects.len()), ("happy", 0));
        let p = parse_classifier_output(" Sad ,  cup , , table ").unwrap();
        assert_eq!(p.emotion_label, "Sad");
        assert_eq!(p.objects, ["cup", "table"]);
        assert_eq!(parse_classifier_output("  "), Err(ParseError::Empty));
        assert_eq!(parse_classifier_output(" , cup"), Err(ParseError::NoLabel));
    }

    #[test]
    fn baseline_threshold_is_inclusive() {
        let d = [
            det("person", 0.95),
            det("scissors", 0.86),
            det("chair", 0.81),
            det("cup", 0.40),
        ];
        assert_eq!(
            format_baseline("neutral", &d, OBJECT_THRESHOLD),
            "neutral person, scissors, chair"
        );
        assert_eq!(
            format_baseline("neutral", &[det("cup", 0.79)], OBJECT_THRESHOLD),
            "neutral"
        );
        assert_eq!(
            format_baseline("neutral", &[det("cup", 0.80)], OBJECT_THRESHOLD),
            "neutral cup"
        );
        let dup = [det("person", 0.9), det("chair", 0.9), det("person", 0.99)];
        assert_eq!(
            format_baseline("happy", &dup, OBJECT_THRESHOLD),
            "happy person, chair"
        );
    }

    #[test]
    fn tie_breaks() {
        let s = vec![
            ("sad".to_string(), 0.4),
            ("angry".to_string(), 0.4),
            ("fear".to_string(), 0.2),
        ];
        assert_eq!(dominant_emotion(&s).as_deref(), Some("angry"));
        assert_eq!(dominant_emotion(&[]), None);
        let f: Vec<String> = ["sad", "happy", "sad", "happy", "neutral"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(modal_label(&f).as_deref(), Some("happy"));
    }

    #[test]
    fn detection_validation() {
        assert!(Detection::new("cup", 1.2).is_err());
        assert!(Detection::new("a,b", 0.9).is_err());
    }

    #[test]
    fn runner_caches_mock_responses() {
        let dir = tempfile::tempdir().unwrap();
        let mock = Arc::new(MockModelBackend::new("mock-vlm").with_response("er_study1", "calm"));
        let runner = ModelRunner::new(mock.clone()).with_cache(DiskCache::new(dir.path()));
        let media = Media::from_bytes("v", vec![1, 2, 3], "video/mp4");
        let a = runner
            .complete("er_study1", &BTreeMap::new(), "E01", Some(&media))
            .unwrap();
        let b = runner
            .complete("er_study1", &BTreeMap::new(), "E01", Some(&media))
            .unwrap();
        assert_eq!(mock.calls(), 1);
        assert!(!a.cached && b.cached);
        assert_eq!(a.raw_text, b.raw_text);
    }

    #[test]
    fn empty_response_is_error() {
        let mock = Arc::new(MockModelBackend::new("m").with_response("er_study1", "  "));
        let r = ModelRunner::new(mock).complete("er_study1", &BTreeMap::new(), "E", None);
        assert!(matches!(r, Err(ModelError::EmptyResponse { .. })));
    }

    #[test]
    fn transient_failures_retried_three_times() {
        let mock = Arc::new(MockModelBackend::new("m").failing(true));
        let runner = ModelRunner::new(mock.clone()).retry_policy(RetryPolicy {
            attempts: 3,
            base_delay_ms: 1,
        });
        assert!(runner
            .complete("er_study1", &BTreeMap::new(), "E", None)
            .is_err());
        assert_eq!(mock.calls(), 3);
    }
}
