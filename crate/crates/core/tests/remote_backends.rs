mod common;

use common::*;
use ehk::cache::DiskCache;
use ehk::embed::{Embedder, RemoteBackend, RemoteFormat};
use ehk::ermodels::{GeminiBackend, Media, ModelError, ModelRunner};
use ehk::exec::RetryPolicy;
use ehk::textnorm::Normalizer;
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

const FAST: RetryPolicy = RetryPolicy {
    attempts: 3,
    base_delay_ms: 1,
};

fn gemini(url: &str, key: Option<&str>) -> Arc<GeminiBackend> {
    Arc::new(
        GeminiBackend::new(
            "gemini-test",
            url,
            key.map(str::to_string),
            Duration::from_secs(5),
        )
        .unwrap(),
    )
}

#[test]
fn gemini_request_carries_key_media_and_prompt() {
    let (url, seen) = serve(Box::new(|_, _| {
        (200, gemini_reply("The person looks surprised."))
    }));
    let runner = ModelRunner::new(gemini(&url, Some("k-123")));
    let clip = Media::from_bytes("clip", b"frames".to_vec(), "video/mp4");
    let c = runner
        .complete("er_study2", &BTreeMap::new(), "p01", Some(&clip))
        .unwrap();
    assert_eq!(c.raw_text, "The person looks surprised.");
    assert!(!c.cached);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    let r = &seen[0];
    assert_eq!(r.path, "/v1beta/models/gemini-test:generateContent");
    assert_eq!(r.header("x-goog-api-key"), Some("k-123"));
    let parts = r.body["contents"][0]["parts"].as_array().unwrap();
    assert_eq!(parts[0]["inline_data"]["mime_type"], "video/mp4");
    assert_eq!(parts[0]["inline_data"]["data"], "ZnJhbWVz");
    assert!(parts[1]["text"].as_str().unwrap().len() > 20);
}

#[test]
fn transient_failures_are_retried() {
    let (url, seen) = serve(Box::new(|n, _| {
        if n < 2 {
            (503, "{}".into())
        } else {
            (200, gemini_reply("calm"))
        }
    }));
    let runner = ModelRunner::new(gemini(&url, Some("k"))).retry_policy(FAST);
    let c = runner
        .complete("er_study2", &BTreeMap::new(), "p01", None)
        .unwrap();
    assert_eq!(c.raw_text, "calm");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(Box::new(|_, _| (400, r#"{"error":"bad"}"#.into())));
    let runner = ModelRunner::new(gemini(&url, Some("k"))).retry_policy(FAST);
    let e = runner
        .complete("er_study2", &BTreeMap::new(), "p01", None)
        .unwrap_err();
    assert!(matches!(e, ModelError::Protocol(_)), "{e:?}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn missing_key_fails_without_a_request() {
    let (url, seen) = serve(Box::new(|_, _| (200, gemini_reply("x"))));
    let runner = ModelRunner::new(gemini(&url, None));
    assert!(runner
        .complete("er_study2", &BTreeMap::new(), "p01", None)
        .is_err());
    assert!(seen.lock().unwrap().is_empty());
}

#[test]
fn cached_responses_replay_offline() {
    let (url, seen) = serve(Box::new(|_, _| (200, gemini_reply("tired and patient"))));
    let dir = tempfile::tempdir().unwrap();
    let cache = DiskCache::new(dir.path());
    let online = ModelRunner::new(gemini(&url, Some("k"))).with_cache(cache.clone());
    let first = online
        .complete("er_study2", &BTreeMap::new(), "p01", None)
        .unwrap();
    assert!(!first.cached);
    let again = online
        .complete("er_study2", &BTreeMap::new(), "p01", None)
        .unwrap();
    assert!(again.cached);
    assert_eq!(seen.lock().unwrap().len(), 1);

    let offline = ModelRunner::new(gemini(&url, Some("k")))
        .with_cache(cache)
        .offline(true);
    let hit = offline
        .complete("er_study2", &BTreeMap::new(), "p01", None)
        .unwrap();
    assert_eq!(hit.raw_text, "tired and patient");
    let miss = offline.complete("er_study2", &BTreeMap::new(), "p02", None);
    assert!(miss.is_ok(), "prompt text does not depend on the subject");
    let other_clip = Media::from_bytes("c", b"x".to_vec(), "video/mp4");
    let miss = offline.complete("er_study2", &BTreeMap::new(), "p01", Some(&other_clip));
    assert!(matches!(miss, Err(ModelError::OfflineMiss { .. })));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn remote_embeddings_parse_and_cache() {
    let (url, seen) = serve(Box::new(|_, req| {
        let text = req.body["inputs"].as_str().unwrap_or("");
        let v = [text.len() as f64, 1.0, 0.0];
        (200, serde_json::json!([v]).to_string())
    }));
    let dir = tempfile::tempdir().unwrap();
    let backend = RemoteBackend::new(
        "BAAI/bge-large-en-v1.5",
        3,
        &format!("{url}/embed"),
        RemoteFormat::FeatureExtraction,
        false,
        Some("e-key".into()),
        Duration::from_secs(5),
    )
    .unwrap();
    let embedder = Embedder::new(Arc::new(backend)).with_cache(DiskCache::new(dir.path()));
    let norm = Normalizer::bundled();
    let t = norm.normalize("The person looked happy");
    let v = embedder.embed(&t).unwrap();
    assert_eq!(v.values, vec![t.joined.len() as f64, 1.0, 0.0]);
    assert_eq!(embedder.embed(&t).unwrap().values, v.values);
    {
        let seen = seen.lock().unwrap();
        assert_eq!(seen.len(), 1);
        assert_eq!(seen[0].header("authorization"), Some("Bearer e-key"));
    }

    let backend = RemoteBackend::new(
        "BAAI/bge-large-en-v1.5",
        3,
        &format!("{url}/embed"),
        RemoteFormat::FeatureExtraction,
        false,
        None,
        Duration::from_secs(5),
    )
    .unwrap();
    let offline = Embedder::new(Arc::new(backend))
        .with_cache(DiskCache::new(dir.path()))
        .offline(true);
    assert_eq!(offline.embed(&t).unwrap().values, v.values);
    assert!(offline
        .embed(&norm.normalize("something else entirely"))
        .is_err());
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn wrong_dimension_is_rejected() {
    let (url, _) = serve(Box::new(|_, _| (200, "[0.1, 0.2]".into())));
    let backend = RemoteBackend::new(
        "m",
        3,
        &url,
        RemoteFormat::FeatureExtraction,
        true,
        None,
        Duration::from_secs(5),
    )
    .unwrap();
    let embedder = Embedder::new(Arc::new(backend));
    assert!(embedder
        .embed(&Normalizer::bundled().normalize("hello there"))
        .is_err());
}
