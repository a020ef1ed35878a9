//! Model calls through the response cache: the second call and an offline
//! runner are both served from disk.
//!
//! ```text
//! cargo run --example model_cache
//! ```

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use ehk::cache::DiskCache;
use ehk::ermodels::{Media, MockModelBackend, ModelRunner};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cache = DiskCache::new(dir.path());
    let backend = MockModelBackend::new("mock-vlm")
        .with_delay(Duration::from_millis(300))
        .with_response(
            "er_study2",
            "The person looks puzzled and a little impatient.",
        );
    let runner = ModelRunner::new(Arc::new(backend)).with_cache(cache.clone());
    let clip = Media::from_bytes("clip", b"frames".to_vec(), "video/mp4");

    for attempt in 1..=2 {
        let c = runner.complete("er_study2", &BTreeMap::new(), "p01", Some(&clip))?;
        println!(
            "call {attempt}: cached = {}, latency {:.3} s, {:?}",
            c.cached, c.latency_s, c.raw_text
        );
    }
    let offline = ModelRunner::new(Arc::new(MockModelBackend::new("mock-vlm")))
        .with_cache(cache.clone())
        .offline(true);
    let c = offline.complete("er_study2", &BTreeMap::new(), "p01", Some(&clip))?;
    println!("offline: cached = {}, {:?}", c.cached, c.raw_text);
    for e in cache.list()? {
        println!(
            "{}/{}/{} ({} bytes)",
            e.namespace, e.backend, e.key, e.bytes
        );
    }
    Ok(())
}
