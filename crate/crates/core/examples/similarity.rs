//! Cosine similarity of a model description against reference annotations,
//! using the offline hashed embedding.
//!
//! ```text
//! cargo run --example similarity -- "The person looks focused" "Concentrating on the task" "Looks bored"
//! ```

use std::sync::Arc;

use ehk::embed::{episode_similarity, AggregationMode, Embedder, MockBackend};
use ehk::textnorm::Normalizer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (model, refs) = match args.split_first() {
        Some((m, r)) if !r.is_empty() => (m.clone(), r.to_vec()),
        _ => (
            "The human appears focused and calm while taking the items.".to_string(),
            vec![
                "The person is concentrating on the task.".to_string(),
                "Calm and attentive.".to_string(),
                "They look a little bored.".to_string(),
            ],
        ),
    };
    let norm = Normalizer::bundled();
    let embedder = Embedder::new(Arc::new(MockBackend::new(256)));
    let m = norm.normalize(&model);
    let anns: Vec<_> = refs.iter().map(|r| norm.normalize(r)).collect();
    for (r, a) in refs.iter().zip(&anns) {
        let s = episode_similarity(
            &embedder,
            &m,
            std::slice::from_ref(a),
            AggregationMode::MeanSimilarity,
        )?;
        println!("{s:.4}\t{r}");
    }
    for mode in [
        AggregationMode::MeanSimilarity,
        AggregationMode::MeanEmbedding,
    ] {
        let s = episode_similarity(&embedder, &m, &anns, mode)?;
        println!("{}: {s:.4}", mode.as_str());
    }
    Ok(())
}
