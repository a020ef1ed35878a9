//! The three analysis pipelines and their reports.
//!
//! * [`run_study1`]: per-episode similarity and sentiment difference of each
//!   model against the human annotations, ANOVA and Tukey HSD across models.
//! * [`run_ablation`]: combined / emotion-only / objects-only variants of
//!   the label-constrained model and the stacked baseline, paired t-tests.
//! * [`run_study2`]: emotion-description alignment with self-reports,
//!   preference, questionnaire tests and Bayesian contrasts.

mod ablation;
pub mod report;
mod study1;
mod study2;

pub use ablation::{
    decompose_baseline, decompose_classifier, run_ablation, AblationResult, Comparison, Variant,
    VariantScores,
};
pub use report::{emit_report, Format, Report, RunHeader};
pub use study1::{run_study1, Study1Options, Study1Result};
pub use study2::{run_study2, Study2Options, Study2Result, SubscaleTests};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;

use crate::corpus::EpisodeRecord;
use crate::embed::{EmbedError, Embedder, EmbeddingVector};
use crate::ermodels::{
    run_generative, run_stacked_baseline, run_vlm_classifier, FaceBackend, ModelError, ModelOutput,
    ModelRunner, ObjectBackend,
};
use crate::exec::parallel_map;
use crate::stats::{sample_mean, sample_sd, StatsError, TestResult};
use crate::textnorm::{NormalizedText, Normalizer};

/// Pipeline failure.
#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("missing model outputs: {}", .0.join(", "))]
    MissingOutputs(Vec<String>),
    #[error("offline run needs uncached responses: {}", .0.join(", "))]
    OfflineMisses(Vec<String>),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    NoData(String),
    #[error("cannot write {path}: {msg}")]
    Io { path: String, msg: String },
}

/// Mean and SD of one set of scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    pub fn of(label: &str, x: &[f64]) -> Self {
        Self {
            label: label.to_string(),
            n: x.len(),
            mean: sample_mean(x),
            sd: sample_sd(x),
        }
    }
}

/// A test that may not have been computable on the data at hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tested {
    pub name: String,
    pub result: Option<TestResult>,
    /// Why `result` is absent.
    pub note: Option<String>,
}

impl Tested {
    pub fn from_result(name: &str, r: Result<TestResult, StatsError>) -> Self {
        match r {
            Ok(t) => Self {
                name: name.to_string(),
                result: Some(t),
                note: None,
            },
            Err(e) => Self::skipped(name, &note_for(&e)),
        }
    }

    pub fn skipped(name: &str, note: &str) -> Self {
        Self {
            name: name.to_string(),
            result: None,
            note: Some(note.to_string()),
        }
    }
}

fn note_for(e: &StatsError) -> String {
    match e {
        StatsError::Domain(m) if m.contains("zero variance") => "no variance".into(),
        other => other.to_string(),
    }
}

/// Normalized texts and their embeddings, computed once per run.
pub struct TextSpace<'a> {
    normalizer: &'a Normalizer,
    embedder: &'a Embedder,
    vectors: HashMap<String, EmbeddingVector>,
}

impl<'a> TextSpace<'a> {
    pub fn new(normalizer: &'a Normalizer, embedder: &'a Embedder) -> Self {
        Self {
            normalizer,
            embedder,
            vectors: HashMap::new(),
        }
    }

    pub fn normalizer(&self) -> &Normalizer {
        self.normalizer
    }

    pub fn embedder(&self) -> &Embedder {
        self.embedder
    }

    pub fn normalize(&self, text: &str) -> NormalizedText {
        self.normalizer.normalize(text)
    }

    /// Embeds every text not seen yet. Offline misses are reported together.
    pub fn prepare<'t>(
        &mut self,
        texts: impl IntoIterator<Item = &'t str>,
    ) -> Result<(), EvalError> {
        let mut todo: Vec<NormalizedText> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for t in texts {
            let n = self.normalizer.normalize(t);
            if n.joined.is_empty()
                || self.vectors.contains_key(&n.joined)
                || !seen.insert(n.joined.clone())
            {
                continue;
            }
            todo.push(n);
        }
        let refs: Vec<&NormalizedText> = todo.iter().collect();
        let misses = self.embedder.offline_misses(&refs)?;
        if !misses.is_empty() {
            return Err(EvalError::OfflineMisses(misses));
        }
        let vecs = self.embedder.embed_all(&refs)?;
        for (n, v) in todo.into_iter().zip(vecs) {
            self.vectors.insert(n.joined, v);
        }
        Ok(())
    }

    /// Vector of a prepared text; `None` when it normalizes to nothing.
    pub fn vector(&self, text: &str) -> Option<&EmbeddingVector> {
        let n = self.normalizer.normalize(text);
        if n.joined.is_empty() {
            return None;
        }
        Some(self.vectors.get(&n.joined).expect("text was prepared"))
    }
}

fn offline_key(e: &ModelError) -> Option<String> {
    match e {
        ModelError::OfflineMiss { model_id, key } => Some(format!("models/{model_id}/{key}")),
        _ => None,
    }
}

/// Splits per-episode results into outputs, or the full list of offline
/// misses, or the first other error.
fn gather(results: Vec<Result<ModelOutput, ModelError>>) -> Result<Vec<ModelOutput>, EvalError> {
    let mut misses = Vec::new();
    let mut outputs = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(o) => outputs.push(o),
            Err(e) => match offline_key(&e) {
                Some(k) => misses.push(k),
                None => {
                    first_err.get_or_insert(e);
                }
            },
        }
    }
    if !misses.is_empty() {
        misses.sort();
        return Err(EvalError::OfflineMisses(misses));
    }
    if let Some(e) = first_err {
        return Err(e.into());
    }
    Ok(outputs)
}

/// Free-text outputs of one model for `episodes`, fetched in parallel.
pub fn collect_generative(
    episodes: &[EpisodeRecord],
    corpus_root: &Path,
    prompt_id: &str,
    runner: &ModelRunner,
) -> Result<Vec<ModelOutput>, EvalError> {
    gather(parallel_map(episodes, runner.concurrency_limit(), |e| {
        run_generative(e, corpus_root, prompt_id, runner)
    }))
}

/// Label-constrained outputs for `episodes`.
pub fn collect_classifier(
    episodes: &[EpisodeRecord],
    corpus_root: &Path,
    runner: &ModelRunner,
) -> Result<Vec<ModelOutput>, EvalError> {
    gather(parallel_map(episodes, runner.concurrency_limit(), |e| {
        run_vlm_classifier(e, corpus_root, runner)
    }))
}

/// Stacked-baseline outputs for `episodes`.
pub fn collect_baseline(
    episodes: &[EpisodeRecord],
    corpus_root: &Path,
    face: &dyn FaceBackend,
    objects: &dyn ObjectBackend,
) -> Result<Vec<ModelOutput>, EvalError> {
    gather(
        episodes
            .iter()
            .map(|e| run_stacked_baseline(e, corpus_root, face, objects))
            .collect(),
    )
}

/// Fixed-precision number for tables.
pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else {
        format!("{x:.6}")
    }
}

/// `p < .001` or `p = 0.xxx`.
pub fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "p < .001".into()
    } else {
        format!("p = {p:.3}")
    }
}
