use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::{EvalError, Summary, TextSpace};
use crate::config::{SentimentMean, SentimentText};
use crate::corpus::{Corpus, EpisodeRecord};
use crate::embed::{similarity_from_vectors, AggregationMode, EmbedError};
use crate::ermodels::ModelOutput;
use crate::sentiment::Analyzer;
use crate::stats::{one_way_anova, tukey_hsd, TestResult, TukeyPair};

/// Study-1 settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study1Options {
    pub aggregation: AggregationMode,
    pub sentiment_text: SentimentText,
    pub sentiment_mean: SentimentMean,
    pub alpha: f64,
    pub annotation_cap: Option<usize>,
}

impl Default for Study1Options {
    fn default() -> Self {
        Self {
            aggregation: AggregationMode::MeanSimilarity,
            sentiment_text: SentimentText::Raw,
            sentiment_mean: SentimentMean::PerEpisode,
            alpha: 0.05,
            annotation_cap: None,
        }
    }
}

/// Per-model similarity and sentiment against the annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study1Result {
    pub models: Vec<String>,
    pub episodes: Vec<String>,
    /// `similarity[m][e]`: aggregated cosine of model `m` on episode `e`.
    pub similarity: Vec<Vec<f64>>,
    /// `sentiment[m][e]`: mean compound difference, model minus human.
    pub sentiment: Vec<Vec<f64>>,
    pub similarity_summary: Vec<Summary>,
    pub sentiment_summary: Vec<Summary>,
    pub similarity_anova: TestResult,
    pub similarity_tukey: Vec<TukeyPair>,
    pub sentiment_anova: TestResult,
    pub sentiment_tukey: Vec<TukeyPair>,
    /// Annotations scored / dropped because they normalize to nothing.
    pub annotations_used: usize,
    pub annotations_excluded: usize,
    pub options: Study1Options,
    pub norm_hash: String,
    pub embed_backend: String,
}

fn sentiment_input<'t>(
    space: &TextSpace<'_>,
    mode: SentimentText,
    text: &'t str,
) -> std::borrow::Cow<'t, str> {
    match mode {
        SentimentText::Raw => text.into(),
        SentimentText::Normalized => space.normalize(text).joined.into(),
    }
}

/// Scores every `(model, episode)` output against the episode's annotations.
pub fn run_study1(
    corpus: &Corpus,
    episodes: &[EpisodeRecord],
    models: &[String],
    outputs: &[ModelOutput],
    space: &mut TextSpace<'_>,
    opts: &Study1Options,
) -> Result<Study1Result, EvalError> {
    if models.len() < 2 {
        return Err(EvalError::NoData(format!(
            "need at least 2 models, got {}",
            models.len()
        )));
    }
    let by_key: HashMap<(&str, &str), &ModelOutput> = outputs
        .iter()
        .map(|o| ((o.model_id.as_str(), o.episode_id.as_str()), o))
        .collect();
    let mut gaps = Vec::new();
    for m in models {
        for e in episodes {
            if !by_key.contains_key(&(m.as_str(), e.episode_id.as_str())) {
                gaps.push(format!("{m}/{}", e.episode_id));
            }
        }
    }
    if !gaps.is_empty() {
        return Err(EvalError::MissingOutputs(gaps));
    }

    let mut texts: Vec<&str> = Vec::new();
    let mut anns: Vec<Vec<&str>> = Vec::with_capacity(episodes.len());
    let (mut used, mut excluded) = (0, 0);
    for e in episodes {
        let all = corpus.annotations_for(&e.episode_id, opts.annotation_cap);
        let kept: Vec<&str> = all
            .iter()
            .map(|a| a.text.as_str())
            .filter(|t| !space.normalize(t).joined.is_empty())
            .collect();
        excluded += all.len() - kept.len();
        used += kept.len();
        if kept.is_empty() {
            return Err(EvalError::NoData(format!(
                "episode {} has no usable annotations",
                e.episode_id
            )));
        }
        texts.extend(&kept);
        anns.push(kept);
    }
    for m in models {
        for e in episodes {
            texts.push(&by_key[&(m.as_str(), e.episode_id.as_str())].raw_text);
        }
    }
    space.prepare(texts.iter().copied())?;

    let analyzer = Analyzer::bundled();
    let mut similarity = Vec::with_capacity(models.len());
    let mut sentiment = Vec::with_capacity(models.len());
    let mut sentiment_pairs: Vec<Vec<f64>> = Vec::with_capacity(models.len());
    for m in models {
        let mut sims = Vec::with_capacity(episodes.len());
        let mut sents = Vec::with_capacity(episodes.len());
        let mut pairs = Vec::new();
        for (e, ann) in episodes.iter().zip(&anns) {
            let out = &by_key[&(m.as_str(), e.episode_id.as_str())].raw_text;
            let mv = space
                .vector(out)
                .ok_or(EmbedError::EmptyText)
                .map_err(|_| {
                    EvalError::NoData(format!(
                        "output of {m} for {} is empty after normalization",
                        e.episode_id
                    ))
                })?;
            let avs: Vec<_> = ann
                .iter()
                .map(|a| space.vector(a).expect("nonempty").clone())
                .collect();
            sims.push(similarity_from_vectors(mv, &avs, opts.aggregation)?);

            let mc = analyzer
                .score(&sentiment_input(space, opts.sentiment_text, out))
                .compound;
            let mut sum = 0.0;
            for a in ann {
                let d = mc
                    - analyzer
                        .score(&sentiment_input(space, opts.sentiment_text, a))
                        .compound;
                pairs.push(d);
                sum += d;
            }
            sents.push(sum / ann.len() as f64);
        }
        similarity.push(sims);
        sentiment.push(sents);
        sentiment_pairs.push(pairs);
    }

    let groups = |table: &[Vec<f64>]| -> Vec<(String, Vec<f64>)> {
        models.iter().cloned().zip(table.iter().cloned()).collect()
    };
    let sim_groups = groups(&similarity);
    let sent_groups = groups(&sentiment);
    let similarity_summary = sim_groups.iter().map(|(m, v)| Summary::of(m, v)).collect();
    let sentiment_summary = match opts.sentiment_mean {
        SentimentMean::PerEpisode => sent_groups.iter().map(|(m, v)| Summary::of(m, v)).collect(),
        SentimentMean::AllPairs => models
            .iter()
            .zip(&sentiment_pairs)
            .map(|(m, v)| Summary::of(m, v))
            .collect(),
    };

    Ok(Study1Result {
        models: models.to_vec(),
        episodes: episodes.iter().map(|e| e.episode_id.clone()).collect(),
        similarity_anova: one_way_anova(&sim_groups)?,
        similarity_tukey: tukey_hsd(&sim_groups, opts.alpha)?,
        sentiment_anova: one_way_anova(&sent_groups)?,
        sentiment_tukey: tukey_hsd(&sent_groups, opts.alpha)?,
        similarity,
        sentiment,
        similarity_summary,
        sentiment_summary,
        annotations_used: used,
        annotations_excluded: excluded,
        options: opts.clone(),
        norm_hash: space.normalizer().config_hash().to_string(),
        embed_backend: space.embedder().backend_id().to_string(),
    })
}
