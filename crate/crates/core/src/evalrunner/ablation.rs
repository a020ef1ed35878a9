use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use super::{EvalError, Summary, Tested, TextSpace};
use crate::corpus::{Corpus, EpisodeRecord};
use crate::embed::{similarity_from_vectors, AggregationMode};
use crate::ermodels::{parse_classifier_output, ModelOutput};
use crate::stats::paired_t;

/// Which part of an output is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Combined,
    EmotionOnly,
    ObjectsOnly,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::Combined,
        Variant::EmotionOnly,
        Variant::ObjectsOnly,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Combined => "combined",
            Variant::EmotionOnly => "emotion_only",
            Variant::ObjectsOnly => "objects_only",
        }
    }
}

/// `[combined, emotion_only, objects_only]` of a classifier answer.
pub fn decompose_classifier(raw: &str) -> Result<[String; 3], crate::ermodels::ParseError> {
    let p = parse_classifier_output(raw)?;
    Ok([
        raw.trim().to_string(),
        p.emotion_label,
        p.objects.join(", "),
    ])
}

/// `[combined, emotion_only, objects_only]` of a baseline output: the
/// emotion is the first whitespace-delimited token.
pub fn decompose_baseline(raw: &str) -> [String; 3] {
    let t = raw.trim();
    let (emotion, objects) = t.split_once(char::is_whitespace).unwrap_or((t, ""));
    [
        t.to_string(),
        emotion.to_string(),
        objects.trim().to_string(),
    ]
}

/// Scores of one (source, variant).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScores {
    /// `"vlm"` or `"baseline"`.
    pub source: String,
    pub variant: Variant,
    /// Episode id to similarity; episodes whose text is empty are absent.
    pub scores: BTreeMap<String, f64>,
    pub summary: Summary,
}

/// Paired comparison of one variant, VLM minus baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub variant: Variant,
    pub n_pairs: usize,
    pub excluded: usize,
    pub test: Tested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub episodes_total: usize,
    /// Classifier outputs that could not be parsed (excluded).
    pub unparseable: Vec<String>,
    pub variants: Vec<VariantScores>,
    pub comparisons: Vec<Comparison>,
    pub aggregation: AggregationMode,
    pub norm_hash: String,
    pub embed_backend: String,
}

/// Scores the three variants of both sources and compares them pairwise by
/// episode.
pub fn run_ablation(
    corpus: &Corpus,
    episodes: &[EpisodeRecord],
    classifier_outputs: &[ModelOutput],
    baseline_outputs: &[ModelOutput],
    space: &mut TextSpace<'_>,
    aggregation: AggregationMode,
    annotation_cap: Option<usize>,
) -> Result<AblationResult, EvalError> {
    let vlm_by: HashMap<&str, &str> = classifier_outputs
        .iter()
        .map(|o| (o.episode_id.as_str(), o.raw_text.as_str()))
        .collect();
    let base_by: HashMap<&str, &str> = baseline_outputs
        .iter()
        .map(|o| (o.episode_id.as_str(), o.raw_text.as_str()))
        .collect();

    let mut gaps = Vec::new();
    let mut unparseable = Vec::new();
    let mut vlm: BTreeMap<&str, [String; 3]> = BTreeMap::new();
    let mut base: BTreeMap<&str, [String; 3]> = BTreeMap::new();
    for e in episodes {
        let id = e.episode_id.as_str();
        match vlm_by.get(id) {
            None => gaps.push(format!("classifier/{id}")),
            Some(raw) => match decompose_classifier(raw) {
                Ok(parts) => {
                    vlm.insert(id, parts);
                }
                Err(err) => {
                    log::warn!("{id}: unparseable classifier output ({err}): {raw:?}");
                    unparseable.push(id.to_string());
                }
            },
        }
        match base_by.get(id) {
            None => gaps.push(format!("baseline/{id}")),
            Some(raw) => {
                base.insert(id, decompose_baseline(raw));
            }
        }
    }
    if !gaps.is_empty() {
        return Err(EvalError::MissingOutputs(gaps));
    }
    if vlm.is_empty() {
        return Err(EvalError::NoData(
            "every classifier output is unparseable".into(),
        ));
    }

    let anns: BTreeMap<&str, Vec<&str>> = episodes
        .iter()
        .map(|e| {
            let v: Vec<&str> = corpus
                .annotations_for(&e.episode_id, annotation_cap)
                .into_iter()
                .map(|a| a.text.as_str())
                .filter(|t| !space.normalize(t).joined.is_empty())
                .collect();
            (e.episode_id.as_str(), v)
        })
        .collect();
    let mut texts: Vec<&str> = anns.values().flatten().copied().collect();
    texts.extend(
        vlm.values()
            .chain(base.values())
            .flat_map(|p| p.iter().map(String::as_str)),
    );
    space.prepare(texts)?;

    let score = |parts: &BTreeMap<&str, [String; 3]>,
                 idx: usize|
     -> Result<BTreeMap<String, f64>, EvalError> {
        let mut out = BTreeMap::new();
        for (id, p) in parts {
            let Some(mv) = space.vector(&p[idx]) else {
                continue;
            };
            let avs: Vec<_> = anns[id]
                .iter()
                .map(|a| space.vector(a).expect("nonempty").clone())
                .collect();
            if avs.is_empty() {
                continue;
            }
            out.insert(
                id.to_string(),
                similarity_from_vectors(mv, &avs, aggregation)?,
            );
        }
        Ok(out)
    };

    let mut variants = Vec::new();
    let mut comparisons = Vec::new();
    for (i, v) in Variant::ALL.into_iter().enumerate() {
        let a = score(&vlm, i)?;
        let b = score(&base, i)?;
        let (mut xa, mut xb) = (Vec::new(), Vec::new());
        for (id, s) in &a {
            if let Some(t) = b.get(id) {
                xa.push(*s);
                xb.push(*t);
            }
        }
        let name = format!("paired_t {} vlm-baseline", v.as_str());
        comparisons.push(Comparison {
            variant: v,
            n_pairs: xa.len(),
            excluded: episodes.len() - xa.len(),
            test: Tested::from_result(&name, paired_t(&xa, &xb)),
        });
        for (source, scores) in [("vlm", a), ("baseline", b)] {
            let vals: Vec<f64> = scores.values().copied().collect();
            variants.push(VariantScores {
                source: source.into(),
                variant: v,
                summary: Summary::of(&format!("{source} {}", v.as_str()), &vals),
                scores,
            });
        }
    }

    Ok(AblationResult {
        episodes_total: episodes.len(),
        unparseable,
        variants,
        comparisons,
        aggregation,
        norm_hash: space.normalizer().config_hash().to_string(),
        embed_backend: space.embedder().backend_id().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifier_parts() {
        let p = decompose_classifier("neutral, person, chair, box").unwrap();
        assert_eq!(
            p,
            [
                "neutral, person, chair, box",
                "neutral",
                "person, chair, box"
            ]
        );
        assert!(decompose_classifier("").is_err());
    }

    #[test]
    fn baseline_parts() {
        assert_eq!(
            decompose_baseline("neutral person, scissors, chair"),
            [
                "neutral person, scissors, chair",
                "neutral",
                "person, scissors, chair"
            ]
        );
        assert_eq!(decompose_baseline("happy"), ["happy", "happy", ""]);
    }
}
