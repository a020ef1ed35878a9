use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::{EvalError, Summary, Tested, TextSpace};
use crate::corpus::{
    Choice, Condition, Corpus, Instrument, Phase, GODSPEED_SUBSCALES, HRC_SUBSCALES,
};
use crate::embed::cosine;
use crate::session::SessionLog;
use crate::stats::{
    ancova, bayes_contrasts, binomial_two_tailed, dagostino_pearson, friedman, mann_whitney_u,
    BayesConfig, PosteriorContrast, TestResult, NORMALITY_MIN_N,
};

/// Study-2 settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study2Options {
    /// Delivery whose self-report is compared with the emotion description.
    pub self_report_delivery: u32,
    pub hdi_mass: f64,
    pub bayes: BayesConfig,
}

impl Default for Study2Options {
    fn default() -> Self {
        Self {
            self_report_delivery: 2,
            hdi_mass: 0.95,
            bayes: BayesConfig::default(),
        }
    }
}

/// Alignment of one session's emotion description with the self-report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub participant_id: String,
    pub condition: Condition,
    pub score: f64,
}

/// A session left out of the alignment analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub participant_id: String,
    pub condition: Condition,
    pub reason: String,
}

/// Preference counts and the exact binomial test at p0 = 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preference {
    pub n: u64,
    pub ea: u64,
    pub test: Tested,
}

/// Tests for one questionnaire subscale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubscaleTests {
    pub instrument: Instrument,
    pub subscale: String,
    /// Per-condition summaries in success, control, ea order.
    pub conditions: Vec<Summary>,
    /// Friedman over complete participants (HRC subscales).
    pub friedman: Option<Tested>,
    /// ANCOVA with the pre-phase score as covariate (Godspeed subscales).
    pub ancova: Option<Tested>,
    pub normality: Vec<Tested>,
    pub contrasts: Vec<PosteriorContrast>,
    pub contrasts_note: Option<String>,
    /// Participants with all three conditions / without.
    pub complete: usize,
    pub incomplete: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study2Result {
    pub alignment: Vec<AlignmentRow>,
    pub alignment_summary: Summary,
    /// Sessions eligible for alignment (those with an emotion step).
    pub sessions_total: usize,
    pub excluded: Vec<Exclusion>,
    pub preference: Preference,
    /// Alignment of participants preferring ea vs control.
    pub preference_alignment: Tested,
    pub subscales: Vec<SubscaleTests>,
    pub options: Study2Options,
    pub norm_hash: String,
    pub embed_backend: String,
}

const CONDITIONS: [Condition; 3] = [Condition::Success, Condition::Control, Condition::Ea];

fn phase_of(c: Condition) -> Phase {
    match c {
        Condition::Success => Phase::Success,
        Condition::Control => Phase::Control,
        Condition::Ea => Phase::Ea,
    }
}

/// Runs the Study-2 analyses over loaded records and finalized session logs.
pub fn run_study2(
    corpus: &Corpus,
    logs: &[SessionLog],
    space: &mut TextSpace<'_>,
    opts: &Study2Options,
) -> Result<Study2Result, EvalError> {
    // Alignment: emotion description vs the participant's own account.
    let reports: BTreeMap<(&str, Condition, u32), &str> = corpus
        .self_reports
        .iter()
        .map(|r| {
            (
                (r.participant_id.as_str(), r.condition, r.delivery_index),
                r.text.as_str(),
            )
        })
        .collect();
    let mut pairs: Vec<(&SessionLog, &str, &str)> = Vec::new();
    let mut excluded = Vec::new();
    let eligible: Vec<&SessionLog> = logs
        .iter()
        .filter(|l| l.condition == Condition::Ea)
        .collect();
    for l in &eligible {
        let skip = |reason: &str| Exclusion {
            participant_id: l.participant_id.clone(),
            condition: l.condition,
            reason: reason.to_string(),
        };
        let er = match (&l.clip_capture, &l.er_output, l.er_fallback) {
            (None, _, _) => {
                excluded.push(skip("no clip recorded"));
                continue;
            }
            (_, None, _) | (_, _, true) => {
                excluded.push(skip("emotion step fell back"));
                continue;
            }
            (_, Some(er), false) => er.as_str(),
        };
        match reports.get(&(
            l.participant_id.as_str(),
            l.condition,
            opts.self_report_delivery,
        )) {
            Some(text)
                if !space.normalize(text).joined.is_empty()
                    && !space.normalize(er).joined.is_empty() =>
            {
                pairs.push((l, er, text))
            }
            Some(_) => excluded.push(skip("empty after normalization")),
            None => excluded.push(skip("no self-report")),
        }
    }
    space.prepare(pairs.iter().flat_map(|(_, a, b)| [*a, *b]))?;
    let mut alignment = Vec::with_capacity(pairs.len());
    for (l, er, text) in &pairs {
        let a = space.vector(er).expect("nonempty");
        let b = space.vector(text).expect("nonempty");
        alignment.push(AlignmentRow {
            participant_id: l.participant_id.clone(),
            condition: l.condition,
            score: cosine(a, b)?,
        });
    }
    for ex in &excluded {
        log::info!(
            "alignment excludes {}/{}: {}",
            ex.participant_id,
            ex.condition,
            ex.reason
        );
    }
    let scores: Vec<f64> = alignment.iter().map(|r| r.score).collect();

    // Preference.
    let n = corpus.preferences.len() as u64;
    let ea = corpus
        .preferences
        .iter()
        .filter(|p| p.choice == Choice::Ea)
        .count() as u64;
    let pref_test = if n == 0 {
        Tested::skipped("binomial", "no preference records")
    } else {
        match binomial_two_tailed(ea, n, 0.5) {
            Ok(p) => Tested::from_result(
                "binomial",
                Ok(TestResult::new("binomial_two_tailed", ea as f64, vec![], p)
                    .with_extra("n", n as f64)
                    .with_extra("p0", 0.5)),
            ),
            Err(e) => Tested::from_result("binomial", Err(e)),
        }
    };
    let choice: BTreeMap<&str, Choice> = corpus
        .preferences
        .iter()
        .map(|p| (p.participant_id.as_str(), p.choice))
        .collect();
    let group = |c: Choice| -> Vec<f64> {
        alignment
            .iter()
            .filter(|r| choice.get(r.participant_id.as_str()) == Some(&c))
            .map(|r| r.score)
            .collect()
    };
    let preference_alignment = Tested::from_result(
        "mann_whitney_u ea-preferring vs control-preferring",
        mann_whitney_u(&group(Choice::Ea), &group(Choice::Control)),
    );

    // Questionnaires.
    let mut q: BTreeMap<(Instrument, &str, &str, Phase), f64> = BTreeMap::new();
    for r in &corpus.questionnaires {
        let key = (
            r.instrument,
            r.subscale.as_str(),
            r.participant_id.as_str(),
            r.phase,
        );
        if q.insert(key, r.score).is_some() {
            log::warn!(
                "duplicate {} {} score for {} in phase {}; keeping the last",
                r.instrument,
                r.subscale,
                r.participant_id,
                r.phase
            );
        }
    }
    let present: BTreeSet<(Instrument, &str)> = q.keys().map(|k| (k.0, k.1)).collect();
    let participants: BTreeSet<&str> = q.keys().map(|k| k.2).collect();
    let ordered: Vec<(Instrument, &str)> = GODSPEED_SUBSCALES
        .iter()
        .map(|s| (Instrument::Godspeed, *s))
        .chain(HRC_SUBSCALES.iter().map(|s| (Instrument::Hrc, *s)))
        .filter(|k| present.contains(k))
        .collect();

    let mut subscales = Vec::new();
    for (inst, sub) in ordered {
        let get = |p: &str, ph: Phase| q.get(&(inst, sub, p, ph)).copied();
        let mut rows = Vec::new();
        let mut incomplete = 0;
        for p in &participants {
            let row: Option<Vec<f64>> = CONDITIONS.iter().map(|c| get(p, phase_of(*c))).collect();
            match row {
                Some(r) => rows.push((*p, r)),
                None if CONDITIONS.iter().any(|c| get(p, phase_of(*c)).is_some()) => {
                    log::info!("{inst} {sub}: {p} lacks a condition; excluded from paired tests");
                    incomplete += 1;
                }
                None => {}
            }
        }
        let by_cond: Vec<(String, Vec<f64>)> = CONDITIONS
            .iter()
            .map(|c| {
                let v: Vec<f64> = participants
                    .iter()
                    .filter_map(|p| get(p, phase_of(*c)))
                    .collect();
                (c.as_str().to_string(), v)
            })
            .collect();
        let conditions = by_cond.iter().map(|(c, v)| Summary::of(c, v)).collect();

        let friedman_t = (inst == Instrument::Hrc).then(|| {
            let m: Vec<Vec<f64>> = rows.iter().map(|(_, r)| r.clone()).collect();
            Tested::from_result(&format!("friedman {sub}"), friedman(&m))
        });

        let ancova_t = (inst == Instrument::Godspeed).then(|| {
            let (mut post, mut grp, mut cov) = (Vec::new(), Vec::new(), Vec::new());
            for p in &participants {
                let Some(pre) = get(p, Phase::Pre) else {
                    continue;
                };
                for c in CONDITIONS {
                    if let Some(v) = get(p, phase_of(c)) {
                        post.push(v);
                        grp.push(c.as_str());
                        cov.push(pre);
                    }
                }
            }
            if post.is_empty() {
                Tested::skipped(&format!("ancova {sub}"), "no pre-study scores")
            } else {
                Tested::from_result(&format!("ancova {sub}"), ancova(&post, &grp, &cov))
            }
        });

        let normality_t = by_cond
            .iter()
            .map(|(c, v)| {
                let name = format!("dagostino_pearson {sub} {c}");
                if v.len() < NORMALITY_MIN_N {
                    Tested::skipped(&name, &format!("n = {} below {}", v.len(), NORMALITY_MIN_N))
                } else {
                    Tested::from_result(&name, dagostino_pearson(v))
                }
            })
            .collect();

        let (contrasts, contrasts_note) =
            match bayes_contrasts(&by_cond, opts.hdi_mass, &opts.bayes) {
                Ok(c) => (c, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };

        subscales.push(SubscaleTests {
            instrument: inst,
            subscale: sub.to_string(),
            conditions,
            friedman: friedman_t,
            ancova: ancova_t,
            normality: normality_t,
            contrasts,
            contrasts_note,
            complete: rows.len(),
            incomplete,
        });
    }

    Ok(Study2Result {
        alignment_summary: Summary::of("alignment", &scores),
        alignment,
        sessions_total: eligible.len(),
        excluded,
        preference: Preference {
            n,
            ea,
            test: pref_test,
        },
        preference_alignment,
        subscales,
        options: opts.clone(),
        norm_hash: space.normalizer().config_hash().to_string(),
        embed_backend: space.embedder().backend_id().to_string(),
    })
}
