mod common;

use common::*;
use ehk::corpus::{
    AnnotationRecord, Choice, Condition, Corpus, Instrument, Phase, PreferenceRecord,
    QuestionnaireRecord, SelfReportRecord,
};
use ehk::embed::{Embedder, MockBackend};
use ehk::ermodels::{ModelOutput, OutputKind};
use ehk::evalrunner::report::{render, SIGN_CONVENTION};
use ehk::evalrunner::{
    collect_classifier, emit_report, run_ablation, run_study1, run_study2, Format, RunHeader,
    Study1Options, Study2Options, TextSpace, Variant,
};
use ehk::session::{simulate_session, SessionConfig, SessionRegistry};
use ehk::textnorm::Normalizer;
use std::sync::Arc;

fn header(run_id: &str, norm: &Normalizer, embed: &Embedder) -> RunHeader {
    RunHeader {
        run_id: run_id.into(),
        seed: 7,
        config_hash: "c".repeat(64),
        norm_hash: norm.config_hash().to_string(),
        aggregation: "mean_similarity".into(),
        embed_backend: embed.backend_id().to_string(),
        sign_convention: SIGN_CONVENTION.into(),
    }
}

fn study1_bytes() -> Vec<(std::path::PathBuf, Vec<u8>)> {
    let (cfg, corpus) = load_run(&fixtures(), "ehk.toml");
    let (episodes, outputs) = study1_inputs(&cfg, &corpus);
    let norm = Normalizer::bundled();
    let embed = Embedder::new(Arc::new(MockBackend::new(64)));
    let mut space = TextSpace::new(norm, &embed);
    let r = run_study1(
        &corpus,
        &episodes,
        &cfg.eval.models,
        &outputs,
        &mut space,
        &Study1Options::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&r, &header("r1", norm, &embed), dir.path(), &Format::ALL).unwrap();
    read_tree(dir.path())
}

#[test]
fn study1_reports_are_byte_identical_across_runs() {
    let a = study1_bytes();
    let b = study1_bytes();
    assert_eq!(a.len(), 3);
    assert_eq!(a, b);
}

#[test]
fn study1_means_equal_brute_force() {
    let (cfg, corpus) = load_run(&fixtures(), "ehk.toml");
    let (episodes, outputs) = study1_inputs(&cfg, &corpus);
    let norm = Normalizer::bundled();
    let embed = Embedder::new(Arc::new(MockBackend::new(64)));
    let mut space = TextSpace::new(norm, &embed);
    let r = run_study1(
        &corpus,
        &episodes,
        &cfg.eval.models,
        &outputs,
        &mut space,
        &Study1Options::default(),
    )
    .unwrap();

    let vec_of = |t: &str| oracle_embedding(&norm.normalize(t).joined, 64);
    for (mi, m) in cfg.eval.models.iter().enumerate() {
        let mut total = 0.0;
        for (ei, e) in episodes.iter().enumerate() {
            let out = outputs
                .iter()
                .find(|o| &o.model_id == m && o.episode_id == e.episode_id)
                .unwrap();
            let mv = vec_of(&out.raw_text);
            let anns: Vec<&AnnotationRecord> = corpus
                .annotations
                .iter()
                .filter(|a| a.episode_id == e.episode_id)
                .collect();
            let mut s = 0.0;
            for a in &anns {
                s += oracle_cosine(&mv, &vec_of(&a.text));
            }
            let sim = s / anns.len() as f64;
            assert_eq!(r.similarity[mi][ei], sim, "{m}/{}", e.episode_id);
            total += sim;
        }
        let expected = total / episodes.len() as f64;
        assert_eq!(r.similarity_summary[mi].mean, expected, "{m}");
    }
    assert_eq!(r.similarity_anova.df, vec![2, 15]);
}

#[test]
fn identical_outputs_give_zero_between_group_variance() {
    let (cfg, corpus) = load_run(&fixtures(), "ehk.toml");
    let (episodes, outputs) = study1_inputs(&cfg, &corpus);
    let first = &cfg.eval.models[0];
    let copies: Vec<ModelOutput> = cfg
        .eval
        .models
        .iter()
        .flat_map(|m| {
            outputs
                .iter()
                .filter(|o| &o.model_id == first)
                .map(move |o| ModelOutput {
                    model_id: m.clone(),
                    ..o.clone()
                })
        })
        .collect();
    let norm = Normalizer::bundled();
    let embed = Embedder::new(Arc::new(MockBackend::new(64)));
    let mut space = TextSpace::new(norm, &embed);
    let r = run_study1(
        &corpus,
        &episodes,
        &cfg.eval.models,
        &copies,
        &mut space,
        &Study1Options::default(),
    )
    .unwrap();
    assert_eq!(r.similarity_anova.statistic, 0.0);
    assert_eq!(r.similarity_anova.p_value, 1.0);
    assert!(r
        .similarity_tukey
        .iter()
        .all(|t| t.p_adj == 1.0 && !t.reject));
    assert!(r
        .similarity_summary
        .windows(2)
        .all(|w| w[0].mean == w[1].mean));
}

#[test]
fn ablation_scores_every_variant_and_pairs_by_episode() {
    let (cfg, corpus) = load_run(&fixtures(), "ehk.toml");
    let (episodes, _) = study1_inputs(&cfg, &corpus);
    let runner = cfg.model_runner(&cfg.eval.classifier_model).unwrap();
    let vlm = collect_classifier(&episodes, &corpus.root, &runner).unwrap();
    let p = cfg.perception().unwrap();
    let base = ehk::evalrunner::collect_baseline(&episodes, &corpus.root, &p, &p).unwrap();
    assert!(base.iter().all(|o| o.kind == OutputKind::StackedLabels));
    let ep02 = base.iter().find(|o| o.episode_id == "ep02").unwrap();
    assert_eq!(ep02.raw_text, "neutral person, scissors, chair");

    let norm = Normalizer::bundled();
    let embed = Embedder::new(Arc::new(MockBackend::new(64)));
    let mut space = TextSpace::new(norm, &embed);
    let r = run_ablation(
        &corpus,
        &episodes,
        &vlm,
        &base,
        &mut space,
        cfg.eval.aggregation,
        None,
    )
    .unwrap();
    assert_eq!(r.episodes_total, 6);
    assert_eq!(r.variants.len(), 6);
    assert_eq!(
        r.comparisons.iter().map(|c| c.variant).collect::<Vec<_>>(),
        Variant::ALL.to_vec()
    );
    for c in &r.comparisons {
        if let Some(t) = &c.test.result {
            assert_eq!(t.df, vec![c.n_pairs as u32 - 1]);
        }
    }
}

fn questionnaire(
    p: &str,
    phase: Phase,
    inst: Instrument,
    sub: &str,
    score: f64,
) -> QuestionnaireRecord {
    QuestionnaireRecord {
        participant_id: p.into(),
        phase,
        instrument: inst,
        subscale: sub.into(),
        score,
    }
}

#[test]
fn study2_preference_and_exclusions() {
    let mut corpus = Corpus::default();
    for i in 0..40 {
        corpus.preferences.push(PreferenceRecord {
            participant_id: format!("p{i:02}"),
            choice: if i < 31 { Choice::Ea } else { Choice::Control },
        });
    }
    for i in 0..12 {
        let p = format!("p{i:02}");
        let v = 3.0 + (i % 4) as f64 * 0.5;
        for (ph, d) in [
            (Phase::Success, 0.0),
            (Phase::Control, 0.0),
            (Phase::Ea, 0.0),
        ] {
            corpus
                .questionnaires
                .push(questionnaire(&p, ph, Instrument::Hrc, "trust", v + d));
        }
        corpus.self_reports.push(SelfReportRecord {
            participant_id: p.clone(),
            condition: Condition::Ea,
            delivery_index: 2,
            text: "I was confused and a bit annoyed".into(),
        });
    }

    let registry = SessionRegistry::new();
    let cfg = SessionConfig::default();
    let runner = ehk::ermodels::ModelRunner::new(Arc::new(
        ehk::ermodels::MockModelBackend::new("m")
            .with_response(
                "er_study2",
                "The person looks confused and slightly annoyed.",
            )
            .with_response(
                "apology_adapt",
                "Sorry for the confusion; here are your items.",
            ),
    ));
    let mut logs = Vec::new();
    for i in 0..12 {
        logs.push(
            simulate_session(
                &registry,
                Condition::Ea,
                &format!("p{i:02}"),
                3,
                &cfg,
                Some(&runner),
            )
            .unwrap(),
        );
    }
    logs[0].clip_capture = None;

    let norm = Normalizer::bundled();
    let embed = Embedder::new(Arc::new(MockBackend::new(64)));
    let mut space = TextSpace::new(norm, &embed);
    let r = run_study2(&corpus, &logs, &mut space, &Study2Options::default()).unwrap();

    assert_eq!((r.preference.ea, r.preference.n), (31, 40));
    let p = r.preference.test.result.as_ref().unwrap().p_value;
    assert!(p < 0.001);
    assert!(close(p, binomial_exact_sum(31, 40, 0.5), 1e-12));

    assert_eq!(r.sessions_total, 12);
    assert_eq!(r.alignment.len(), 11);
    assert_eq!(r.excluded.len(), 1);
    assert_eq!(r.excluded[0].participant_id, "p00");
    assert_eq!(r.excluded[0].reason, "no clip recorded");
    assert!(r.alignment.iter().all(|a| a.score > 0.0 && a.score <= 1.0));

    let trust = r.subscales.iter().find(|s| s.subscale == "trust").unwrap();
    assert_eq!(trust.complete, 12);
    let f = trust.friedman.as_ref().unwrap();
    match &f.result {
        Some(t) => assert!(t.statistic == 0.0 && t.p_value == 1.0, "{t:?}"),
        None => assert!(f.note.is_some()),
    }
    assert_eq!(trust.conditions[1].mean, trust.conditions[2].mean);
}

#[test]
fn report_headers_carry_provenance_and_fixed_precision() {
    let (cfg, corpus) = load_run(&fixtures(), "ehk.toml");
    let (episodes, outputs) = study1_inputs(&cfg, &corpus);
    let norm = Normalizer::bundled();
    let embed = Embedder::new(Arc::new(MockBackend::new(64)));
    let mut space = TextSpace::new(norm, &embed);
    let r = run_study1(
        &corpus,
        &episodes,
        &cfg.eval.models,
        &outputs,
        &mut space,
        &Study1Options::default(),
    )
    .unwrap();
    let h = header("abc123", norm, &embed);
    let csv = render(&r, &h, Format::Csv);
    for needle in [
        "# run_id: abc123",
        "# seed: 7",
        &format!("# normalization_hash: {}", norm.config_hash()),
        "# embed_backend: mock-sha256-d64",
        "# sentiment_sign: model - human",
    ] {
        assert!(csv.contains(needle), "missing {needle:?}");
    }
    let numeric = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| l.split(','))
        .filter(|f| f.contains('.') && f.parse::<f64>().is_ok());
    for f in numeric {
        assert_eq!(f.split('.').nth(1).unwrap().len(), 6, "{f}");
    }
    let md = render(&r, &h, Format::Markdown);
    assert!(md.contains("F(2, 15)"));
    let json: serde_json::Value = serde_json::from_str(&render(&r, &h, Format::Json)).unwrap();
    assert_eq!(json["header"]["run_id"], "abc123");
}
