//! The `ehk` command line.
//!
//! Exit codes: 0 ok, 1 validation issues, 2 load failure, 3 offline cache
//! miss, 4 session state violation.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use crate::cache::{sha256_hex, DiskCache};
use crate::config::{ModelBackendKind, RunConfig};
use crate::corpus::{
    load_corpus, select_balanced, validate_corpus, validate_videos, Condition, Corpus,
    EpisodeRecord,
};
use crate::embed::CachedEmbedding;
use crate::ermodels::{CachedResponse, BASELINE_MODEL_ID};
use crate::evalrunner::{
    collect_baseline, collect_classifier, collect_generative, emit_report, report::SIGN_CONVENTION,
    run_ablation, run_study1, run_study2, EvalError, Format, Report, RunHeader, Study1Options,
    Study2Options, TextSpace,
};
use crate::session::{counterbalance, simulate_session, write_log, SessionError, SessionRegistry};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ISSUES: i32 = 1;
pub const EXIT_LOAD: i32 = 2;
pub const EXIT_OFFLINE: i32 = 3;
pub const EXIT_STATE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "ehk",
    version,
    about = "Emotion-aware handover evaluation toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(default_value = "ehk.toml")]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Md,
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Md => Format::Markdown,
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the config and corpus and report data issues.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Run analysis pipelines and write reports.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        study1: bool,
        #[arg(long)]
        ablation: bool,
        #[arg(long)]
        study2: bool,
        /// Serve model and embedding calls from the cache only.
        #[arg(long)]
        offline: bool,
        /// Report formats; all when omitted.
        #[arg(long, value_enum)]
        format: Vec<FormatArg>,
    },
    /// Run handover sessions and write their logs.
    Session {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        condition: Option<Condition>,
        #[arg(long)]
        participant: Option<String>,
        /// Use the simulated robot.
        #[arg(long)]
        simulate: bool,
        /// Every corpus participant under all three conditions, in
        /// counterbalanced order.
        #[arg(long, conflicts_with_all = ["condition", "participant"])]
        all: bool,
        #[arg(long)]
        offline: bool,
    },
    /// Inspect or clean the response cache.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    /// List entries.
    Ls {
        #[command(flatten)]
        common: Common,
    },
    /// Check that every entry decodes and matches its key.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Delete interrupted writes and entries that fail verification.
    Gc {
        #[command(flatten)]
        common: Common,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_LOAD } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Validate { common } => cmd_validate(&common),
        Command::Eval {
            common,
            study1,
            ablation,
            study2,
            offline,
            format,
        } => {
            let all = !(study1 || ablation || study2);
            let formats: Vec<Format> = if format.is_empty() {
                Format::ALL.to_vec()
            } else {
                format.into_iter().map(Format::from).collect()
            };
            cmd_eval(
                &common,
                [study1 || all, ablation || all, study2 || all],
                offline,
                &formats,
            )
        }
        Command::Session {
            common,
            condition,
            participant,
            simulate,
            all,
            offline,
        } => cmd_session(
            &common,
            condition,
            participant.as_deref(),
            simulate,
            all,
            offline,
        ),
        Command::Cache { action } => match action {
            CacheAction::Ls { common } => cmd_cache(&common, CacheOp::Ls),
            CacheAction::Verify { common } => cmd_cache(&common, CacheOp::Verify),
            CacheAction::Gc { common } => cmd_cache(&common, CacheOp::Gc),
        },
    }
}

fn fail(code: i32, msg: impl std::fmt::Display) -> i32 {
    eprintln!("error: {msg}");
    code
}

fn load_config(common: &Common) -> Result<RunConfig, i32> {
    let mut cfg = RunConfig::load(&common.config).map_err(|e| fail(EXIT_LOAD, e))?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.check().map_err(|e| fail(EXIT_LOAD, e))?;
    Ok(cfg)
}

fn load_checked_corpus(cfg: &RunConfig) -> Result<Corpus, i32> {
    let corpus = load_corpus(&cfg.corpus).map_err(|e| fail(EXIT_LOAD, e))?;
    for w in &corpus.warnings {
        eprintln!("warning: {w}");
    }
    Ok(corpus)
}

/// `validate`: exit 0 iff the corpus has no issues.
pub fn cmd_validate(common: &Common) -> i32 {
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let corpus = match load_checked_corpus(&cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    println!(
        "episodes {}, annotations {}, self-reports {}, questionnaire scores {}, preferences {}",
        corpus.episodes.len(),
        corpus.annotations.len(),
        corpus.self_reports.len(),
        corpus.questionnaires.len(),
        corpus.preferences.len()
    );
    let mut issues = validate_corpus(&corpus, cfg.min_annotations);
    if cfg.strict_videos {
        issues.extend(validate_videos(&corpus));
    }
    if issues.is_empty() {
        println!("ok");
        return EXIT_OK;
    }
    for i in &issues {
        println!("issue: {i}");
    }
    EXIT_ISSUES
}

fn eval_code(e: &EvalError) -> i32 {
    match e {
        EvalError::OfflineMisses(keys) => {
            eprintln!(
                "error: offline run needs {} uncached response(s):",
                keys.len()
            );
            for k in keys {
                eprintln!("  missing {k}");
            }
            EXIT_OFFLINE
        }
        other => fail(EXIT_LOAD, other),
    }
}

fn selected_episodes(cfg: &RunConfig, corpus: &Corpus) -> Result<Vec<EpisodeRecord>, i32> {
    match cfg.eval.balanced_per_cell {
        Some(n) => select_balanced(&corpus.episodes, n, cfg.seed).map_err(|e| fail(EXIT_LOAD, e)),
        None => {
            let mut v = corpus.episodes.clone();
            v.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
            Ok(v)
        }
    }
}

/// `eval`: runs the chosen pipelines; `which` is `[study1, ablation, study2]`.
pub fn cmd_eval(common: &Common, which: [bool; 3], offline: bool, formats: &[Format]) -> i32 {
    let mut cfg = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    cfg.offline |= offline;
    let corpus = match load_checked_corpus(&cfg) {
        Ok(c) => c,
        Err(code) => return code,
    };
    match eval_inner(&cfg, &corpus, which, formats) {
        Ok(()) => EXIT_OK,
        Err(code) => code,
    }
}

fn eval_inner(
    cfg: &RunConfig,
    corpus: &Corpus,
    which: [bool; 3],
    formats: &[Format],
) -> Result<(), i32> {
    let load = |e: &dyn std::fmt::Display| fail(EXIT_LOAD, e);
    let normalizer = cfg.normalizer().map_err(|e| load(&e))?;
    let embedder = cfg.embedder().map_err(|e| load(&e))?;
    let episodes = selected_episodes(cfg, corpus)?;
    let echo = cfg.echo();
    let run_id = cfg.run_id();
    let header = RunHeader {
        run_id: run_id.clone(),
        seed: cfg.seed,
        config_hash: sha256_hex(echo.as_bytes()),
        norm_hash: normalizer.config_hash().to_string(),
        aggregation: cfg.eval.aggregation.as_str().to_string(),
        embed_backend: embedder.backend_id().to_string(),
        sign_convention: SIGN_CONVENTION.to_string(),
    };
    let out_dir = cfg.output_dir.join("reports").join(&run_id);
    let mut space = TextSpace::new(&normalizer, &embedder);
    let cap = cfg.eval.max_annotations_per_episode;
    let mut written = Vec::new();
    let emit = |r: &dyn Report, written: &mut Vec<PathBuf>| -> Result<(), i32> {
        written.extend(emit_report(r, &header, &out_dir, formats).map_err(|e| eval_code(&e))?);
        Ok(())
    };

    let mut baseline = None;
    let mut get_baseline = || -> Result<Vec<_>, i32> {
        if baseline.is_none() {
            let p = cfg.perception().map_err(|e| load(&e))?;
            baseline =
                Some(collect_baseline(&episodes, &corpus.root, &p, &p).map_err(|e| eval_code(&e))?);
        }
        Ok(baseline.clone().expect("set above"))
    };

    if which[0] {
        let mut outputs = Vec::new();
        let mut misses = Vec::new();
        for m in &cfg.eval.models {
            let got = if m == BASELINE_MODEL_ID {
                Ok(get_baseline()?)
            } else {
                let runner = cfg.model_runner(m).map_err(|e| load(&e))?;
                collect_generative(&episodes, &corpus.root, &cfg.eval.er_prompt, &runner)
            };
            match got {
                Ok(o) => outputs.extend(o),
                Err(EvalError::OfflineMisses(k)) => misses.extend(k),
                Err(e) => return Err(eval_code(&e)),
            }
        }
        if !misses.is_empty() {
            return Err(eval_code(&EvalError::OfflineMisses(misses)));
        }
        let opts = Study1Options {
            aggregation: cfg.eval.aggregation,
            sentiment_text: cfg.eval.sentiment_text,
            sentiment_mean: cfg.eval.sentiment_mean,
            alpha: cfg.eval.alpha,
            annotation_cap: cap,
        };
        let r = run_study1(
            corpus,
            &episodes,
            &cfg.eval.models,
            &outputs,
            &mut space,
            &opts,
        )
        .map_err(|e| eval_code(&e))?;
        println!(
            "Study 1 ({} episodes, {})",
            r.episodes.len(),
            opts.aggregation.as_str()
        );
        println!(
            "  {:<24} {:>10} {:>10} {:>12} {:>12}",
            "model", "sim M", "sim SD", "sent M", "sent SD"
        );
        for (s, t) in r.similarity_summary.iter().zip(&r.sentiment_summary) {
            println!(
                "  {:<24} {:>10.3} {:>10.3} {:>12.3} {:>12.3}",
                s.label, s.mean, s.sd, t.mean, t.sd
            );
        }
        println!(
            "  similarity ANOVA: {}",
            crate::evalrunner::report::describe_test(&r.similarity_anova)
        );
        emit(&r, &mut written)?;
    }

    if which[1] {
        let runner = cfg
            .model_runner(&cfg.eval.classifier_model)
            .map_err(|e| load(&e))?;
        let vlm =
            collect_classifier(&episodes, &corpus.root, &runner).map_err(|e| eval_code(&e))?;
        let base = get_baseline()?;
        let r = run_ablation(
            corpus,
            &episodes,
            &vlm,
            &base,
            &mut space,
            cfg.eval.aggregation,
            cap,
        )
        .map_err(|e| eval_code(&e))?;
        println!("Ablation ({} episodes)", r.episodes_total);
        for v in &r.variants {
            println!(
                "  {:<24} M = {:.3}, SD = {:.3}",
                v.summary.label, v.summary.mean, v.summary.sd
            );
        }
        emit(&r, &mut written)?;
    }

    if which[2] {
        let logs = crate::session::load_session_logs(&cfg.sessions_dir()).map_err(|e| load(&e))?;
        if logs.is_empty() {
            eprintln!(
                "warning: no session logs under {}",
                cfg.sessions_dir().display()
            );
        }
        let opts = Study2Options {
            self_report_delivery: cfg.eval.self_report_delivery,
            hdi_mass: cfg.eval.hdi_mass,
            bayes: cfg.eval.bayes.clone(),
        };
        let r = run_study2(corpus, &logs, &mut space, &opts).map_err(|e| eval_code(&e))?;
        println!(
            "Study 2: alignment M = {:.3}, SD = {:.3} over {} of {} sessions; {} of {} preferred ea",
            r.alignment_summary.mean,
            r.alignment_summary.sd,
            r.alignment.len(),
            r.sessions_total,
            r.preference.ea,
            r.preference.n
        );
        emit(&r, &mut written)?;
    }

    let backends: BTreeMap<&str, &str> = cfg
        .models
        .iter()
        .map(|(id, m)| {
            let kind = match m.backend {
                ModelBackendKind::Replay => "replay",
                ModelBackendKind::Mock => "mock",
                ModelBackendKind::Gemini => "gemini",
            };
            (id.as_str(), kind)
        })
        .collect();
    let run = json!({
        "run_id": run_id,
        "seed": cfg.seed,
        "config": echo,
        "normalization_hash": header.norm_hash,
        "embed_backend": header.embed_backend,
        "model_backends": backends,
        "episodes": episodes.iter().map(|e| e.episode_id.as_str()).collect::<Vec<_>>(),
        "reports": written.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy()).collect::<Vec<_>>(),
    });
    let run_path = out_dir.join("run.json");
    let mut text = serde_json::to_string_pretty(&run).expect("serializable");
    text.push('\n');
    std::fs::create_dir_all(&out_dir)
        .and_then(|_| std::fs::write(&run_path, text))
        .map_err(|e| {
            fail(
                EXIT_LOAD,
                format!("cannot write {}: {e}", run_path.display()),
            )
        })?;
    println!("reports in {}", out_dir.display());
    Ok(())
}

fn session_code(e: &SessionError) -> i32 {
    match e {
        SessionError::Io { .. } | SessionError::Log { .. } => fail(EXIT_LOAD, e),
        other => fail(EXIT_STATE, format!("session state violation: {other}")),
    }
}

/// `session`: simulates sessions and writes their logs.
pub fn cmd_session(
    common: &Common,
    condition: Option<Condition>,
    participant: Option<&str>,
    simulate: bool,
    all: bool,
    offline: bool,
) -> i32 {
    if !simulate {
        return fail(
            EXIT_LOAD,
            "only simulated sessions are supported; pass --simulate",
        );
    }
    let mut cfg = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    cfg.offline |= offline;
    let plan: Vec<(String, Condition)> = if all {
        let corpus = match load_checked_corpus(&cfg) {
            Ok(c) => c,
            Err(code) => return code,
        };
        counterbalance(&corpus.participants(), cfg.seed)
            .into_iter()
            .flat_map(|(p, order)| order.into_iter().map(move |c| (p.clone(), c)))
            .collect()
    } else {
        match (condition, participant) {
            (Some(c), Some(p)) => vec![(p.to_string(), c)],
            _ => {
                return fail(
                    EXIT_LOAD,
                    "--condition and --participant are required without --all",
                )
            }
        }
    };
    let needs_model = plan.iter().any(|(_, c)| *c == Condition::Ea);
    let runner = if needs_model {
        match cfg.model_runner(&cfg.session.model) {
            Ok(r) => Some(r),
            Err(e) => return fail(EXIT_LOAD, e),
        }
    } else {
        None
    };
    let registry = SessionRegistry::new();
    let dir = cfg.sessions_dir();
    for (p, c) in &plan {
        let log = match simulate_session(
            &registry,
            *c,
            p,
            cfg.seed,
            &cfg.session.sim,
            runner.as_ref(),
        ) {
            Ok(l) => l,
            Err(e) => return session_code(&e),
        };
        if let Err(e) = log.check_invariants() {
            return session_code(&e);
        }
        let path = match write_log(&log, &dir) {
            Ok(p) => p,
            Err(e) => return session_code(&e),
        };
        let apology = match &log.apology {
            Some(a) => format!(", apology {:?}", a.generated_text),
            None => String::new(),
        };
        println!(
            "{p} {c}: {} model call(s){}{apology} -> {}",
            log.model_calls(),
            if log.is_fallback() { " (fallback)" } else { "" },
            path.display()
        );
    }
    EXIT_OK
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CacheOp {
    Ls,
    Verify,
    Gc,
}

/// Why an entry fails verification, if it does.
fn entry_problem(namespace: &str, key: &str, path: &Path) -> Option<String> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) => return Some(e.to_string()),
    };
    match namespace {
        crate::embed::CACHE_NAMESPACE => match serde_json::from_slice::<CachedEmbedding>(&bytes) {
            Err(e) => Some(format!("undecodable: {e}")),
            Ok(c) if c.text_hash != key => {
                Some(format!("text hash {} does not match key", c.text_hash))
            }
            Ok(c) if c.values.len() != c.dim => {
                Some(format!("{} values for dim {}", c.values.len(), c.dim))
            }
            Ok(_) => None,
        },
        crate::ermodels::CACHE_NAMESPACE => serde_json::from_slice::<CachedResponse>(&bytes)
            .err()
            .map(|e| format!("undecodable: {e}")),
        _ => serde_json::from_slice::<serde_json::Value>(&bytes)
            .err()
            .map(|e| format!("undecodable: {e}")),
    }
}

fn cmd_cache(common: &Common, op: CacheOp) -> i32 {
    let cfg = match load_config(common) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let cache = DiskCache::new(&cfg.cache_dir);
    let (entries, temps) = match (cache.list(), cache.stale_temp_files()) {
        (Ok(e), Ok(t)) => (e, t),
        (Err(e), _) | (_, Err(e)) => return fail(EXIT_LOAD, e),
    };
    match op {
        CacheOp::Ls => {
            let mut total = 0;
            for e in &entries {
                println!("{}/{}/{}\t{}", e.namespace, e.backend, e.key, e.bytes);
                total += e.bytes;
            }
            println!(
                "{} entries, {} bytes, {} interrupted writes",
                entries.len(),
                total,
                temps.len()
            );
            EXIT_OK
        }
        CacheOp::Verify | CacheOp::Gc => {
            let bad: Vec<_> = entries
                .iter()
                .filter_map(|e| entry_problem(&e.namespace, &e.key, &e.path).map(|why| (e, why)))
                .collect();
            for (e, why) in &bad {
                println!("bad {}/{}/{}: {why}", e.namespace, e.backend, e.key);
            }
            for t in &temps {
                println!("interrupted write {}", t.display());
            }
            if op == CacheOp::Verify {
                println!(
                    "{} entries checked, {} bad, {} interrupted writes",
                    entries.len(),
                    bad.len(),
                    temps.len()
                );
                return if bad.is_empty() && temps.is_empty() {
                    EXIT_OK
                } else {
                    EXIT_ISSUES
                };
            }
            let doomed = bad.iter().map(|(e, _)| &e.path).chain(&temps);
            let mut removed = 0;
            for p in doomed {
                if let Err(e) = cache.remove(p) {
                    return fail(EXIT_LOAD, e);
                }
                removed += 1;
            }
            println!(
                "removed {removed} file(s), kept {}",
                entries.len() - bad.len()
            );
            EXIT_OK
        }
    }
}
