//! Runs the model comparison on the bundled fixture corpus and prints the
//! Markdown report.
//!
//! ```text
//! cargo run --example study1
//! ```

use std::path::Path;

use ehk::config::RunConfig;
use ehk::corpus::load_corpus;
use ehk::ermodels::BASELINE_MODEL_ID;
use ehk::evalrunner::report::{render, SIGN_CONVENTION};
use ehk::evalrunner::{
    collect_baseline, collect_generative, run_study1, Format, RunHeader, Study1Options, TextSpace,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/ehk.toml");
    let cfg = RunConfig::load(&path)?;
    let corpus = load_corpus(&cfg.corpus)?;
    let mut episodes = corpus.episodes.clone();
    episodes.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));

    let mut outputs = Vec::new();
    for m in &cfg.eval.models {
        if m == BASELINE_MODEL_ID {
            let p = cfg.perception()?;
            outputs.extend(collect_baseline(&episodes, &corpus.root, &p, &p)?);
        } else {
            let runner = cfg.model_runner(m)?;
            outputs.extend(collect_generative(
                &episodes,
                &corpus.root,
                &cfg.eval.er_prompt,
                &runner,
            )?);
        }
    }

    let normalizer = cfg.normalizer()?;
    let embedder = cfg.embedder()?;
    let mut space = TextSpace::new(&normalizer, &embedder);
    let r = run_study1(
        &corpus,
        &episodes,
        &cfg.eval.models,
        &outputs,
        &mut space,
        &Study1Options::default(),
    )?;
    let header = RunHeader {
        run_id: cfg.run_id(),
        seed: cfg.seed,
        config_hash: ehk::cache::sha256_hex(cfg.echo().as_bytes()),
        norm_hash: normalizer.config_hash().to_string(),
        aggregation: cfg.eval.aggregation.as_str().to_string(),
        embed_backend: embedder.backend_id().to_string(),
        sign_convention: SIGN_CONVENTION.to_string(),
    };
    print!("{}", render(&r, &header, Format::Markdown));
    Ok(())
}
