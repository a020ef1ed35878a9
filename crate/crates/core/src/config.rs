//! Run configuration: one TOML file from which every reported number can be
//! reconstructed. Secrets come from environment variables only.
//!
//! ```toml
//! corpus = "corpus"            # paths are relative to this file
//! output_dir = "out"
//! cache_dir = "cache"
//! seed = 7                     # required
//!
//! [embed]
//! backend = "mock"             # or "remote"
//! dim = 64
//!
//! [models.gemini-2.5-flash]
//! backend = "replay"           # or "mock", "gemini"
//! replay = "replay/gemini-2.5-flash.csv"
//! ```

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use crate::cache::{sha256_hex, DiskCache};
use crate::embed::{
    AggregationMode, Embedder, EmbeddingBackend, MockBackend, RemoteBackend, RemoteFormat,
};
use crate::ermodels::{
    GeminiBackend, MockModelBackend, ModelBackend, ModelError, ModelRunner, PerceptionFixture,
    ReplayBackend, API_KEY_ENV, BASELINE_MODEL_ID, GEMINI_BASE_URL,
};
use crate::exec::RetryPolicy;
use crate::http::JsonClient;
use crate::session::SessionConfig;
use crate::stats::BayesConfig;
use crate::textnorm::{NormConfig, Normalizer};

/// Env var holding the embedding API key.
pub const EMBED_API_KEY_ENV: &str = "EHK_EMBED_API_KEY";

/// Problems reading or checking a config.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error("invalid config {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("config refers to missing path(s): {}", .0.join(", "))]
    MissingPaths(Vec<String>),
    #[error("config: {0}")]
    Invalid(String),
}

/// Which embedding backend to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedBackendKind {
    #[default]
    Mock,
    Remote,
}

/// `[embed]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub backend: EmbedBackendKind,
    /// Remote model name, passed to the service as-is.
    pub id: String,
    pub dim: usize,
    pub url: Option<String>,
    pub format: RemoteFormat,
    pub normalizes: bool,
    pub api_key_env: String,
    pub timeout_s: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            backend: EmbedBackendKind::Mock,
            id: "BAAI/bge-large-en-v1.5".into(),
            dim: 64,
            url: None,
            format: RemoteFormat::FeatureExtraction,
            normalizes: true,
            api_key_env: EMBED_API_KEY_ENV.into(),
            timeout_s: 30.0,
        }
    }
}

/// Which multimodal backend serves a model id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelBackendKind {
    #[default]
    Replay,
    Mock,
    Gemini,
}

/// One `[models.<id>]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backend: ModelBackendKind,
    /// Replay CSV (`prompt_id,subject,response`).
    pub replay: Option<PathBuf>,
    /// Injected delay for the mock backend.
    pub delay_s: f64,
    /// Fixed mock responses by prompt id.
    pub responses: BTreeMap<String, String>,
    pub base_url: String,
    pub api_key_env: String,
    pub timeout_s: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backend: ModelBackendKind::Replay,
            replay: None,
            delay_s: 0.0,
            responses: BTreeMap::new(),
            base_url: GEMINI_BASE_URL.into(),
            api_key_env: API_KEY_ENV.into(),
            timeout_s: 120.0,
        }
    }
}

/// How sentiment text is prepared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentText {
    /// Original text, as the lexicon heuristics expect.
    #[default]
    Raw,
    /// Normalized tokens joined by spaces.
    Normalized,
}

/// How per-model sentiment means are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SentimentMean {
    /// Mean of per-episode means.
    #[default]
    PerEpisode,
    /// Mean over every (output, annotation) pair.
    AllPairs,
}

/// `[eval]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Models compared in Study 1, in report order.
    pub models: Vec<String>,
    pub er_prompt: String,
    /// Model answering the label-constrained ablation prompt.
    pub classifier_model: String,
    pub aggregation: AggregationMode,
    pub sentiment_text: SentimentText,
    pub sentiment_mean: SentimentMean,
    pub alpha: f64,
    /// Episodes per gender x stage x quality cell; all episodes when unset.
    pub balanced_per_cell: Option<usize>,
    /// Keep at most this many annotations per episode (file order).
    pub max_annotations_per_episode: Option<usize>,
    /// Delivery whose self-report is compared with the emotion description.
    pub self_report_delivery: u32,
    pub hdi_mass: f64,
    pub bayes: BayesConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            models: vec![
                "gemini-2.5-flash".into(),
                "gemini-2.5-pro".into(),
                BASELINE_MODEL_ID.into(),
            ],
            er_prompt: "er_study1".into(),
            classifier_model: "gemini-2.5-flash".into(),
            aggregation: AggregationMode::MeanSimilarity,
            sentiment_text: SentimentText::Raw,
            sentiment_mean: SentimentMean::PerEpisode,
            alpha: 0.05,
            balanced_per_cell: None,
            max_annotations_per_episode: None,
            self_report_delivery: 2,
            hdi_mass: 0.95,
            bayes: BayesConfig::default(),
        }
    }
}

/// `[baseline]` table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Face and object results per episode (JSON).
    pub fixture: Option<PathBuf>,
}

/// `[session]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSection {
    /// Model serving both steps of the ea chain.
    pub model: String,
    #[serde(flatten)]
    pub sim: SessionConfig,
}

impl Default for SessionSection {
    fn default() -> Self {
        Self {
            model: "gemini-2.5-flash".into(),
            sim: SessionConfig::default(),
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: PathBuf,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_cache")]
    pub cache_dir: PathBuf,
    /// Session logs; `<output_dir>/study2/sessions` when unset.
    #[serde(default)]
    pub sessions_dir: Option<PathBuf>,
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub offline: bool,
    #[serde(default = "default_min_annotations")]
    pub min_annotations: usize,
    /// Check that every video exists under the corpus root.
    #[serde(default)]
    pub strict_videos: bool,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub textnorm: NormConfig,
    #[serde(default)]
    pub embed: EmbedConfig,
    #[serde(default)]
    pub models: BTreeMap<String, ModelConfig>,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub session: SessionSection,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_output() -> PathBuf {
    "out".into()
}
fn default_cache() -> PathBuf {
    "cache".into()
}
fn default_concurrency() -> usize {
    4
}
fn default_min_annotations() -> usize {
    3
}

fn join(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    /// Parses TOML; relative paths stay relative.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text).map_err(|msg| ConfigError::Parse {
            path: path.to_path_buf(),
            msg,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.for_each_path(|p| join(base, p));
        self.base_dir = Some(base.to_path_buf());
    }

    fn for_each_path(&mut self, mut f: impl FnMut(&mut PathBuf)) {
        f(&mut self.corpus);
        f(&mut self.output_dir);
        f(&mut self.cache_dir);
        let t = &mut self.textnorm;
        for p in [
            &mut self.sessions_dir,
            &mut t.stop_list,
            &mut t.exceptions,
            &mut t.lemma_table,
        ]
        .into_iter()
        .flatten()
        {
            f(p);
        }
        for m in self.models.values_mut() {
            if let Some(p) = &mut m.replay {
                f(p);
            }
        }
        if let Some(p) = &mut self.baseline.fixture {
            f(p);
        }
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.sessions_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("study2").join("sessions"))
    }

    /// Input files named by the config that do not exist.
    pub fn missing_paths(&self) -> Vec<String> {
        let mut want: Vec<&Path> = vec![&self.corpus];
        want.extend(
            [
                &self.textnorm.stop_list,
                &self.textnorm.exceptions,
                &self.textnorm.lemma_table,
            ]
            .into_iter()
            .flatten()
            .map(PathBuf::as_path),
        );
        want.extend(self.models.values().filter_map(|m| m.replay.as_deref()));
        want.extend(self.baseline.fixture.as_deref());
        want.into_iter()
            .filter(|p| !p.exists())
            .map(|p| p.display().to_string())
            .collect()
    }

    /// Structural checks plus [`missing_paths`](Self::missing_paths).
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.concurrency == 0 {
            return Err(ConfigError::Invalid(
                "concurrency must be at least 1".into(),
            ));
        }
        if self.embed.dim == 0 {
            return Err(ConfigError::Invalid("embed.dim must be positive".into()));
        }
        if !(self.eval.alpha > 0.0 && self.eval.alpha < 1.0) {
            return Err(ConfigError::Invalid("eval.alpha must be in (0, 1)".into()));
        }
        for (id, m) in &self.models {
            if m.backend == ModelBackendKind::Replay && m.replay.is_none() {
                return Err(ConfigError::Invalid(format!(
                    "models.{id}: replay backend needs a replay file"
                )));
            }
        }
        let missing = self.missing_paths();
        if !missing.is_empty() {
            return Err(ConfigError::MissingPaths(missing));
        }
        Ok(())
    }

    /// Canonical TOML echo with paths relative to the config directory, so
    /// the same config gives the same echo wherever it lives.
    pub fn echo(&self) -> String {
        let mut c = self.clone();
        if let Some(base) = &self.base_dir {
            c.for_each_path(|p| {
                if let Ok(rel) = p.strip_prefix(base) {
                    *p = rel.to_path_buf();
                }
            });
        }
        toml::to_string(&c).expect("config serializes")
    }

    /// Short stable id of the resolved config, used as the report run id.
    pub fn run_id(&self) -> String {
        sha256_hex(self.echo().as_bytes())[..12].to_string()
    }

    pub fn cache(&self) -> DiskCache {
        DiskCache::new(&self.cache_dir)
    }

    pub fn normalizer(&self) -> Result<Normalizer, ConfigError> {
        Normalizer::new(&self.textnorm).map_err(|e| ConfigError::Invalid(format!("textnorm: {e}")))
    }

    pub fn embed_backend(&self) -> Result<Arc<dyn EmbeddingBackend>, ConfigError> {
        let e = &self.embed;
        Ok(match e.backend {
            EmbedBackendKind::Mock => Arc::new(MockBackend::new(e.dim)),
            EmbedBackendKind::Remote => {
                let url = e.url.as_deref().ok_or_else(|| {
                    ConfigError::Invalid("embed.url is required for the remote backend".into())
                })?;
                Arc::new(
                    RemoteBackend::new(
                        &e.id,
                        e.dim,
                        url,
                        e.format,
                        e.normalizes,
                        JsonClient::api_key_from_env(&e.api_key_env),
                        Duration::from_secs_f64(e.timeout_s),
                    )
                    .map_err(|err| ConfigError::Invalid(err.to_string()))?,
                )
            }
        })
    }

    pub fn embedder(&self) -> Result<Embedder, ConfigError> {
        Ok(Embedder::new(self.embed_backend()?)
            .with_cache(self.cache())
            .offline(self.offline)
            .concurrency(self.concurrency)
            .retry_policy(self.retry))
    }

    pub fn model_backend(&self, model_id: &str) -> Result<Arc<dyn ModelBackend>, ConfigError> {
        let m = self
            .models
            .get(model_id)
            .ok_or_else(|| ConfigError::Invalid(format!("no [models.{model_id}] table")))?;
        let invalid = |e: ModelError| ConfigError::Invalid(format!("models.{model_id}: {e}"));
        Ok(match m.backend {
            ModelBackendKind::Replay => {
                let p = m.replay.as_deref().expect("checked");
                Arc::new(ReplayBackend::from_csv(model_id, p).map_err(invalid)?)
            }
            ModelBackendKind::Mock => {
                let mut b =
                    MockModelBackend::new(model_id).with_delay(Duration::from_secs_f64(m.delay_s));
                for (p, t) in &m.responses {
                    b = b.with_response(p, t);
                }
                Arc::new(b)
            }
            ModelBackendKind::Gemini => Arc::new(
                GeminiBackend::new(
                    model_id,
                    &m.base_url,
                    JsonClient::api_key_from_env(&m.api_key_env),
                    Duration::from_secs_f64(m.timeout_s),
                )
                .map_err(invalid)?,
            ),
        })
    }

    pub fn model_runner(&self, model_id: &str) -> Result<ModelRunner, ConfigError> {
        Ok(ModelRunner::new(self.model_backend(model_id)?)
            .with_cache(self.cache())
            .offline(self.offline)
            .retry_policy(self.retry)
            .concurrency(self.concurrency))
    }

    pub fn perception(&self) -> Result<PerceptionFixture, ConfigError> {
        let p = self.baseline.fixture.as_deref().ok_or_else(|| {
            ConfigError::Invalid("baseline.fixture is required for the stacked baseline".into())
        })?;
        PerceptionFixture::from_json("perception-fixture", p)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        let err = RunConfig::from_toml("corpus = \"c\"\n").unwrap_err();
        assert!(err.contains("seed"), "{err}");
    }

    #[test]
    fn defaults_and_resolution() {
        let mut c = RunConfig::from_toml(
            "corpus = \"c\"\nseed = 3\n[models.m]\nbackend = \"replay\"\nreplay = \"r.csv\"\n",
        )
        .unwrap();
        c.resolve_paths(Path::new("/base"));
        assert_eq!(c.corpus, Path::new("/base/c"));
        assert_eq!(
            c.models["m"].replay.as_deref(),
            Some(Path::new("/base/r.csv"))
        );
        assert_eq!(c.sessions_dir(), Path::new("/base/out/study2/sessions"));
        assert_eq!(c.eval.aggregation, AggregationMode::MeanSimilarity);
        assert_eq!(c.eval.sentiment_text, SentimentText::Raw);
        assert_eq!(c.missing_paths().len(), 2);
    }

    #[test]
    fn echo_round_trips() {
        let c = RunConfig::from_toml("corpus = \"c\"\nseed = 3\n").unwrap();
        assert_eq!(RunConfig::from_toml(&c.echo()).unwrap(), c);
        assert_eq!(c.run_id(), c.clone().run_id());
    }

    #[test]
    fn session_table_flattens() {
        let c = RunConfig::from_toml("corpus = \"c\"\nseed = 3\n[session]\nmodel = \"x\"\nfps = 25.0\nclip_start = \"message_end\"\n").unwrap();
        assert_eq!(c.session.model, "x");
        assert_eq!(c.session.sim.fps, 25.0);
        assert_eq!(
            c.session.sim.clip_start,
            crate::session::ClipStart::MessageEnd
        );
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("corpus = \"c\"\nseed = 3\nsed = 4\n").is_err());
    }
}
