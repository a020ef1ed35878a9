//! Annotation corpus: episodes, free-text annotations and the Study-2
//! participant records, loaded from CSV files under one root directory.
//!
//! ```text
//! <root>/episodes.csv          episode_id,participant_id,gender,stage,handover_quality,video_path,duration_s
//! <root>/annotations.csv       episode_id,annotator_id,text
//! <root>/study2/selfreports.csv      participant_id,condition,delivery_index,text
//! <root>/study2/questionnaires.csv   participant_id,phase,instrument,subscale,score
//! <root>/study2/preferences.csv      participant_id,choice
//! ```
//!
//! `episodes.csv` and `annotations.csv` are required. The `study2/` files are
//! optional; a Study-1-only corpus simply has no participant records.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

macro_rules! string_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $s)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self { $($name::$variant => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl std::str::FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s.trim() {
                    $($s => Ok($name::$variant),)+
                    other => Err(format!(
                        "unknown {} {:?} (expected one of: {})",
                        stringify!($name).to_lowercase(),
                        other,
                        [$($s),+].join(", ")
                    )),
                }
            }
        }
    };
}

string_enum!(Gender { Male => "male", Female => "female", Other => "other" });
string_enum!(Stage { Preparation => "preparation", Assembly => "assembly", Painting => "painting" });
string_enum!(HandoverQuality { Good => "good", Bad => "bad" });
string_enum!(
    /// Study-2 interaction condition.
    Condition { Success => "success", Control => "control", Ea => "ea" }
);
string_enum!(Phase { Pre => "pre", Success => "success", Control => "control", Ea => "ea" });
string_enum!(Instrument { Godspeed => "godspeed", Hrc => "hrc" });
string_enum!(Choice { Ea => "ea", Control => "control" });

/// Godspeed subscales accepted in questionnaires.
pub const GODSPEED_SUBSCALES: &[&str] = &[
    "anthropomorphism",
    "animacy",
    "likeability",
    "intelligence",
    "safety",
];
/// HRC subscales accepted in questionnaires.
pub const HRC_SUBSCALES: &[&str] = &["fluency", "trust", "alliance"];

/// One recorded handover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode_id: String,
    pub participant_id: String,
    pub gender: Gender,
    pub stage: Stage,
    pub handover_quality: HandoverQuality,
    pub video_path: String,
    pub duration_s: f64,
}

/// One observer's description of an episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub episode_id: String,
    pub annotator_id: String,
    pub text: String,
}

/// A participant's own account of their emotions after a delivery.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfReportRecord {
    pub participant_id: String,
    pub condition: Condition,
    pub delivery_index: u32,
    pub text: String,
}

/// One Likert subscale score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireRecord {
    pub participant_id: String,
    pub phase: Phase,
    pub instrument: Instrument,
    pub subscale: String,
    pub score: f64,
}

/// Which adaptive behaviour a participant preferred.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub participant_id: String,
    pub choice: Choice,
}

/// Failure to load a corpus.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("cannot read {path}: {msg}")]
    Read { path: PathBuf, msg: String },
    #[error("{path}: row {row}: {msg}")]
    Row {
        path: PathBuf,
        row: u64,
        msg: String,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("cannot write {path}: {msg}")]
    Write { path: PathBuf, msg: String },
}

/// A loaded corpus. Equality compares records only.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub root: PathBuf,
    pub episodes: Vec<EpisodeRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub self_reports: Vec<SelfReportRecord>,
    pub questionnaires: Vec<QuestionnaireRecord>,
    pub preferences: Vec<PreferenceRecord>,
    /// Non-fatal observations made while loading.
    pub warnings: Vec<String>,
}

impl PartialEq for Corpus {
    fn eq(&self, o: &Self) -> bool {
        self.episodes == o.episodes
            && self.annotations == o.annotations
            && self.self_reports == o.self_reports
            && self.questionnaires == o.questionnaires
            && self.preferences == o.preferences
    }
}

/// A data problem that does not stop loading.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    TooFewAnnotations,
    VideoMissing,
    VideoOutsideRoot,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

// Raw rows keep every field as text so conversion errors carry row numbers.
#[derive(Deserialize)]
struct RawEpisode {
    episode_id: String,
    participant_id: String,
    gender: String,
    stage: String,
    handover_quality: String,
    video_path: String,
    duration_s: String,
}

#[derive(Deserialize)]
struct RawAnnotation {
    episode_id: String,
    annotator_id: String,
    text: String,
}

#[derive(Deserialize)]
struct RawSelfReport {
    participant_id: String,
    condition: String,
    delivery_index: String,
    text: String,
}

#[derive(Deserialize)]
struct RawQuestionnaire {
    participant_id: String,
    phase: String,
    instrument: String,
    subscale: String,
    score: String,
}

#[derive(Deserialize)]
struct RawPreference {
    participant_id: String,
    choice: String,
}

/// Reads `path` into raw rows paired with their 1-based line numbers.
/// Returns `None` for an optional file that does not exist.
fn read_rows<R: serde::de::DeserializeOwned>(
    path: &Path,
    required: bool,
) -> Result<Option<Vec<(u64, R)>>, CorpusError> {
    if !path.exists() {
        return if required {
            Err(CorpusError::MissingFile(path.to_path_buf()))
        } else {
            Ok(None)
        };
    }
    let bytes = std::fs::read(path).map_err(|e| CorpusError::Read {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Ok(Some(Vec::new()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(bytes.as_slice());
    let mut out = Vec::new();
    let mut rec = csv::StringRecord::new();
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Read {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?
        .clone();
    loop {
        match rdr.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                let row: R = rec
                    .deserialize(Some(&headers))
                    .map_err(|e| CorpusError::Row {
                        path: path.to_path_buf(),
                        row: line,
                        msg: e.to_string(),
                    })?;
                out.push((line, row));
            }
            Err(e) => {
                let row = e.position().map(|p| p.line()).unwrap_or(0);
                return Err(CorpusError::Row {
                    path: path.to_path_buf(),
                    row,
                    msg: e.to_string(),
                });
            }
        }
    }
    Ok(Some(out))
}

fn row_err(path: &Path, row: u64, msg: impl Into<String>) -> CorpusError {
    CorpusError::Row {
        path: path.to_path_buf(),
        row,
        msg: msg.into(),
    }
}

fn parse_enum<T: std::str::FromStr<Err = String>>(
    path: &Path,
    row: u64,
    s: &str,
) -> Result<T, CorpusError> {
    s.parse().map_err(|e: String| row_err(path, row, e))
}

fn nonempty(path: &Path, row: u64, field: &str, s: &str) -> Result<String, CorpusError> {
    let t = s.trim();
    if t.is_empty() {
        Err(row_err(path, row, format!("{field} is empty")))
    } else {
        Ok(t.to_string())
    }
}

/// Loads and cross-checks a corpus rooted at `root`.
pub fn load_corpus(root: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let root = root.as_ref();
    let mut corpus = Corpus {
        root: root.to_path_buf(),
        ..Default::default()
    };

    let p = root.join("episodes.csv");
    let mut seen = HashSet::new();
    for (row, r) in read_rows::<RawEpisode>(&p, true)?.unwrap_or_default() {
        let episode_id = nonempty(&p, row, "episode_id", &r.episode_id)?;
        if !seen.insert(episode_id.clone()) {
            return Err(row_err(
                &p,
                row,
                format!("duplicate episode_id {episode_id:?}"),
            ));
        }
        let duration_s: f64 = r
            .duration_s
            .trim()
            .parse()
            .map_err(|_| row_err(&p, row, format!("bad duration_s {:?}", r.duration_s)))?;
        if !(duration_s >= 0.0 && duration_s.is_finite()) {
            return Err(row_err(&p, row, "duration_s must be a nonnegative number"));
        }
        corpus.episodes.push(EpisodeRecord {
            episode_id,
            participant_id: nonempty(&p, row, "participant_id", &r.participant_id)?,
            gender: parse_enum(&p, row, &r.gender)?,
            stage: parse_enum(&p, row, &r.stage)?,
            handover_quality: parse_enum(&p, row, &r.handover_quality)?,
            video_path: r.video_path.trim().to_string(),
            duration_s,
        });
    }

    let p = root.join("annotations.csv");
    for (row, r) in read_rows::<RawAnnotation>(&p, true)?.unwrap_or_default() {
        let episode_id = nonempty(&p, row, "episode_id", &r.episode_id)?;
        if !seen.contains(&episode_id) {
            return Err(CorpusError::Integrity(format!(
                "{}: row {row}: annotation references unknown episode {episode_id:?}",
                p.display()
            )));
        }
        corpus.annotations.push(AnnotationRecord {
            episode_id,
            annotator_id: nonempty(&p, row, "annotator_id", &r.annotator_id)?,
            text: nonempty(&p, row, "text", &r.text)?,
        });
    }
    if corpus.annotations.is_empty() {
        corpus
            .warnings
            .push(format!("{} contains no annotations", p.display()));
    }

    let p = root.join("study2").join("selfreports.csv");
    let mut keys = HashSet::new();
    for (row, r) in read_rows::<RawSelfReport>(&p, false)?.unwrap_or_default() {
        let participant_id = nonempty(&p, row, "participant_id", &r.participant_id)?;
        let condition: Condition = parse_enum(&p, row, &r.condition)?;
        let delivery_index: u32 = r
            .delivery_index
            .trim()
            .parse()
            .ok()
            .filter(|d| *d >= 1)
            .ok_or_else(|| {
                row_err(
                    &p,
                    row,
                    format!(
                        "delivery_index must be an integer >= 1, got {:?}",
                        r.delivery_index
                    ),
                )
            })?;
        if !keys.insert((participant_id.clone(), condition, delivery_index)) {
            return Err(row_err(
                &p,
                row,
                format!("duplicate self-report ({participant_id}, {condition}, {delivery_index})"),
            ));
        }
        corpus.self_reports.push(SelfReportRecord {
            participant_id,
            condition,
            delivery_index,
            text: nonempty(&p, row, "text", &r.text)?,
        });
    }

    let p = root.join("study2").join("questionnaires.csv");
    for (row, r) in read_rows::<RawQuestionnaire>(&p, false)?.unwrap_or_default() {
        let instrument: Instrument = parse_enum(&p, row, &r.instrument)?;
        let subscale = r.subscale.trim().to_string();
        let allowed = match instrument {
            Instrument::Godspeed => GODSPEED_SUBSCALES,
            Instrument::Hrc => HRC_SUBSCALES,
        };
        if !allowed.contains(&subscale.as_str()) {
            return Err(row_err(
                &p,
                row,
                format!("unknown {instrument} subscale {subscale:?}"),
            ));
        }
        let score: f64 = r
            .score
            .trim()
            .parse()
            .map_err(|_| row_err(&p, row, format!("bad score {:?}", r.score)))?;
        if !(1.0..=5.0).contains(&score) {
            return Err(row_err(&p, row, format!("score {score} outside [1, 5]")));
        }
        corpus.questionnaires.push(QuestionnaireRecord {
            participant_id: nonempty(&p, row, "participant_id", &r.participant_id)?,
            phase: parse_enum(&p, row, &r.phase)?,
            instrument,
            subscale,
            score,
        });
    }

    let p = root.join("study2").join("preferences.csv");
    let mut who = HashSet::new();
    for (row, r) in read_rows::<RawPreference>(&p, false)?.unwrap_or_default() {
        let participant_id = nonempty(&p, row, "participant_id", &r.participant_id)?;
        if !who.insert(participant_id.clone()) {
            return Err(row_err(
                &p,
                row,
                format!("second preference for {participant_id:?}"),
            ));
        }
        corpus.preferences.push(PreferenceRecord {
            participant_id,
            choice: parse_enum(&p, row, &r.choice)?,
        });
    }

    for w in &corpus.warnings {
        log::warn!("{w}");
    }
    Ok(corpus)
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S], header: &[&str]) -> Result<(), CorpusError> {
    let werr = |e: &dyn fmt::Display| CorpusError::Write {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| werr(&e))?;
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| werr(&e))?;
    w.write_record(header).map_err(|e| werr(&e))?;
    for r in rows {
        w.serialize(r).map_err(|e| werr(&e))?;
    }
    w.flush().map_err(|e| werr(&e))
}

impl Corpus {
    /// Writes the corpus files under `root` (videos are not copied).
    pub fn write_to(&self, root: &Path) -> Result<(), CorpusError> {
        write_csv(
            &root.join("episodes.csv"),
            &self.episodes,
            &[
                "episode_id",
                "participant_id",
                "gender",
                "stage",
                "handover_quality",
                "video_path",
                "duration_s",
            ],
        )?;
        write_csv(
            &root.join("annotations.csv"),
            &self.annotations,
            &["episode_id", "annotator_id", "text"],
        )?;
        let s2 = root.join("study2");
        write_csv(
            &s2.join("selfreports.csv"),
            &self.self_reports,
            &["participant_id", "condition", "delivery_index", "text"],
        )?;
        write_csv(
            &s2.join("questionnaires.csv"),
            &self.questionnaires,
            &["participant_id", "phase", "instrument", "subscale", "score"],
        )?;
        write_csv(
            &s2.join("preferences.csv"),
            &self.preferences,
            &["participant_id", "choice"],
        )
    }

    pub fn episode(&self, id: &str) -> Option<&EpisodeRecord> {
        self.episodes.iter().find(|e| e.episode_id == id)
    }

    /// Annotations of one episode in file order, truncated to `cap` if set.
    pub fn annotations_for(&self, episode_id: &str, cap: Option<usize>) -> Vec<&AnnotationRecord> {
        let it = self
            .annotations
            .iter()
            .filter(|a| a.episode_id == episode_id);
        match cap {
            Some(n) => it.take(n).collect(),
            None => it.collect(),
        }
    }

    /// Absolute path of an episode's video.
    pub fn video_path(&self, ep: &EpisodeRecord) -> PathBuf {
        self.root.join(&ep.video_path)
    }

    /// Annotation counts per episode, every episode present.
    pub fn annotation_counts(&self) -> BTreeMap<&str, usize> {
        let mut m: BTreeMap<&str, usize> = self
            .episodes
            .iter()
            .map(|e| (e.episode_id.as_str(), 0))
            .collect();
        for a in &self.annotations {
            if let Some(c) = m.get_mut(a.episode_id.as_str()) {
                *c += 1;
            }
        }
        m
    }

    /// Participant ids appearing in any Study-2 file, sorted.
    pub fn participants(&self) -> Vec<String> {
        let mut s: BTreeSet<&str> = BTreeSet::new();
        s.extend(self.self_reports.iter().map(|r| r.participant_id.as_str()));
        s.extend(
            self.questionnaires
                .iter()
                .map(|r| r.participant_id.as_str()),
        );
        s.extend(self.preferences.iter().map(|r| r.participant_id.as_str()));
        s.into_iter().map(String::from).collect()
    }
}

/// One issue per episode with fewer than `min_annotations` annotations.
/// Sorted, so the result does not depend on record order.
pub fn validate_corpus(corpus: &Corpus, min_annotations: usize) -> Vec<ValidationIssue> {
    let mut issues: Vec<ValidationIssue> = corpus
        .annotation_counts()
        .into_iter()
        .filter(|(_, n)| *n < min_annotations)
        .map(|(id, n)| ValidationIssue {
            kind: IssueKind::TooFewAnnotations,
            subject: id.to_string(),
            message: format!("{n} annotation(s), minimum is {min_annotations}"),
        })
        .collect();
    issues.sort();
    issues
}

/// Strict checks: every episode's video exists and lies under the root.
pub fn validate_videos(corpus: &Corpus) -> Vec<ValidationIssue> {
    let root = corpus
        .root
        .canonicalize()
        .unwrap_or_else(|_| corpus.root.clone());
    let mut issues = Vec::new();
    for ep in &corpus.episodes {
        let p = corpus.video_path(ep);
        match p.canonicalize() {
            Err(_) => issues.push(ValidationIssue {
                kind: IssueKind::VideoMissing,
                subject: ep.episode_id.clone(),
                message: format!("video {:?} not found", ep.video_path),
            }),
            Ok(c) if !c.starts_with(&root) => issues.push(ValidationIssue {
                kind: IssueKind::VideoOutsideRoot,
                subject: ep.episode_id.clone(),
                message: format!("video {:?} resolves outside the corpus root", ep.video_path),
            }),
            Ok(_) => {}
        }
    }
    issues.sort();
    issues
}

/// Not enough episodes to balance.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot balance selection: {}", .deficient.join("; "))]
pub struct BalanceError {
    /// `"gender/stage/quality: have n, need m"` per deficient cell.
    pub deficient: Vec<String>,
}

/// Picks `per_cell` episodes from each gender (male, female) x stage x
/// handover-quality cell.
///
/// Within a cell, candidates are ordered by episode id and shuffled with a
/// generator seeded by `seed`, so the choice is reproducible. Episodes with
/// gender `other` fall outside the balanced design and are never selected.
/// The result is sorted by episode id.
pub fn select_balanced(
    episodes: &[EpisodeRecord],
    per_cell: usize,
    seed: u64,
) -> Result<Vec<EpisodeRecord>, BalanceError> {
    assert!(per_cell >= 1, "per_cell must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    let mut deficient = Vec::new();
    for gender in [Gender::Male, Gender::Female] {
        for stage in Stage::ALL {
            for quality in HandoverQuality::ALL {
                let mut cell: Vec<&EpisodeRecord> = episodes
                    .iter()
                    .filter(|e| {
                        e.gender == gender && e.stage == *stage && e.handover_quality == *quality
                    })
                    .collect();
                cell.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
                cell.shuffle(&mut rng);
                if cell.len() < per_cell {
                    deficient.push(format!(
                        "{gender}/{stage}/{quality}: have {}, need {per_cell}",
                        cell.len()
                    ));
                } else {
                    chosen.extend(cell.into_iter().take(per_cell).cloned());
                }
            }
        }
    }
    if !deficient.is_empty() {
        return Err(BalanceError { deficient });
    }
    chosen.sort_by(|a, b| a.episode_id.cmp(&b.episode_id));
    Ok(chosen)
}
