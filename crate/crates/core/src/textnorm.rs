//! Text normalization ahead of embedding: lowercasing, markdown removal,
//! tokenization, stop-word filtering and lemmatization.
//!
//! The stop list and lemmatizer are versioned inputs. [`Normalizer::config_hash`]
//! fingerprints both so that reports can record exactly which normalization
//! produced their numbers.
//!
//! ```
//! use ehk::textnorm::Normalizer;
//!
//! let n = Normalizer::bundled();
//! let t = n.normalize("The human is **smiling** at the robots");
//! assert_eq!(t.tokens, ["human", "smile", "robot"]);
//! ```

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

const STOPWORDS: &str = include_str!("../assets/stopwords_en.txt");
const EXCEPTIONS: &str = include_str!("../assets/lemma_exceptions.tsv");

/// Words the suffix rules must leave alone.
const INVARIANT: &[&str] = &[
    "thing",
    "something",
    "anything",
    "everything",
    "nothing",
    "morning",
    "evening",
    "ceiling",
    "during",
    "always",
    "news",
    "lens",
    "series",
    "species",
    "chaos",
];

/// Errors building a [`Normalizer`].
#[derive(Debug, thiserror::Error)]
pub enum NormError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected form<TAB>lemma")]
    Parse { path: String, line: usize },
    #[error("lemmatizer \"lookup\" requires lemma_table")]
    MissingTable,
}

/// Which lemmatizer backend to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmatizerKind {
    /// Suffix rules plus an irregular-forms table.
    #[default]
    Rules,
    /// Exact `form<TAB>lemma` lookup; unknown forms pass through.
    Lookup,
}

/// Normalization settings, the `[textnorm]` table of the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormConfig {
    pub lowercase: bool,
    pub strip_markdown: bool,
    /// Stop list file; the bundled list when unset.
    pub stop_list: Option<PathBuf>,
    pub lemmatizer: LemmatizerKind,
    /// Irregular forms for the rule lemmatizer; bundled when unset.
    pub exceptions: Option<PathBuf>,
    /// Lookup table for [`LemmatizerKind::Lookup`].
    pub lemma_table: Option<PathBuf>,
}

impl Default for NormConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_markdown: true,
            stop_list: None,
            lemmatizer: LemmatizerKind::Rules,
            exceptions: None,
            lemma_table: None,
        }
    }
}

impl NormConfig {
    /// Resolves relative file paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.stop_list,
            &mut self.exceptions,
            &mut self.lemma_table,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

/// A normalized text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedText {
    pub original: String,
    pub tokens: Vec<String>,
    /// `tokens` joined by single spaces.
    pub joined: String,
}

/// Maps a surface token to its lemma.
pub trait Lemmatizer: Send + Sync {
    /// Short backend name, recorded in the config hash.
    fn id(&self) -> &str;
    /// Content fingerprint (e.g. of the tables the backend loaded).
    fn fingerprint(&self) -> String;
    fn lemma(&self, token: &str) -> String;
}

fn read(path: &Path) -> Result<String, NormError> {
    std::fs::read_to_string(path).map_err(|source| NormError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_pairs(text: &str, origin: &str) -> Result<HashMap<String, String>, NormError> {
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (form, lemma) = line.split_once('\t').ok_or_else(|| NormError::Parse {
            path: origin.to_string(),
            line: i + 1,
        })?;
        map.insert(form.trim().to_string(), lemma.trim().to_string());
    }
    Ok(map)
}

fn sha_hex(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Sorted-key fingerprint of a form->lemma table.
fn table_fingerprint(map: &HashMap<String, String>) -> String {
    let mut pairs: Vec<_> = map.iter().collect();
    pairs.sort();
    let flat: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}\t{v}")).collect();
    sha_hex(&[&flat.join("\n")])
}

/// Suffix-rule lemmatizer for English inflections (plural `-s`, past `-ed`,
/// progressive `-ing`) with an irregular-forms table consulted first.
///
/// Rules are applied until the token stops changing, so every output is a
/// fixed point.
pub struct RuleLemmatizer {
    exceptions: HashMap<String, String>,
    fingerprint: String,
}

impl RuleLemmatizer {
    pub fn bundled() -> Self {
        Self::from_table(parse_pairs(EXCEPTIONS, "<bundled>").expect("bundled exceptions parse"))
    }

    pub fn from_file(path: &Path) -> Result<Self, NormError> {
        Ok(Self::from_table(parse_pairs(
            &read(path)?,
            &path.display().to_string(),
        )?))
    }

    fn from_table(exceptions: HashMap<String, String>) -> Self {
        let fingerprint = table_fingerprint(&exceptions);
        Self {
            exceptions,
            fingerprint,
        }
    }

    fn step(&self, w: &str) -> String {
        if let Some(l) = self.exceptions.get(w) {
            return l.clone();
        }
        if !w.bytes().all(|b| b.is_ascii_lowercase()) || INVARIANT.contains(&w) {
            return w.to_string();
        }
        let n = w.len();
        if w.ends_with('s') {
            return plural(w);
        }
        if let Some(stem) = w.strip_suffix("ed") {
            if w.ends_with("eed") {
                return w.to_string();
            }
            if w.ends_with("ied") {
                return if n > 4 {
                    format!("{}y", &w[..n - 3])
                } else {
                    w[..n - 1].to_string()
                };
            }
            return fix_stem(stem).unwrap_or_else(|| w.to_string());
        }
        if let Some(stem) = w.strip_suffix("ing") {
            return fix_stem(stem).unwrap_or_else(|| w.to_string());
        }
        w.to_string()
    }
}

impl Lemmatizer for RuleLemmatizer {
    fn id(&self) -> &str {
        "rules-v1"
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn lemma(&self, token: &str) -> String {
        let mut cur = token.to_string();
        for _ in 0..8 {
            let next = self.step(&cur);
            if next == cur {
                break;
            }
            cur = next;
        }
        cur
    }
}

fn plural(w: &str) -> String {
    let n = w.len();
    if n < 4 || w.ends_with("ss") || w.ends_with("us") || w.ends_with("is") || w.ends_with("ics") {
        return w.to_string();
    }
    if w.ends_with("ies") && n > 4 {
        return format!("{}y", &w[..n - 3]);
    }
    for suf in ["sses", "xes", "ches", "shes", "zzes"] {
        if w.ends_with(suf) {
            return w[..n - 2].to_string();
        }
    }
    w[..n - 1].to_string()
}

fn is_vowel(b: &[u8], i: usize) -> bool {
    match b[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => true,
        b'y' => i > 0 && !is_vowel(b, i - 1),
        _ => false,
    }
}

/// Porter's measure: the number of vowel-consonant sequences.
fn measure(b: &[u8]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..b.len() {
        let v = is_vowel(b, i);
        if prev_vowel && !v {
            m += 1;
        }
        prev_vowel = v;
    }
    m
}

/// Restores the base form of a stem left after removing `-ed` / `-ing`.
/// `None` when the stem has no vowel (e.g. "bring", "shed").
fn fix_stem(stem: &str) -> Option<String> {
    let b = stem.as_bytes();
    let n = b.len();
    if n < 2 || !(0..n).any(|i| is_vowel(b, i)) {
        return None;
    }
    let last = b[n - 1];
    let prev = b[n - 2];
    let cons = |i: usize| !is_vowel(b, i);

    if last == prev && cons(n - 1) && !matches!(last, b'l' | b's' | b'z') && n > 3 {
        return Some(stem[..n - 1].to_string());
    }
    let add_e = (stem.ends_with("at") && n >= 3 && (cons(n - 3) || b[n - 3] == b'u'))
        || (stem.ends_with("it") && n >= 3 && matches!(b[n - 3], b'c' | b'n' | b'v'))
        || ((last == b'v' || last == b'z') && prev != last)
        || (last == b's' && is_vowel(b, n - 2))
        || (last == b'g' && (is_vowel(b, n - 2) || matches!(prev, b'r' | b'd' | b'l')))
        || (last == b'c' && (is_vowel(b, n - 2) || prev == b'n'))
        || (last == b'l'
            && matches!(
                prev,
                b'b' | b'c' | b'd' | b'f' | b'g' | b'k' | b'p' | b't' | b'z'
            ))
        || (measure(b) == 1
            && n >= 3
            && cons(n - 1)
            && is_vowel(b, n - 2)
            && cons(n - 3)
            && !matches!(last, b'w' | b'x' | b'y'));
    Some(if add_e {
        format!("{stem}e")
    } else {
        stem.to_string()
    })
}

/// Exact-match lookup lemmatizer over a `form<TAB>lemma` table.
pub struct LookupLemmatizer {
    table: HashMap<String, String>,
    fingerprint: String,
}

impl LookupLemmatizer {
    pub fn from_file(path: &Path) -> Result<Self, NormError> {
        Ok(Self::from_table(parse_pairs(
            &read(path)?,
            &path.display().to_string(),
        )?))
    }

    pub fn from_table(table: HashMap<String, String>) -> Self {
        let fingerprint = table_fingerprint(&table);
        Self { table, fingerprint }
    }
}

impl Lemmatizer for LookupLemmatizer {
    fn id(&self) -> &str {
        "lookup"
    }

    fn fingerprint(&self) -> String {
        self.fingerprint.clone()
    }

    fn lemma(&self, token: &str) -> String {
        let mut cur = token;
        // follow chains so outputs are fixed points
        for _ in 0..8 {
            match self.table.get(cur) {
                Some(next) if next != cur => cur = next,
                _ => break,
            }
        }
        cur.to_string()
    }
}

/// A configured normalization pipeline.
pub struct Normalizer {
    config: NormConfig,
    stop: BTreeSet<String>,
    lemmatizer: Box<dyn Lemmatizer>,
    hash: String,
}

impl std::fmt::Debug for Normalizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Normalizer")
            .field("config", &self.config)
            .field("lemmatizer", &self.lemmatizer.id())
            .field("hash", &self.hash)
            .finish()
    }
}

fn parse_stop_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.to_lowercase())
        .collect()
}

impl Normalizer {
    /// Default configuration with bundled assets.
    pub fn bundled() -> &'static Normalizer {
        static DEFAULT: OnceLock<Normalizer> = OnceLock::new();
        DEFAULT
            .get_or_init(|| Normalizer::new(&NormConfig::default()).expect("bundled assets load"))
    }

    pub fn new(config: &NormConfig) -> Result<Self, NormError> {
        let lemmatizer: Box<dyn Lemmatizer> = match config.lemmatizer {
            LemmatizerKind::Rules => match &config.exceptions {
                Some(p) => Box::new(RuleLemmatizer::from_file(p)?),
                None => Box::new(RuleLemmatizer::bundled()),
            },
            LemmatizerKind::Lookup => {
                let p = config.lemma_table.as_ref().ok_or(NormError::MissingTable)?;
                Box::new(LookupLemmatizer::from_file(p)?)
            }
        };
        Self::with_lemmatizer(config, lemmatizer)
    }

    /// Uses a caller-supplied lemmatizer; `config.lemmatizer` is ignored.
    pub fn with_lemmatizer(
        config: &NormConfig,
        lemmatizer: Box<dyn Lemmatizer>,
    ) -> Result<Self, NormError> {
        let stop = match &config.stop_list {
            Some(p) => parse_stop_list(&read(p)?),
            None => parse_stop_list(STOPWORDS),
        };
        let stop_joined = stop.iter().cloned().collect::<Vec<_>>().join("\n");
        let hash = sha_hex(&[
            "textnorm-v1",
            if config.lowercase {
                "lowercase"
            } else {
                "keepcase"
            },
            if config.strip_markdown {
                "markdown"
            } else {
                "raw"
            },
            &stop_joined,
            lemmatizer.id(),
            &lemmatizer.fingerprint(),
        ]);
        Ok(Self {
            config: config.clone(),
            stop,
            lemmatizer,
            hash,
        })
    }

    /// Hex sha256 identifying stop list, lemmatizer tables and flags.
    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    pub fn config(&self) -> &NormConfig {
        &self.config
    }

    pub fn is_stop_word(&self, token: &str) -> bool {
        self.stop.contains(&token.to_lowercase())
    }

    pub fn normalize(&self, text: &str) -> NormalizedText {
        let mut s = if self.config.strip_markdown {
            strip_markdown(text)
        } else {
            text.to_string()
        };
        if self.config.lowercase {
            s = s.to_lowercase();
        }
        let tokens: Vec<String> = tokenize(&s)
            .into_iter()
            .filter(|t| !self.is_stop_word(t))
            .map(|t| self.lemmatizer.lemma(&t))
            .filter(|t| !t.is_empty() && !self.is_stop_word(t))
            .collect();
        NormalizedText {
            original: text.to_string(),
            joined: tokens.join(" "),
            tokens,
        }
    }
}

/// Normalizes with an explicit config (loads the config's assets each call;
/// build a [`Normalizer`] once for repeated use).
pub fn normalize(text: &str, config: &NormConfig) -> Result<NormalizedText, NormError> {
    Ok(Normalizer::new(config)?.normalize(text))
}

/// Drops link targets `[label](url)` -> `label` and HTML-ish tags.
fn strip_markdown(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ']' if chars.peek() == Some(&'(') => {
                out.push(' ');
                for d in chars.by_ref() {
                    if d == ')' {
                        break;
                    }
                }
            }
            '<' => {
                let rest: String = chars
                    .clone()
                    .take_while(|d| *d != '>' && *d != '\n')
                    .collect();
                let closes = chars.clone().nth(rest.chars().count()) == Some('>');
                if closes
                    && rest
                        .chars()
                        .next()
                        .is_some_and(|d| d.is_ascii_alphabetic() || d == '/')
                {
                    for _ in 0..=rest.chars().count() {
                        chars.next();
                    }
                    out.push(' ');
                } else {
                    out.push(c);
                }
            }
            _ => out.push(c),
        }
    }
    out
}

fn is_emoji(c: char) -> bool {
    matches!(c as u32,
        0x2600..=0x27BF | 0x2B00..=0x2BFF | 0x1F000..=0x1F3FA | 0x1F400..=0x1FAFF)
}

/// Variation selectors, joiners and skin-tone modifiers carry no token.
fn is_modifier(c: char) -> bool {
    matches!(c as u32, 0xFE00..=0xFE0F | 0x200D | 0x1F3FB..=0x1F3FF)
}

/// Alphanumeric runs (with internal apostrophes, and `.`/`,` between digits)
/// plus one token per emoji. Possessive `'s` is dropped.
fn tokenize(text: &str) -> Vec<String> {
    let chars: Vec<char> = text
        .chars()
        .map(|c| {
            if c == '\u{2019}' || c == '\u{2018}' {
                '\''
            } else {
                c
            }
        })
        .filter(|c| !is_modifier(*c))
        .collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, tokens: &mut Vec<String>| {
        if !cur.is_empty() {
            let t = cur.strip_suffix("'s").unwrap_or(cur).to_string();
            if !t.is_empty() {
                tokens.push(t);
            }
            cur.clear();
        }
    };
    for (i, &c) in chars.iter().enumerate() {
        let next = chars.get(i + 1).copied();
        let prev = if i > 0 { Some(chars[i - 1]) } else { None };
        let apostrophe = c == '\''
            && prev.is_some_and(char::is_alphanumeric)
            && next.is_some_and(char::is_alphanumeric)
            && !cur.is_empty();
        let separator = (c == '.' || c == ',')
            && prev.is_some_and(|p| p.is_ascii_digit())
            && next.is_some_and(|n| n.is_ascii_digit())
            && !cur.is_empty();
        if c.is_alphanumeric() || apostrophe || separator {
            cur.push(c);
        } else if is_emoji(c) {
            flush(&mut cur, &mut tokens);
            tokens.push(c.to_string());
        } else {
            flush(&mut cur, &mut tokens);
        }
    }
    flush(&mut cur, &mut tokens);
    tokens
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lem(w: &str) -> String {
        RuleLemmatizer::bundled().lemma(w)
    }

    #[test]
    fn empty_and_stop_only() {
        let n = Normalizer::bundled();
        assert!(n.normalize("").tokens.is_empty());
        assert!(n.normalize("  \n ").tokens.is_empty());
        assert!(n.normalize("the a an of").tokens.is_empty());
    }

    #[test]
    fn suffix_rules() {
        let cases = [
            ("expressing", "express"),
            ("smiling", "smile"),
            ("frustrated", "frustrate"),
            ("stopped", "stop"),
            ("worried", "worry"),
            ("tied", "tie"),
            ("boxes", "box"),
            ("causes", "cause"),
            ("robots", "robot"),
            ("excited", "excite"),
            ("troubled", "trouble"),
            ("engaged", "engage"),
            ("danced", "dance"),
            ("called", "call"),
            ("looking", "look"),
            ("opened", "open"),
            ("nervous", "nervous"),
            ("analysis", "analysis"),
            ("need", "need"),
            ("bring", "bring"),
            ("feelings", "feel"),
            ("concentration", "concentration"),
        ];
        for (w, want) in cases {
            assert_eq!(lem(w), want, "{w}");
        }
    }

    #[test]
    fn exceptions_first() {
        assert_eq!(lem("felt"), "feel");
        assert_eq!(lem("focused"), "focus");
        assert_eq!(lem("children"), "child");
    }

    #[test]
    fn tokenizer_shapes() {
        assert_eq!(tokenize("don't  stop"), ["don't", "stop"]);
        assert_eq!(tokenize("robot's arm"), ["robot", "arm"]);
        assert_eq!(tokenize("3.5 points, 1,000!"), ["3.5", "points", "1,000"]);
        assert_eq!(tokenize("self-aware"), ["self", "aware"]);
        assert_eq!(tokenize("happy😀!"), ["happy", "😀"]);
        assert_eq!(tokenize("**bold** _it_ #h"), ["bold", "it", "h"]);
    }

    #[test]
    fn markdown_links() {
        assert_eq!(strip_markdown("[calm](http://x.y/z) look"), "[calm  look");
        assert_eq!(strip_markdown("a <b>bold</b> c"), "a  bold  c");
        assert_eq!(strip_markdown("x < y > z"), "x < y > z");
    }

    #[test]
    fn hash_tracks_inputs() {
        let a = Normalizer::new(&NormConfig::default()).unwrap();
        let b = Normalizer::new(&NormConfig {
            lowercase: false,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(a.config_hash(), Normalizer::bundled().config_hash());
        assert_ne!(a.config_hash(), b.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn lookup_follows_chains() {
        let table: HashMap<String, String> = [("ran", "run"), ("run", "run")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let l = LookupLemmatizer::from_table(table);
        assert_eq!(l.lemma("ran"), "run");
        assert_eq!(l.lemma("walked"), "walked");
    }
}
