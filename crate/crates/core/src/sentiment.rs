//! Lexicon and rule-based sentiment scoring (a port of VADER 3.3.2).
//!
//! Scores are computed on raw text: capitalization, punctuation and
//! function words all feed the heuristics. [`compound`] uses the bundled
//! lexicon; [`Analyzer::from_files`] loads a different one.
//!
//! ```
//! let s = ehk::sentiment::compound("The human looks happy!");
//! assert!(s.compound > 0.0);
//! ```

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

const B_INCR: f64 = 0.293;
const B_DECR: f64 = -0.293;
const C_INCR: f64 = 0.733;
const N_SCALAR: f64 = -0.74;
const ALPHA: f64 = 15.0;

const NEGATE: &[&str] = &[
    "aint",
    "arent",
    "cannot",
    "cant",
    "couldnt",
    "darent",
    "didnt",
    "doesnt",
    "ain't",
    "aren't",
    "can't",
    "couldn't",
    "daren't",
    "didn't",
    "doesn't",
    "dont",
    "hadnt",
    "hasnt",
    "havent",
    "isnt",
    "mightnt",
    "mustnt",
    "neither",
    "don't",
    "hadn't",
    "hasn't",
    "haven't",
    "isn't",
    "mightn't",
    "mustn't",
    "neednt",
    "needn't",
    "never",
    "none",
    "nope",
    "nor",
    "not",
    "nothing",
    "nowhere",
    "oughtnt",
    "shant",
    "shouldnt",
    "uhuh",
    "wasnt",
    "werent",
    "oughtn't",
    "shan't",
    "shouldn't",
    "uh-uh",
    "wasn't",
    "weren't",
    "without",
    "wont",
    "wouldnt",
    "won't",
    "wouldn't",
    "rarely",
    "seldom",
    "despite",
];

const BOOST_UP: &[&str] = &[
    "absolutely",
    "amazingly",
    "awfully",
    "completely",
    "considerable",
    "considerably",
    "decidedly",
    "deeply",
    "effing",
    "enormous",
    "enormously",
    "entirely",
    "especially",
    "exceptional",
    "exceptionally",
    "extreme",
    "extremely",
    "fabulously",
    "flipping",
    "flippin",
    "frackin",
    "fracking",
    "fricking",
    "frickin",
    "frigging",
    "friggin",
    "fully",
    "fuckin",
    "fucking",
    "fuggin",
    "fugging",
    "greatly",
    "hella",
    "highly",
    "hugely",
    "incredible",
    "incredibly",
    "intensely",
    "major",
    "majorly",
    "more",
    "most",
    "particularly",
    "purely",
    "quite",
    "really",
    "remarkably",
    "so",
    "substantially",
    "thoroughly",
    "total",
    "totally",
    "tremendous",
    "tremendously",
    "uber",
    "unbelievably",
    "unusually",
    "utter",
    "utterly",
    "very",
];

const BOOST_DOWN: &[&str] = &[
    "almost",
    "barely",
    "hardly",
    "just enough",
    "kind of",
    "kinda",
    "kindof",
    "kind-of",
    "less",
    "little",
    "marginal",
    "marginally",
    "occasional",
    "occasionally",
    "partly",
    "scarce",
    "scarcely",
    "slight",
    "slightly",
    "somewhat",
    "sort of",
    "sorta",
    "sortof",
    "sort-of",
];

const SPECIAL_CASES: &[(&str, f64)] = &[
    ("the shit", 3.0),
    ("the bomb", 3.0),
    ("bad ass", 1.5),
    ("badass", 1.5),
    ("bus stop", 0.0),
    ("yeah right", -2.0),
    ("kiss of death", -1.5),
    ("to die for", 3.0),
    ("beating heart", 3.5),
];

const LEXICON_TSV: &str = include_str!("../assets/vader_lexicon.tsv");
const EMOJI_TSV: &str = include_str!("../assets/emoji_lexicon.tsv");

/// Sentiment of one text.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SentimentScore {
    /// Normalized sum of valences, in `[-1, 1]`.
    pub compound: f64,
    pub positive: f64,
    pub neutral: f64,
    pub negative: f64,
}

/// Error loading a lexicon file.
#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("cannot read lexicon {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
}

fn booster(word: &str) -> Option<f64> {
    if BOOST_UP.contains(&word) {
        Some(B_INCR)
    } else if BOOST_DOWN.contains(&word) {
        Some(B_DECR)
    } else {
        None
    }
}

fn special_case(seq: &str) -> Option<f64> {
    SPECIAL_CASES
        .iter()
        .find(|(k, _)| *k == seq)
        .map(|(_, v)| *v)
}

/// Python `str.isupper`: at least one cased character and no lowercase ones.
fn is_upper(s: &str) -> bool {
    let mut cased = false;
    for c in s.chars() {
        if c.is_lowercase() {
            return false;
        }
        if c.is_uppercase() {
            cased = true;
        }
    }
    cased
}

fn negated(word: &str) -> bool {
    NEGATE.contains(&word) || word.contains("n't")
}

fn normalize(score: f64) -> f64 {
    (score / (score * score + ALPHA).sqrt()).clamp(-1.0, 1.0)
}

/// Strips leading and trailing ASCII punctuation unless that leaves two or
/// fewer characters (which keeps emoticons such as `:)` intact).
fn strip_punc_if_word(token: &str) -> &str {
    let stripped = token.trim_matches(|c: char| c.is_ascii_punctuation());
    if stripped.chars().count() <= 2 {
        token
    } else {
        stripped
    }
}

fn scalar_inc_dec(word: &str, lower: &str, valence: f64, cap_diff: bool) -> f64 {
    let Some(mut scalar) = booster(lower) else {
        return 0.0;
    };
    if valence < 0.0 {
        scalar = -scalar;
    }
    if is_upper(word) && cap_diff {
        if valence > 0.0 {
            scalar += C_INCR;
        } else {
            scalar -= C_INCR;
        }
    }
    scalar
}

/// A loaded valence lexicon and emoji table.
#[derive(Debug, Clone)]
pub struct Analyzer {
    lexicon: HashMap<String, f64>,
    emojis: HashMap<char, String>,
}

impl Analyzer {
    /// Analyzer over the bundled lexicon.
    pub fn bundled() -> &'static Analyzer {
        static BUNDLED: OnceLock<Analyzer> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            Analyzer::from_strs(LEXICON_TSV, EMOJI_TSV, "<bundled>")
                .expect("bundled lexicon is well formed")
        })
    }

    /// Loads `token<TAB>valence` and `emoji<TAB>description` files.
    pub fn from_files(lexicon: &Path, emojis: &Path) -> Result<Self, LexiconError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| LexiconError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let lex = read(lexicon)?;
        let emo = read(emojis)?;
        let mut a = Self::from_strs(&lex, "", &lexicon.display().to_string())?;
        a.emojis = Self::from_strs("", &emo, &emojis.display().to_string())?.emojis;
        Ok(a)
    }

    fn from_strs(lexicon: &str, emojis: &str, origin: &str) -> Result<Self, LexiconError> {
        let mut lex = HashMap::new();
        for (i, line) in lexicon.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut parts = line.trim().split('\t');
            let (Some(word), Some(measure)) = (parts.next(), parts.next()) else {
                return Err(LexiconError::Parse {
                    path: origin.into(),
                    line: i + 1,
                    msg: "expected token<TAB>valence".into(),
                });
            };
            let v: f64 = measure.parse().map_err(|_| LexiconError::Parse {
                path: origin.into(),
                line: i + 1,
                msg: format!("bad valence {measure:?}"),
            })?;
            lex.insert(word.to_string(), v);
        }
        let mut emo = HashMap::new();
        for line in emojis.lines() {
            let mut parts = line.trim().split('\t');
            if let (Some(e), Some(desc)) = (parts.next(), parts.next()) {
                // only single-codepoint keys can match a per-character scan
                let mut cs = e.chars();
                if let (Some(c), None) = (cs.next(), cs.next()) {
                    emo.insert(c, desc.to_string());
                }
            }
        }
        Ok(Self {
            lexicon: lex,
            emojis: emo,
        })
    }

    /// Number of lexicon entries.
    pub fn len(&self) -> usize {
        self.lexicon.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lexicon.is_empty()
    }

    fn replace_emojis(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut prev_space = true;
        for c in text.chars() {
            if let Some(desc) = self.emojis.get(&c) {
                if !prev_space {
                    out.push(' ');
                }
                out.push_str(desc);
                prev_space = false;
            } else {
                out.push(c);
                prev_space = c == ' ';
            }
        }
        out
    }

    /// Scores one text.
    pub fn score(&self, text: &str) -> SentimentScore {
        let replaced = self.replace_emojis(text);
        let text = replaced.trim();
        let words: Vec<&str> = text.split_whitespace().map(strip_punc_if_word).collect();
        let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
        let upper_count = words.iter().filter(|w| is_upper(w)).count();
        let cap_diff = upper_count > 0 && upper_count < words.len();

        let mut sentiments = Vec::with_capacity(words.len());
        for i in 0..words.len() {
            if booster(&lower[i]).is_some()
                || (i + 1 < words.len() && lower[i] == "kind" && lower[i + 1] == "of")
            {
                sentiments.push(0.0);
                continue;
            }
            sentiments.push(self.valence(&words, &lower, i, cap_diff));
        }
        but_check(&lower, &mut sentiments);
        score_valence(&sentiments, text)
    }

    fn in_lex(&self, w: &str) -> bool {
        self.lexicon.contains_key(w)
    }

    fn valence(&self, words: &[&str], lower: &[String], i: usize, cap_diff: bool) -> f64 {
        let Some(&base) = self.lexicon.get(&lower[i]) else {
            return 0.0;
        };
        let mut valence = base;
        if lower[i] == "no" && i + 1 < words.len() && self.in_lex(&lower[i + 1]) {
            valence = 0.0;
        }
        if (i > 0 && lower[i - 1] == "no")
            || (i > 1 && lower[i - 2] == "no")
            || (i > 2 && lower[i - 3] == "no" && (lower[i - 1] == "or" || lower[i - 1] == "nor"))
        {
            valence = base * N_SCALAR;
        }
        if is_upper(words[i]) && cap_diff {
            if valence > 0.0 {
                valence += C_INCR;
            } else {
                valence -= C_INCR;
            }
        }

        for start_i in 0..3 {
            if i > start_i && !self.in_lex(&lower[i - (start_i + 1)]) {
                let j = i - (start_i + 1);
                let mut s = scalar_inc_dec(words[j], &lower[j], valence, cap_diff);
                if start_i == 1 && s != 0.0 {
                    s *= 0.95;
                }
                if start_i == 2 && s != 0.0 {
                    s *= 0.9;
                }
                valence += s;
                valence = negation_check(valence, lower, start_i, i);
                if start_i == 2 {
                    valence = special_idioms_check(valence, lower, i);
                }
            }
        }
        self.least_check(valence, lower, i)
    }

    fn least_check(&self, valence: f64, lower: &[String], i: usize) -> f64 {
        if i > 1 && !self.in_lex(&lower[i - 1]) && lower[i - 1] == "least" {
            if lower[i - 2] != "at" && lower[i - 2] != "very" {
                return valence * N_SCALAR;
            }
        } else if i > 0 && !self.in_lex(&lower[i - 1]) && lower[i - 1] == "least" {
            return valence * N_SCALAR;
        }
        valence
    }
}

fn negation_check(valence: f64, lower: &[String], start_i: usize, i: usize) -> f64 {
    let w = |back: usize| lower[i - back].as_str();
    match start_i {
        0 if negated(w(1)) => valence * N_SCALAR,
        1 => {
            if w(2) == "never" && (w(1) == "so" || w(1) == "this") {
                valence * 1.25
            } else if w(2) == "without" && w(1) == "doubt" {
                valence
            } else if negated(w(2)) {
                valence * N_SCALAR
            } else {
                valence
            }
        }
        2 => {
            if (w(3) == "never" && (w(2) == "so" || w(2) == "this"))
                || (w(1) == "so" || w(1) == "this")
            {
                valence * 1.25
            } else if w(3) == "without" && (w(2) == "doubt" || w(1) == "doubt") {
                valence
            } else if negated(w(3)) {
                valence * N_SCALAR
            } else {
                valence
            }
        }
        _ => valence,
    }
}

/// Only reached with `i >= 3`.
fn special_idioms_check(mut valence: f64, lower: &[String], i: usize) -> f64 {
    let onezero = format!("{} {}", lower[i - 1], lower[i]);
    let twoonezero = format!("{} {} {}", lower[i - 2], lower[i - 1], lower[i]);
    let twoone = format!("{} {}", lower[i - 2], lower[i - 1]);
    let threetwoone = format!("{} {} {}", lower[i - 3], lower[i - 2], lower[i - 1]);
    let threetwo = format!("{} {}", lower[i - 3], lower[i - 2]);

    for seq in [&onezero, &twoonezero, &twoone, &threetwoone, &threetwo] {
        if let Some(v) = special_case(seq) {
            valence = v;
            break;
        }
    }
    if lower.len() - 1 > i {
        if let Some(v) = special_case(&format!("{} {}", lower[i], lower[i + 1])) {
            valence = v;
        }
    }
    if lower.len() - 1 > i + 1 {
        if let Some(v) = special_case(&format!("{} {} {}", lower[i], lower[i + 1], lower[i + 2])) {
            valence = v;
        }
    }
    for ngram in [&threetwoone, &threetwo, &twoone] {
        if let Some(b) = booster(ngram) {
            valence += b;
        }
    }
    valence
}

/// Contrastive "but": halves valences before the first "but", boosts those
/// after it by half.
///
/// Mirrors the reference behaviour exactly, including that each value is
/// located by its first equal occurrence in the (partly updated) list.
fn but_check(lower: &[String], sentiments: &mut [f64]) {
    let Some(bi) = lower.iter().position(|w| w == "but") else {
        return;
    };
    for k in 0..sentiments.len() {
        let s = sentiments[k];
        let si = sentiments.iter().position(|v| *v == s).unwrap_or(k);
        if si < bi {
            sentiments[si] = s * 0.5;
        } else if si > bi {
            sentiments[si] = s * 1.5;
        }
    }
}

fn punctuation_emphasis(text: &str) -> f64 {
    let ep = text.matches('!').count().min(4) as f64 * 0.292;
    let qm_count = text.matches('?').count();
    let qm = match qm_count {
        0 | 1 => 0.0,
        2 | 3 => qm_count as f64 * 0.18,
        _ => 0.96,
    };
    ep + qm
}

fn score_valence(sentiments: &[f64], text: &str) -> SentimentScore {
    if sentiments.is_empty() {
        return SentimentScore {
            compound: 0.0,
            positive: 0.0,
            neutral: 0.0,
            negative: 0.0,
        };
    }
    let mut sum: f64 = sentiments.iter().sum();
    let emph = punctuation_emphasis(text);
    if sum > 0.0 {
        sum += emph;
    } else if sum < 0.0 {
        sum -= emph;
    }
    let compound = normalize(sum);

    let mut pos_sum = 0.0;
    let mut neg_sum = 0.0;
    let mut neu_count = 0.0;
    for &s in sentiments {
        if s > 0.0 {
            pos_sum += s + 1.0;
        }
        if s < 0.0 {
            neg_sum += s - 1.0;
        }
        if s == 0.0 {
            neu_count += 1.0;
        }
    }
    if pos_sum > neg_sum.abs() {
        pos_sum += emph;
    } else if pos_sum < neg_sum.abs() {
        neg_sum -= emph;
    }
    let total = pos_sum + neg_sum.abs() + neu_count;
    SentimentScore {
        compound,
        positive: (pos_sum / total).abs(),
        neutral: (neu_count / total).abs(),
        negative: (neg_sum / total).abs(),
    }
}

/// Scores `text` with the bundled lexicon.
pub fn compound(text: &str) -> SentimentScore {
    Analyzer::bundled().score(text)
}

/// `compound(model_text) - compound(annotation_text)`: positive when the
/// model reads more positive than the annotator.
pub fn sentiment_difference(model_text: &str, annotation_text: &str) -> f64 {
    compound(model_text).compound - compound(annotation_text).compound
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_zero() {
        assert_eq!(compound("").compound, 0.0);
        assert_eq!(compound("   ").compound, 0.0);
    }

    #[test]
    fn polarity() {
        assert!(compound("happy").compound > 0.0);
        assert!(compound("sad").compound < 0.0);
        assert!(sentiment_difference("happy", "sad") > 0.0);
    }

    #[test]
    fn single_word_matches_normalization() {
        // "good" has valence 1.9 in the lexicon
        let want = 1.9 / (1.9f64 * 1.9 + 15.0).sqrt();
        assert!((compound("good").compound - want).abs() < 1e-12);
    }

    #[test]
    fn python_isupper() {
        assert!(is_upper("SUX"));
        assert!(is_upper("A1!"));
        assert!(!is_upper("123"));
        assert!(!is_upper("Sux"));
    }

    #[test]
    fn emoticon_survives_stripping() {
        assert_eq!(strip_punc_if_word(":)"), ":)");
        assert_eq!(strip_punc_if_word("happy!!"), "happy");
        assert_eq!(strip_punc_if_word("ok."), "ok.");
    }

    #[test]
    fn but_check_uses_first_equal_value() {
        let lower: Vec<String> = ["a", "but", "b"].iter().map(|s| s.to_string()).collect();
        let mut v = vec![1.0, 0.0, 1.0];
        but_check(&lower, &mut v);
        // both 1.0s resolve to index 0: 1.0 -> 0.5, then the second 1.0 is
        // found at index 2 only after the first has changed
        assert_eq!(v, vec![0.5, 0.0, 1.5]);
    }
}
