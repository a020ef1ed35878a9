//! Markdown, CSV and JSON renderings of pipeline results.
//!
//! Every file starts with the run header. Output depends only on the result
//! and the header, so equal inputs give byte-identical files.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{fmt6, fmt_p, AblationResult, EvalError, Study1Result, Study2Result, Summary, Tested};
use crate::stats::TestResult;

/// Sign convention of sentiment differences.
pub const SIGN_CONVENTION: &str = "model - human";

/// Provenance recorded at the top of every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunHeader {
    pub run_id: String,
    pub seed: u64,
    pub config_hash: String,
    pub norm_hash: String,
    pub aggregation: String,
    pub embed_backend: String,
    pub sign_convention: String,
}

impl RunHeader {
    fn lines(&self) -> Vec<(&'static str, String)> {
        vec![
            ("run_id", self.run_id.clone()),
            ("seed", self.seed.to_string()),
            ("config_hash", self.config_hash.clone()),
            ("normalization_hash", self.norm_hash.clone()),
            ("aggregation", self.aggregation.clone()),
            ("embed_backend", self.embed_backend.clone()),
            ("sentiment_sign", self.sign_convention.clone()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Markdown,
    Csv,
    Json,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Markdown, Format::Csv, Format::Json];

    pub fn extension(&self) -> &'static str {
        match self {
            Format::Markdown => "md",
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// A result that can be written as a report.
pub trait Report {
    /// File stem, e.g. `"study1"`.
    fn stem(&self) -> &'static str;
    fn title(&self) -> &'static str;
    /// Markdown body after the header.
    fn markdown_body(&self) -> String;
    /// CSV header row and data rows.
    fn csv_rows(&self) -> (Vec<&'static str>, Vec<Vec<String>>);
    fn json_value(&self) -> serde_json::Value;
}

/// Renders `report` in one format.
pub fn render(report: &dyn Report, header: &RunHeader, format: Format) -> String {
    match format {
        Format::Markdown => {
            let mut s = format!("# {}\n\n", report.title());
            for (k, v) in header.lines() {
                let _ = writeln!(s, "- {k}: `{v}`");
            }
            s.push('\n');
            s.push_str(&report.markdown_body());
            s
        }
        Format::Csv => {
            let mut s = String::new();
            for (k, v) in header.lines() {
                let _ = writeln!(s, "# {k}: {v}");
            }
            let (cols, rows) = report.csv_rows();
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&cols).expect("in-memory write");
            for r in rows {
                w.write_record(&r).expect("in-memory write");
            }
            s.push_str(
                &String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8"),
            );
            s
        }
        Format::Json => {
            let v = serde_json::json!({ "header": header, "result": report.json_value() });
            let mut s = serde_json::to_string_pretty(&v).expect("serializable");
            s.push('\n');
            s
        }
    }
}

/// Writes `<dir>/<stem>.<ext>` for each format and returns the paths.
pub fn emit_report(
    report: &dyn Report,
    header: &RunHeader,
    dir: &Path,
    formats: &[Format],
) -> Result<Vec<PathBuf>, EvalError> {
    let io = |path: &Path, e: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut out = Vec::new();
    for f in formats {
        let path = dir.join(format!("{}.{}", report.stem(), f.extension()));
        std::fs::write(&path, render(report, header, *f)).map_err(|e| io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

/// `F(2, 105) = 74.745, p < .001` and the like.
pub fn describe_test(t: &TestResult) -> String {
    let df =
        t.df.iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(", ");
    let p = fmt_p(t.p_value);
    match t.test_name.as_str() {
        "one_way_anova" | "ancova" => format!("F({df}) = {:.3}, {p}", t.statistic),
        "paired_t" => format!("t({df}) = {:.3}, {p}", t.statistic),
        "friedman" | "dagostino_pearson" => format!("χ²({df}) = {:.3}, {p}", t.statistic),
        "mann_whitney_u" => format!("U = {:.1}, {p}", t.statistic),
        "binomial_two_tailed" => format!(
            "binomial k = {}, n = {}, two-tailed {p}",
            t.statistic,
            t.extras.get("n").copied().unwrap_or(f64::NAN)
        ),
        other => format!("{other} = {:.3}, {p}", t.statistic),
    }
}

fn describe_tested(t: &Tested) -> String {
    match (&t.result, &t.note) {
        (Some(r), _) => describe_test(r),
        (None, Some(n)) => format!("not computed ({n})"),
        (None, None) => "not computed".into(),
    }
}

fn summary_line(s: &Summary) -> String {
    format!("| {} | {} | {:.3} | {:.3} |", s.label, s.n, s.mean, s.sd)
}

fn summary_table(rows: &[Summary]) -> String {
    let mut s = String::from("| | n | M | SD |\n|---|---|---|---|\n");
    for r in rows {
        s.push_str(&summary_line(r));
        s.push('\n');
    }
    s
}

fn test_cells(t: &Tested) -> [String; 4] {
    match &t.result {
        Some(r) => [
            fmt6(r.statistic),
            r.df.iter()
                .map(u32::to_string)
                .collect::<Vec<_>>()
                .join(" "),
            fmt6(r.p_value),
            String::new(),
        ],
        None => [
            "NA".into(),
            String::new(),
            "NA".into(),
            t.note.clone().unwrap_or_default(),
        ],
    }
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

impl Report for Study1Result {
    fn stem(&self) -> &'static str {
        "study1"
    }

    fn title(&self) -> &'static str {
        "Emotion description accuracy"
    }

    fn markdown_body(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} episodes, {} models. Annotations used: {}, excluded as empty after normalization: {}.\n",
            self.episodes.len(),
            self.models.len(),
            self.annotations_used,
            self.annotations_excluded
        );
        let _ = writeln!(
            s,
            "## Cosine similarity ({})\n",
            self.options.aggregation.as_str()
        );
        s.push_str(&summary_table(&self.similarity_summary));
        let _ = writeln!(
            s,
            "\nOne-way ANOVA: {}.\n",
            describe_test(&self.similarity_anova)
        );
        s.push_str(&tukey_md(&self.similarity_tukey));
        let _ = writeln!(
            s,
            "\n## Sentiment difference ({SIGN_CONVENTION}, {} text, {} mean)\n",
            match self.options.sentiment_text {
                crate::config::SentimentText::Raw => "raw",
                crate::config::SentimentText::Normalized => "normalized",
            },
            match self.options.sentiment_mean {
                crate::config::SentimentMean::PerEpisode => "per-episode",
                crate::config::SentimentMean::AllPairs => "all-pairs",
            }
        );
        s.push_str(&summary_table(&self.sentiment_summary));
        let _ = writeln!(
            s,
            "\nOne-way ANOVA: {}.\n",
            describe_test(&self.sentiment_anova)
        );
        s.push_str(&tukey_md(&self.sentiment_tukey));
        s
    }

    fn csv_rows(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let mut rows = Vec::new();
        for (mi, m) in self.models.iter().enumerate() {
            for (ei, e) in self.episodes.iter().enumerate() {
                rows.push(vec![
                    m.clone(),
                    e.clone(),
                    fmt6(self.similarity[mi][ei]),
                    fmt6(self.sentiment[mi][ei]),
                ]);
            }
        }
        (
            vec!["model", "episode_id", "similarity", "sentiment_diff"],
            rows,
        )
    }

    fn json_value(&self) -> serde_json::Value {
        json(self)
    }
}

fn tukey_md(pairs: &[crate::stats::TukeyPair]) -> String {
    let mut s = String::from("| Tukey HSD | diff | p adj | reject |\n|---|---|---|---|\n");
    for p in pairs {
        let _ = writeln!(
            s,
            "| {} vs {} | {:.3} | {:.3} | {} |",
            p.group_a, p.group_b, p.mean_diff, p.p_adj, p.reject
        );
    }
    s
}

impl Report for AblationResult {
    fn stem(&self) -> &'static str {
        "ablation"
    }

    fn title(&self) -> &'static str {
        "Ablation: classifier vs stacked baseline"
    }

    fn markdown_body(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} episodes, aggregation {}. Unparseable classifier outputs excluded: {}.\n",
            self.episodes_total,
            self.aggregation.as_str(),
            self.unparseable.len()
        );
        let summaries: Vec<Summary> = self.variants.iter().map(|v| v.summary.clone()).collect();
        s.push_str(&summary_table(&summaries));
        s.push('\n');
        for c in &self.comparisons {
            let _ = writeln!(
                s,
                "- {}: {} pairs ({} excluded), {}",
                c.variant.as_str(),
                c.n_pairs,
                c.excluded,
                describe_tested(&c.test)
            );
        }
        s
    }

    fn csv_rows(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let mut rows = Vec::new();
        for v in &self.variants {
            for (e, x) in &v.scores {
                rows.push(vec![
                    v.source.clone(),
                    v.variant.as_str().into(),
                    e.clone(),
                    fmt6(*x),
                ]);
            }
        }
        (vec!["source", "variant", "episode_id", "similarity"], rows)
    }

    fn json_value(&self) -> serde_json::Value {
        json(self)
    }
}

impl Report for Study2Result {
    fn stem(&self) -> &'static str {
        "study2"
    }

    fn title(&self) -> &'static str {
        "Emotion-aware apology user study"
    }

    fn markdown_body(&self) -> String {
        let mut s = String::new();
        let a = &self.alignment_summary;
        let _ = writeln!(
            s,
            "## Self-report alignment\n\nM = {:.3}, SD = {:.3} over {} of {} sessions ({} excluded).\n",
            a.mean,
            a.sd,
            self.alignment.len(),
            self.sessions_total,
            self.excluded.len()
        );
        for e in &self.excluded {
            let _ = writeln!(
                s,
                "- excluded {} {}: {}",
                e.participant_id, e.condition, e.reason
            );
        }
        if !self.excluded.is_empty() {
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "## Preference\n\nPreferred ea: {}.\n\nAlignment, ea-preferring vs control-preferring: {}.\n",
            describe_tested(&self.preference.test),
            describe_tested(&self.preference_alignment)
        );
        let _ = writeln!(s, "## Questionnaires\n");
        for t in &self.subscales {
            let _ = writeln!(
                s,
                "### {} {}\n\n{} complete participants, {} incomplete.\n",
                t.instrument, t.subscale, t.complete, t.incomplete
            );
            s.push_str(&summary_table(&t.conditions));
            s.push('\n');
            if let Some(f) = &t.friedman {
                let _ = writeln!(s, "Friedman: {}.\n", describe_tested(f));
            }
            if let Some(f) = &t.ancova {
                let _ = writeln!(s, "ANCOVA (pre-study covariate): {}.\n", describe_tested(f));
            }
            for n in &t.normality {
                let _ = writeln!(s, "- {}: {}", n.name, describe_tested(n));
            }
            s.push('\n');
            match &t.contrasts_note {
                Some(n) => {
                    let _ = writeln!(s, "Bayesian contrasts not computed ({n}).\n");
                }
                None => {
                    s.push_str("| contrast | mean | HDI | P(>0) |\n|---|---|---|---|\n");
                    for c in &t.contrasts {
                        let _ = writeln!(
                            s,
                            "| {} | {:.3} | [{:.3}, {:.3}] | {:.3} |",
                            c.label, c.mean, c.hdi_low, c.hdi_high, c.prob_gt_zero
                        );
                    }
                    s.push('\n');
                }
            }
        }
        s
    }

    fn csv_rows(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let cols = vec![
            "section",
            "subject",
            "label",
            "n",
            "value",
            "df",
            "p_value",
            "low",
            "high",
            "prob_gt_zero",
            "note",
        ];
        let mut rows = Vec::new();
        let row = |section: &str, subject: &str, label: &str| -> Vec<String> {
            let mut r = vec![String::new(); 11];
            r[0] = section.into();
            r[1] = subject.into();
            r[2] = label.into();
            r
        };
        for a in &self.alignment {
            let mut r = row("alignment", &a.participant_id, a.condition.as_str());
            r[4] = fmt6(a.score);
            rows.push(r);
        }
        for e in &self.excluded {
            let mut r = row("excluded", &e.participant_id, e.condition.as_str());
            r[10] = e.reason.clone();
            rows.push(r);
        }
        let push_test = |rows: &mut Vec<Vec<String>>, section: &str, subject: &str, t: &Tested| {
            let mut r = row(section, subject, &t.name);
            let [stat, df, p, note] = test_cells(t);
            r[4] = stat;
            r[5] = df;
            r[6] = p;
            r[10] = note;
            rows.push(r);
        };
        push_test(&mut rows, "preference", "ea", &self.preference.test);
        push_test(
            &mut rows,
            "preference",
            "alignment",
            &self.preference_alignment,
        );
        for t in &self.subscales {
            let subject = format!("{}/{}", t.instrument, t.subscale);
            for c in &t.conditions {
                let mut r = row("summary", &subject, &c.label);
                r[3] = c.n.to_string();
                r[4] = fmt6(c.mean);
                r[10] = format!("sd={}", fmt6(c.sd));
                rows.push(r);
            }
            for x in t.friedman.iter().chain(&t.ancova).chain(&t.normality) {
                push_test(&mut rows, "test", &subject, x);
            }
            for c in &t.contrasts {
                let mut r = row("contrast", &subject, &c.label);
                r[4] = fmt6(c.mean);
                r[7] = fmt6(c.hdi_low);
                r[8] = fmt6(c.hdi_high);
                r[9] = fmt6(c.prob_gt_zero);
                rows.push(r);
            }
            if let Some(n) = &t.contrasts_note {
                let mut r = row("contrast", &subject, "all");
                r[10] = n.clone();
                rows.push(r);
            }
        }
        (cols, rows)
    }

    fn json_value(&self) -> serde_json::Value {
        json(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn header() -> RunHeader {
        RunHeader {
            run_id: "abc".into(),
            seed: 7,
            config_hash: "c0ffee".into(),
            norm_hash: "n0rm".into(),
            aggregation: "mean_similarity".into(),
            embed_backend: "mock-sha256-64".into(),
            sign_convention: SIGN_CONVENTION.into(),
        }
    }

    fn test(name: &str, stat: f64, df: Vec<u32>, p: f64) -> TestResult {
        TestResult {
            test_name: name.into(),
            statistic: stat,
            df,
            p_value: p,
            extras: BTreeMap::new(),
        }
    }

    #[test]
    fn describes_tests_in_paper_style() {
        assert_eq!(
            describe_test(&test("one_way_anova", 74.7449, vec![2, 105], 1e-9)),
            "F(2, 105) = 74.745, p < .001"
        );
        assert_eq!(
            describe_test(&test("friedman", 6.754, vec![2], 0.0342)),
            "χ²(2) = 6.754, p = 0.034"
        );
        assert_eq!(
            describe_test(&test("mann_whitney_u", 172.0, vec![], 0.5)),
            "U = 172.0, p = 0.500"
        );
    }

    #[test]
    fn csv_cells() {
        let ok = Tested::from_result("t", Ok(test("paired_t", 1.0 / 3.0, vec![5], 0.25)));
        assert_eq!(
            test_cells(&ok),
            ["0.333333", "5", "0.250000", ""].map(String::from)
        );
        let skipped = Tested::skipped("t", "no variance");
        assert_eq!(test_cells(&skipped)[3], "no variance");
    }

    #[test]
    fn header_lines_carry_provenance() {
        let names: Vec<_> = header().lines().into_iter().map(|(k, _)| k).collect();
        assert!(
            names.contains(&"aggregation")
                && names.contains(&"normalization_hash")
                && names.contains(&"seed")
        );
    }
}
