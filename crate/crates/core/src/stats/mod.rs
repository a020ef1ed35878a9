//! Hypothesis tests and Bayesian mean contrasts.
//!
//! Every procedure is implemented from first principles on `f64` slices.
//! Tail probabilities come from [`dist`], which in turn sits on the
//! incomplete beta / gamma functions in [`special`].
//!
//! Group-wise procedures take `&[(name, values)]` so callers can pass
//! `("gemini-2.5-flash", &scores[..])` pairs without building a struct.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

mod ancova;
mod anova;
mod bayes;
mod binomial;
pub mod dist;
mod nonparam;
mod normality;
pub mod special;
mod ttest;

pub use ancova::ancova;
pub use anova::{one_way_anova, tukey_hsd};
pub use bayes::{bayes_contrasts, bayes_fit, hdi, BayesConfig, BayesFit};
pub use binomial::binomial_two_tailed;
pub use nonparam::{friedman, mann_whitney_u, midranks};
pub use normality::{dagostino_pearson, MIN_N as NORMALITY_MIN_N};
pub use ttest::paired_t;

/// Errors raised by the statistics battery.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("sampler did not converge: max R-hat {rhat:.4} >= {limit}")]
    NotConverged { rhat: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Outcome of a frequentist test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test_name: String,
    pub statistic: f64,
    /// Degrees of freedom; empty when the test has none.
    pub df: Vec<u32>,
    pub p_value: f64,
    /// Auxiliary numbers, e.g. `U` and `z` for Mann-Whitney.
    #[serde(default)]
    pub extras: BTreeMap<String, f64>,
}

impl TestResult {
    pub(crate) fn new(name: &str, statistic: f64, df: Vec<u32>, p_value: f64) -> Self {
        Self {
            test_name: name.to_string(),
            statistic,
            df,
            p_value: p_value.clamp(0.0, 1.0),
            extras: BTreeMap::new(),
        }
    }

    pub(crate) fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }
}

/// One pairwise Tukey HSD comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TukeyPair {
    pub group_a: String,
    pub group_b: String,
    /// `mean(group_a) - mean(group_b)`.
    pub mean_diff: f64,
    pub p_adj: f64,
    pub reject: bool,
}

impl TukeyPair {
    /// Rejection rule: strictly below `alpha`.
    pub fn rejects(p_adj: f64, alpha: f64) -> bool {
        p_adj < alpha
    }
}

/// Posterior summary of a difference of condition means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorContrast {
    /// `"<a> - <b>"`.
    pub label: String,
    pub mean: f64,
    pub hdi_low: f64,
    pub hdi_high: f64,
    pub prob_gt_zero: f64,
    pub mass: f64,
}

impl PosteriorContrast {
    pub fn hdi_excludes_zero(&self) -> bool {
        self.hdi_high < 0.0 || self.hdi_low > 0.0
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator). Zero for fewer than two
/// values.
pub fn sample_sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() - 1) as f64).sqrt()
}

/// Arithmetic mean, `NaN` for an empty slice.
pub fn sample_mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        mean(x)
    }
}

pub(crate) fn check_finite(x: &[f64], what: &str) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::Domain(format!(
            "{what} contains non-finite values"
        )));
    }
    Ok(())
}
