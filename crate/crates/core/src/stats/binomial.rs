use super::special::ln_choose;
use super::{Result, StatsError};

/// Relative slack when comparing point probabilities, so that outcomes
/// whose probability equals `P(k)` up to rounding are counted as extreme.
const REL_TOL: f64 = 1e-7;

/// Exact two-tailed binomial p-value: the total probability of all outcomes
/// no more likely than the observed `k`.
pub fn binomial_two_tailed(k: u64, n: u64, p0: f64) -> Result<f64> {
    if k > n {
        return Err(StatsError::Domain(format!("k = {k} exceeds n = {n}")));
    }
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(StatsError::Domain(format!(
            "p0 must be in (0, 1), got {p0}"
        )));
    }
    let ln_p = p0.ln();
    let ln_q = (1.0 - p0).ln();
    let pmf = |i: u64| (ln_choose(n, i) + i as f64 * ln_p + (n - i) as f64 * ln_q).exp();

    let observed = pmf(k);
    let threshold = observed * (1.0 + REL_TOL);
    // sum smallest terms first
    let mut terms: Vec<f64> = (0..=n).map(pmf).filter(|&p| p <= threshold).collect();
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>().min(1.0))
}
