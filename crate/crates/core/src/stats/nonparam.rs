use super::dist::{chi2_upper, normal_sf};
use super::{check_finite, Result, StatsError, TestResult};

/// Exact Mann-Whitney p-values are enumerated up to this `n_a * n_b`.
const MWU_EXACT_LIMIT: usize = 400;

/// 1-based ranks with ties sharing the mean of their positions.
pub fn midranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Sizes of each tie group (only groups of 2 or more).
fn tie_sizes(x: &[f64]) -> Vec<usize> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        if j > i {
            out.push(j - i + 1);
        }
        i = j + 1;
    }
    out
}

/// Mann-Whitney U test of `a` against `b`, two-tailed.
///
/// `U` counts pairs with `a_i > b_j` plus half the ties, so
/// `U(a, b) + U(b, a) = n_a * n_b`. For `n_a * n_b <= 400` the p-value is
/// the exact permutation probability over midranks; larger samples use the
/// tie-corrected normal approximation with continuity correction.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::InsufficientData(
            "mann-whitney needs two nonempty groups".into(),
        ));
    }
    check_finite(a, "a")?;
    check_finite(b, "b")?;

    let na = a.len();
    let nb = b.len();
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let rank_sum_a: f64 = ranks[..na].iter().sum();
    let u = rank_sum_a - (na * (na + 1)) as f64 / 2.0;

    if na * nb <= MWU_EXACT_LIMIT {
        let p = exact_mwu_p(&ranks, na);
        return Ok(TestResult::new("mann_whitney_u", u, vec![], p)
            .with_extra("U", u)
            .with_extra("exact", 1.0));
    }

    let n = (na + nb) as f64;
    let ties: f64 = tie_sizes(&pooled)
        .iter()
        .map(|&t| (t * t * t - t) as f64)
        .sum();
    let var = (na * nb) as f64 / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    let mu = (na * nb) as f64 / 2.0;
    let (z, p) = if var <= 0.0 {
        (0.0, 1.0)
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        (z, (2.0 * normal_sf(z)).min(1.0))
    };
    Ok(TestResult::new("mann_whitney_u", u, vec![], p)
        .with_extra("U", u)
        .with_extra("z", z)
        .with_extra("exact", 0.0))
}

/// Exact two-sided permutation p for the rank sum of the first `na` items.
///
/// Ranks are doubled so midranks become integers; a subset-sum count over
/// all `C(n, na)` assignments gives the null distribution.
fn exact_mwu_p(ranks: &[f64], na: usize) -> f64 {
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let total: usize = doubled.iter().sum();
    // the two-sided p is the same from either side; count the smaller one
    let (na, observed) = if na <= ranks.len() - na {
        (na, doubled[..na].iter().sum::<usize>())
    } else {
        (ranks.len() - na, doubled[na..].iter().sum::<usize>())
    };

    // counts[j][s]: number of j-subsets with doubled rank sum s
    let mut counts = vec![vec![0u128; total + 1]; na + 1];
    counts[0][0] = 1;
    for (seen, &r) in doubled.iter().enumerate() {
        let top = na.min(seen + 1);
        for j in (1..=top).rev() {
            for s in (r..=total).rev() {
                let c = counts[j - 1][s - r];
                if c != 0 {
                    counts[j][s] += c;
                }
            }
        }
    }

    let n = ranks.len();
    // E[doubled sum] = na * (n + 1); compare |S - E| as integers (x2 again)
    let centre = (na * (n + 1)) as i128;
    let dev = |s: usize| (s as i128 - centre).abs();
    let obs_dev = dev(observed);
    let all: u128 = counts[na].iter().sum();
    let extreme: u128 = counts[na]
        .iter()
        .enumerate()
        .filter(|(s, _)| dev(*s) >= obs_dev)
        .map(|(_, c)| *c)
        .sum();
    (extreme as f64 / all as f64).min(1.0)
}

/// Friedman test over a complete `subjects x conditions` matrix.
///
/// Ranks within each subject use midranks; the statistic carries the usual
/// tie correction. A matrix where every subject is tied across all
/// conditions has statistic 0 and `p = 1`.
pub fn friedman<R: AsRef<[f64]>>(matrix: &[R]) -> Result<TestResult> {
    let n = matrix.len();
    if n < 2 {
        return Err(StatsError::InsufficientData(format!(
            "friedman needs at least 2 subjects, got {n}"
        )));
    }
    let k = matrix[0].as_ref().len();
    if k < 2 {
        return Err(StatsError::InsufficientData(format!(
            "friedman needs at least 2 conditions, got {k}"
        )));
    }
    let mut rank_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    for (i, row) in matrix.iter().enumerate() {
        let row = row.as_ref();
        if row.len() != k {
            return Err(StatsError::Domain(format!(
                "subject {i} has {} cells, expected {k}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::Domain(format!(
                "subject {i} has a missing cell"
            )));
        }
        for (sum, r) in rank_sums.iter_mut().zip(midranks(row)) {
            *sum += r;
        }
        tie_term += tie_sizes(row)
            .iter()
            .map(|&t| (t * t * t - t) as f64)
            .sum::<f64>();
    }

    let nf = n as f64;
    let kf = k as f64;
    let ss: f64 = rank_sums.iter().map(|r| r * r).sum();
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * ss - 3.0 * nf * (kf + 1.0);
    let correction = 1.0 - tie_term / (nf * kf * (kf * kf - 1.0));
    let (stat, p) = if correction <= 1e-12 {
        (0.0, 1.0)
    } else {
        let stat = (raw / correction).max(0.0);
        (stat, chi2_upper(stat, kf - 1.0))
    };
    Ok(TestResult::new("friedman", stat, vec![(k - 1) as u32], p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midranks_share_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn complete_separation() {
        let r = mann_whitney_u(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        // 2 of the 6 arrangements are as extreme
        assert!((r.p_value - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn empty_group_rejected() {
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn friedman_maximal_agreement() {
        let rows: Vec<[f64; 3]> = (0..10)
            .map(|i| [i as f64, i as f64 + 1.0, i as f64 + 2.0])
            .collect();
        let r = friedman(&rows).unwrap();
        assert!((r.statistic - 20.0).abs() < 1e-12);
        assert_eq!(r.df, vec![2]);
        assert!(r.p_value < 0.001);
    }

    #[test]
    fn friedman_all_tied() {
        let rows = vec![[4.0, 4.0, 4.0]; 10];
        let r = friedman(&rows).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn friedman_missing_cell() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![1.0, f64::NAN, 3.0]];
        assert!(friedman(&rows).is_err());
        let ragged = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0]];
        assert!(friedman(&ragged).is_err());
    }
}
