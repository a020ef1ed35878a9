use super::dist::t_two_tailed;
use super::{check_finite, mean, Result, StatsError, TestResult};

/// Two-tailed paired t-test on `a - b`, `df = n - 1`.
///
/// Differences with zero variance (including `a == b`) are a domain error:
/// the statistic is undefined there and callers report it as "no variance".
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "paired t needs at least 2 pairs, got {}",
            a.len()
        )));
    }
    check_finite(a, "a")?;
    check_finite(b, "b")?;

    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = mean(&d);
    let var = d.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Err(StatsError::Domain(
            "paired differences have zero variance".into(),
        ));
    }
    let t = m / (var.sqrt() / n.sqrt());
    let df = d.len() - 1;
    Ok(
        TestResult::new("paired_t", t, vec![df as u32], t_two_tailed(t, df as f64))
            .with_extra("mean_diff", m),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_case() {
        // d = {1,2,3,4}: mean 2.5, sd sqrt(5/3), t = 2.5 / (sd / 2) = sqrt(15)
        let a = [2.0, 4.0, 6.0, 8.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let r = paired_t(&a, &b).unwrap();
        let sd = (5.0f64 / 3.0).sqrt();
        let t = 2.5 / (sd / 2.0);
        assert!((r.statistic - t).abs() < 1e-12);
        assert_eq!(r.df, vec![3]);
        assert!((r.statistic - 15f64.sqrt()).abs() < 1e-12);
        assert!(
            (r.p_value - 0.030_466_291_662_170_98).abs() < 1e-9,
            "{}",
            r.p_value
        );
    }

    #[test]
    fn degenerate_inputs() {
        let a = [1.0, 2.0, 3.0];
        assert!(matches!(paired_t(&a, &a), Err(StatsError::Domain(_))));
        let b = [0.0, 1.0, 2.0];
        assert!(matches!(paired_t(&a, &b), Err(StatsError::Domain(_))));
        assert!(matches!(
            paired_t(&a, &[1.0]),
            Err(StatsError::LengthMismatch { .. })
        ));
    }
}
