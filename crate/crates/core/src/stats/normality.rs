use super::dist::chi2_upper;
use super::{check_finite, mean, Result, StatsError, TestResult};

/// Smallest sample for which the kurtosis z-score is considered valid.
pub const MIN_N: usize = 20;

/// D'Agostino-Pearson omnibus normality test.
///
/// Combines the skewness z-score (D'Agostino 1970) and the kurtosis z-score
/// (Anscombe & Glynn 1983) into `K^2 = Z_s^2 + Z_k^2 ~ chi^2(2)`.
pub fn dagostino_pearson(x: &[f64]) -> Result<TestResult> {
    let n = x.len();
    if n < MIN_N {
        return Err(StatsError::Domain(format!(
            "D'Agostino-Pearson requires n >= {MIN_N}, got {n}"
        )));
    }
    check_finite(x, "sample")?;

    let m = mean(x);
    let moment = |p: i32| x.iter().map(|v| (v - m).powi(p)).sum::<f64>() / n as f64;
    let m2 = moment(2);
    if m2 == 0.0 {
        return Err(StatsError::Domain("sample has zero variance".into()));
    }
    let skew = moment(3) / m2.powf(1.5);
    let kurt = moment(4) / (m2 * m2);

    let zs = skew_z(skew, n as f64);
    let zk = kurtosis_z(kurt, n as f64);
    let k2 = zs * zs + zk * zk;
    Ok(
        TestResult::new("dagostino_pearson", k2, vec![2], chi2_upper(k2, 2.0))
            .with_extra("z_skew", zs)
            .with_extra("z_kurtosis", zk),
    )
}

fn skew_z(b2: f64, n: f64) -> f64 {
    let mut y = b2 * (((n + 1.0) * (n + 3.0)) / (6.0 * (n - 2.0))).sqrt();
    let beta2 = 3.0 * (n * n + 27.0 * n - 70.0) * (n + 1.0) * (n + 3.0)
        / ((n - 2.0) * (n + 5.0) * (n + 7.0) * (n + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    if y == 0.0 {
        y = 1.0;
    }
    let ya = y / alpha;
    delta * (ya + (ya * ya + 1.0).sqrt()).ln()
}

fn kurtosis_z(b2: f64, n: f64) -> f64 {
    let e = 3.0 * (n - 1.0) / (n + 1.0);
    let var_b2 = 24.0 * n * (n - 2.0) * (n - 3.0) / ((n + 1.0) * (n + 1.0) * (n + 3.0) * (n + 5.0));
    let x = (b2 - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (n * n - 5.0 * n + 2.0) / ((n + 7.0) * (n + 9.0))
        * (6.0 * (n + 3.0) * (n + 5.0) / (n * (n - 2.0) * (n - 3.0))).sqrt();
    let a = 6.0
        + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + x * (2.0 / (a - 4.0)).sqrt();
    if denom == 0.0 {
        return f64::NAN;
    }
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).powf(1.0 / 3.0);
    (term1 - term2) / (2.0 / (9.0 * a)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_enforced() {
        assert!(matches!(
            dagostino_pearson(&[1.0, 2.0, 3.0, 4.0, 5.0]),
            Err(StatsError::Domain(_))
        ));
    }

    #[test]
    fn constant_sample() {
        assert!(dagostino_pearson(&[1.0; 25]).is_err());
    }
}
