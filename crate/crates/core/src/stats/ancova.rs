use super::dist::f_upper;
use super::{check_finite, Result, StatsError, TestResult};

/// Residual sum of squares of the least-squares fit `y ~ X`, via Householder
/// QR. `x` is row-major with `cols` columns. Returns `None` when the design
/// is rank deficient.
fn residual_ss(x: &[f64], cols: usize, y: &[f64]) -> Option<f64> {
    let rows = y.len();
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);

    for c in 0..cols {
        let norm: f64 = (c..rows)
            .map(|r| a[r * cols + c].powi(2))
            .sum::<f64>()
            .sqrt();
        if norm <= 1e-10 * scale * (rows as f64).sqrt() {
            return None;
        }
        let alpha = if a[c * cols + c] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (c..rows).map(|r| a[r * cols + c]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for cc in c..cols {
            let dot: f64 = v
                .iter()
                .enumerate()
                .map(|(i, vi)| vi * a[(c + i) * cols + cc])
                .sum();
            let f = 2.0 * dot / vnorm2;
            for (i, vi) in v.iter().enumerate() {
                a[(c + i) * cols + cc] -= f * vi;
            }
        }
        let dot: f64 = v.iter().enumerate().map(|(i, vi)| vi * b[c + i]).sum();
        let f = 2.0 * dot / vnorm2;
        for (i, vi) in v.iter().enumerate() {
            b[c + i] -= f * vi;
        }
    }
    Some(b[cols..].iter().map(|r| r * r).sum())
}

/// One-covariate ANCOVA: F test for the group factor after adjusting for
/// `covariate`, comparing `y ~ 1 + covariate` against
/// `y ~ 1 + group + covariate`. `df = (k - 1, N - k - 1)`.
///
/// Groups are identified by label and ordered by first appearance.
pub fn ancova<S: AsRef<str>>(post: &[f64], group: &[S], covariate: &[f64]) -> Result<TestResult> {
    let n = post.len();
    if group.len() != n {
        return Err(StatsError::LengthMismatch {
            left: n,
            right: group.len(),
        });
    }
    if covariate.len() != n {
        return Err(StatsError::LengthMismatch {
            left: n,
            right: covariate.len(),
        });
    }
    check_finite(post, "outcome")?;
    check_finite(covariate, "covariate")?;

    let mut labels: Vec<&str> = Vec::new();
    let codes: Vec<usize> = group
        .iter()
        .map(|g| {
            let g = g.as_ref();
            match labels.iter().position(|l| *l == g) {
                Some(i) => i,
                None => {
                    labels.push(g);
                    labels.len() - 1
                }
            }
        })
        .collect();
    let k = labels.len();
    if k < 2 {
        return Err(StatsError::InsufficientData(
            "ancova needs at least 2 groups".into(),
        ));
    }
    if n < k + 2 {
        return Err(StatsError::InsufficientData(format!(
            "ancova with {k} groups needs more than {} observations, got {n}",
            k + 1
        )));
    }

    let reduced_cols = 2;
    let mut reduced = Vec::with_capacity(n * reduced_cols);
    let full_cols = k + 1;
    let mut full = Vec::with_capacity(n * full_cols);
    for i in 0..n {
        reduced.extend_from_slice(&[1.0, covariate[i]]);
        full.push(1.0);
        for g in 1..k {
            full.push(if codes[i] == g { 1.0 } else { 0.0 });
        }
        full.push(covariate[i]);
    }

    let singular = || StatsError::Domain("singular design (is the covariate constant?)".into());
    let sse_reduced = residual_ss(&reduced, reduced_cols, post).ok_or_else(singular)?;
    let sse_full = residual_ss(&full, full_cols, post).ok_or_else(singular)?;

    let df1 = (k - 1) as f64;
    let df2 = (n - k - 1) as f64;
    let ss_group = (sse_reduced - sse_full).max(0.0);
    let (f, p) = if sse_full <= 1e-14 * sse_reduced.max(1.0) {
        if ss_group <= 1e-14 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = (ss_group / df1) / (sse_full / df2);
        (f, f_upper(f, df1, df2))
    };

    Ok(
        TestResult::new("ancova", f, vec![(k - 1) as u32, (n - k - 1) as u32], p)
            .with_extra("ss_group", ss_group)
            .with_extra("ss_error", sse_full),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn residuals_of_exact_line_vanish() {
        // y = 2 + 3x
        let x = [1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0];
        let y = [2.0, 5.0, 8.0, 11.0];
        assert!(residual_ss(&x, 2, &y).unwrap() < 1e-20);
    }

    #[test]
    fn df_three_groups_of_forty() {
        let n = 120;
        let post: Vec<f64> = (0..n).map(|i| ((i * 37) % 11) as f64 / 3.0).collect();
        let cov: Vec<f64> = (0..n).map(|i| ((i * 13) % 7) as f64).collect();
        let grp: Vec<&str> = (0..n)
            .map(|i| ["success", "control", "ea"][i % 3])
            .collect();
        let r = ancova(&post, &grp, &cov).unwrap();
        assert_eq!(r.df, vec![2, 116]);
    }

    #[test]
    fn constant_covariate_is_singular() {
        let post = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let grp = ["a", "a", "a", "b", "b", "b"];
        let cov = [2.0; 6];
        assert!(matches!(
            ancova(&post, &grp, &cov),
            Err(StatsError::Domain(_))
        ));
    }
}
