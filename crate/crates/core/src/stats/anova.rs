use super::dist::{f_upper, studentized_range_sf};
use super::{check_finite, mean, Result, StatsError, TestResult, TukeyPair};

struct Layout {
    means: Vec<f64>,
    sizes: Vec<usize>,
    ss_between: f64,
    ss_within: f64,
    n_total: usize,
}

fn layout<S: AsRef<str>, V: AsRef<[f64]>>(groups: &[(S, V)]) -> Result<Layout> {
    if groups.len() < 2 {
        return Err(StatsError::InsufficientData(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    for (name, values) in groups {
        let values = values.as_ref();
        if values.len() < 2 {
            return Err(StatsError::Domain(format!(
                "group '{}' has {} value(s); at least 2 required",
                name.as_ref(),
                values.len()
            )));
        }
        check_finite(values, name.as_ref())?;
    }

    let n_total: usize = groups.iter().map(|(_, v)| v.as_ref().len()).sum();
    let means: Vec<f64> = groups.iter().map(|(_, v)| mean(v.as_ref())).collect();
    let sizes: Vec<usize> = groups.iter().map(|(_, v)| v.as_ref().len()).collect();
    // Equal group means give an exactly zero between-group sum.
    let grand = if means.iter().all(|m| *m == means[0]) {
        means[0]
    } else {
        groups
            .iter()
            .flat_map(|(_, v)| v.as_ref().iter())
            .sum::<f64>()
            / n_total as f64
    };

    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for ((_, values), &m) in groups.iter().zip(&means) {
        let values = values.as_ref();
        ss_between += values.len() as f64 * (m - grand) * (m - grand);
        ss_within += values.iter().map(|v| (v - m) * (v - m)).sum::<f64>();
    }
    Ok(Layout {
        means,
        sizes,
        ss_between,
        ss_within,
        n_total,
    })
}

/// One-way ANOVA across named groups.
///
/// `F = MS_between / MS_within` on `(k - 1, N - k)` degrees of freedom.
/// When both sums of squares vanish (every value identical) `F` is defined
/// as 0 with `p = 1`.
pub fn one_way_anova<S: AsRef<str>, V: AsRef<[f64]>>(groups: &[(S, V)]) -> Result<TestResult> {
    let l = layout(groups)?;
    let k = groups.len();
    let df1 = (k - 1) as f64;
    let df2 = (l.n_total - k) as f64;
    let ms_between = l.ss_between / df1;
    let ms_within = l.ss_within / df2;

    let (f, p) = if l.ss_within == 0.0 {
        if l.ss_between == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, 0.0)
        }
    } else {
        let f = ms_between / ms_within;
        (f, f_upper(f, df1, df2))
    };

    Ok(TestResult::new(
        "one_way_anova",
        f,
        vec![(k - 1) as u32, (l.n_total - k) as u32],
        p,
    )
    .with_extra("ss_between", l.ss_between)
    .with_extra("ss_within", l.ss_within)
    .with_extra("ms_between", ms_between)
    .with_extra("ms_within", ms_within))
}

/// Tukey's HSD over every pair of groups (Tukey-Kramer for unequal sizes).
///
/// Pairs come out in input order: (0,1), (0,2), ..., (1,2), ...
pub fn tukey_hsd<S: AsRef<str>, V: AsRef<[f64]>>(
    groups: &[(S, V)],
    alpha: f64,
) -> Result<Vec<TukeyPair>> {
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(StatsError::Domain(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    let l = layout(groups)?;
    let k = groups.len();
    let df = (l.n_total - k) as f64;
    let mse = l.ss_within / df;

    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            let diff = l.means[i] - l.means[j];
            let se = (mse / 2.0 * (1.0 / l.sizes[i] as f64 + 1.0 / l.sizes[j] as f64)).sqrt();
            let p_adj = if diff == 0.0 {
                1.0
            } else if se == 0.0 {
                0.0
            } else {
                studentized_range_sf(diff.abs() / se, k as f64, df)
            };
            pairs.push(TukeyPair {
                group_a: groups[i].0.as_ref().to_string(),
                group_b: groups[j].0.as_ref().to_string(),
                mean_diff: diff,
                p_adj,
                reject: TukeyPair::rejects(p_adj, alpha),
            });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups_give_zero_f() {
        let g = [1.0, 2.0, 3.0];
        let r = one_way_anova(&[("a", &g[..]), ("b", &g[..]), ("c", &g[..])]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.df, vec![2, 6]);
    }

    #[test]
    fn df_for_three_models_by_36_episodes() {
        let groups: Vec<(String, Vec<f64>)> = (0..3)
            .map(|g| {
                (
                    format!("m{g}"),
                    (0..36).map(|i| (i * (g + 1)) as f64 % 7.0).collect(),
                )
            })
            .collect();
        let r = one_way_anova(&groups).unwrap();
        assert_eq!(r.df, vec![2, 105]);
    }

    #[test]
    fn constant_values_everywhere() {
        let g = [2.0, 2.0];
        let r = one_way_anova(&[("a", &g[..]), ("b", &g[..])]).unwrap();
        assert_eq!((r.statistic, r.p_value), (0.0, 1.0));
    }

    #[test]
    fn small_group_is_rejected() {
        let err = one_way_anova(&[("a", &[1.0][..]), ("b", &[1.0, 2.0][..])]).unwrap_err();
        assert!(matches!(err, StatsError::Domain(_)));
        assert!(one_way_anova(&[("a", &[1.0, 2.0][..])]).is_err());
    }

    #[test]
    fn tukey_identical_groups() {
        let g = [1.0, 2.0, 3.0, 4.0];
        let pairs = tukey_hsd(&[("a", &g[..]), ("b", &g[..]), ("c", &g[..])], 0.05).unwrap();
        assert_eq!(pairs.len(), 3);
        for p in pairs {
            assert_eq!(p.p_adj, 1.0);
            assert!(!p.reject);
        }
    }

    #[test]
    fn reject_is_strict_threshold() {
        assert!(TukeyPair::rejects(0.04, 0.05));
        assert!(!TukeyPair::rejects(0.05, 0.05));
        assert!(!TukeyPair::rejects(0.06, 0.05));
    }
}
