mod common;

use common::*;
use ehk::stats::{
    ancova, bayes_contrasts, binomial_two_tailed, dagostino_pearson, friedman, hdi, mann_whitney_u,
    one_way_anova, paired_t, tukey_hsd, BayesConfig,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn named(groups: &[Vec<f64>]) -> Vec<(String, Vec<f64>)> {
    groups
        .iter()
        .enumerate()
        .map(|(i, g)| (format!("g{i}"), g.clone()))
        .collect()
}

#[test]
fn anova_matches_sums_of_squares() {
    for g in anova_cases() {
        let r = one_way_anova(&named(&g)).unwrap();
        let (f, d1, d2, p) = common::anova(&g);
        assert!(close(r.statistic, f, 1e-9), "{} vs {f}", r.statistic);
        assert_eq!(r.df, vec![d1 as u32, d2 as u32]);
        assert!(close(r.p_value, p, 1e-6), "{} vs {p}", r.p_value);
    }
}

#[test]
fn tukey_matches_reference_tables() {
    for case in tukey_cases() {
        let pairs = tukey_hsd(&named(&case.groups), 0.05).unwrap();
        for (i, j, p) in case.p_adj {
            let got = pairs
                .iter()
                .find(|t| t.group_a == format!("g{i}") && t.group_b == format!("g{j}"))
                .unwrap();
            assert!(close(got.p_adj, p, 1e-4), "({i},{j}) {} vs {p}", got.p_adj);
            let diff = mean(&case.groups[i]) - mean(&case.groups[j]);
            assert!(close(got.mean_diff, diff, 1e-12));
        }
    }
}

#[test]
fn paired_t_matches_statrs() {
    for (a, b) in paired_cases() {
        let r = paired_t(&a, &b).unwrap();
        let (t, df, p) = common::paired_t(&a, &b);
        assert!(close(r.statistic, t, 1e-9));
        assert_eq!(r.df, vec![df as u32]);
        assert!(close(r.p_value, p, 1e-6), "{} vs {p}", r.p_value);
    }
}

#[test]
fn mann_whitney_matches_exhaustive_enumeration() {
    for (a, b) in mwu_cases() {
        let r = mann_whitney_u(&a, &b).unwrap();
        assert_eq!(r.statistic, u_by_pairs(&a, &b));
        let p = mwu_exact_by_enumeration(&a, &b);
        assert!(close(r.p_value, p, 1e-12), "{} vs {p}", r.p_value);
    }
}

#[test]
fn friedman_matches_rank_oracle() {
    for m in friedman_cases() {
        let r = friedman(&m).unwrap();
        let (stat, p) = common::friedman(&m);
        assert!(close(r.statistic, stat, 1e-9), "{} vs {stat}", r.statistic);
        assert!(close(r.p_value, p, 1e-6));
        assert_eq!(r.df, vec![(m[0].len() - 1) as u32]);
    }
}

#[test]
fn ancova_matches_normal_equations() {
    for (post, group, cov) in ancova_cases() {
        let r = ancova(&post, &group, &cov).unwrap();
        let (f, d1, d2, p) = common::ancova(&post, &group, &cov);
        assert!(
            close(r.statistic, f, 1e-6 * f.max(1.0)),
            "{} vs {f}",
            r.statistic
        );
        assert_eq!(r.df, vec![d1 as u32, d2 as u32]);
        assert!(close(r.p_value, p, 1e-6));
    }
}

#[test]
fn dagostino_matches_reference_values() {
    for (x, stat, p) in normality_cases() {
        let r = dagostino_pearson(&x).unwrap();
        assert!(close(r.statistic, stat, 1e-6), "{} vs {stat}", r.statistic);
        assert!(close(r.p_value, p, 1e-6), "{} vs {p}", r.p_value);
        let chi = ChiSquared::new(2.0).unwrap().sf(r.statistic);
        assert!(close(r.p_value, chi, 1e-9));
    }
}

#[test]
fn df_bookkeeping() {
    let groups: Vec<Vec<f64>> = (0..3)
        .map(|m| (0..36).map(|e| (m * 7 + e * 3 % 11) as f64).collect())
        .collect();
    assert_eq!(one_way_anova(&named(&groups)).unwrap().df, vec![2, 105]);
    let m: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![(i % 5) as f64, (i % 3) as f64, (i % 7) as f64])
        .collect();
    assert_eq!(friedman(&m).unwrap().df, vec![2]);
    let a: Vec<f64> = (0..31).map(|i| i as f64 * 0.37 % 1.0).collect();
    let b: Vec<f64> = (0..9).map(|i| i as f64 * 0.53 % 1.0).collect();
    let u = mann_whitney_u(&a, &b).unwrap().statistic;
    assert!((0.0..=279.0).contains(&u));
}

#[test]
fn binomial_matches_exact_sum() {
    let p = binomial_two_tailed(31, 40, 0.5).unwrap();
    assert!(p < 0.001);
    assert!(close(p, binomial_exact_sum(31, 40, 0.5), 1e-12));
    for (k, n, p0) in [(3, 10, 0.5), (7, 12, 0.3), (0, 5, 0.5)] {
        assert!(close(
            binomial_two_tailed(k, n, p0).unwrap(),
            binomial_exact_sum(k, n, p0),
            1e-12
        ));
    }
}

#[test]
fn hdi_of_standard_normal() {
    let x = normal_draws(100_000, 42);
    let (lo, hi) = hdi(&x, 0.95).unwrap();
    assert!(
        close(lo, -1.96, 0.05) && close(hi, 1.96, 0.05),
        "({lo}, {hi})"
    );
}

#[test]
fn bayes_contrasts_shift_and_null() {
    let cfg = BayesConfig::default();
    let base = normal_draws(200, 1);
    let a: Vec<f64> = base.iter().map(|z| 4.0 + 0.1 * z).collect();
    let b: Vec<f64> = normal_draws(200, 2).iter().map(|z| 3.0 + 0.1 * z).collect();
    let c = bayes_contrasts(&[("a", &a), ("b", &b)], 0.95, &cfg).unwrap();
    assert!(
        c[0].hdi_low > 0.0 && c[0].prob_gt_zero > 0.999,
        "{:?}",
        c[0]
    );

    let same = bayes_contrasts(&[("a", &a), ("b", &a)], 0.95, &cfg).unwrap();
    assert!(close(same[0].prob_gt_zero, 0.5, 0.02), "{:?}", same[0]);
}
