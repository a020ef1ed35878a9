//! The frequentist tests on small made-up data sets.
//!
//! ```text
//! cargo run --example stats_battery
//! ```

use ehk::stats::{
    ancova, binomial_two_tailed, friedman, mann_whitney_u, one_way_anova, paired_t, tukey_hsd,
};

fn main() -> Result<(), ehk::stats::StatsError> {
    let groups = [
        ("flash", vec![0.86, 0.84, 0.88, 0.87, 0.85, 0.86]),
        ("pro", vec![0.85, 0.83, 0.86, 0.84, 0.86, 0.85]),
        ("baseline", vec![0.74, 0.76, 0.73, 0.75, 0.77, 0.74]),
    ];
    let a = one_way_anova(&groups)?;
    println!(
        "anova F({}, {}) = {:.3}, p = {:.3e}",
        a.df[0], a.df[1], a.statistic, a.p_value
    );
    for t in tukey_hsd(&groups, 0.05)? {
        println!(
            "  {} - {}: diff {:+.3}, p_adj {:.4}",
            t.group_a, t.group_b, t.mean_diff, t.p_adj
        );
    }

    let t = paired_t(&groups[0].1, &groups[2].1)?;
    println!(
        "paired t({}) = {:.3}, p = {:.3e}",
        t.df[0], t.statistic, t.p_value
    );

    let u = mann_whitney_u(&[0.91, 0.88, 0.93, 0.86, 0.90], &[0.81, 0.84, 0.87, 0.80])?;
    println!("Mann-Whitney U = {}, p = {:.4}", u.statistic, u.p_value);

    let ratings = [
        vec![5.0, 3.0, 4.0],
        vec![6.0, 4.0, 6.0],
        vec![5.0, 2.0, 5.0],
        vec![7.0, 5.0, 6.0],
        vec![6.0, 3.0, 4.0],
    ];
    let f = friedman(&ratings)?;
    println!(
        "Friedman chi2({}) = {:.3}, p = {:.4}",
        f.df[0], f.statistic, f.p_value
    );

    let post = [3.1, 3.4, 2.9, 3.8, 4.0, 3.6, 4.4, 4.1, 4.6];
    let group = [
        "success", "success", "success", "control", "control", "control", "ea", "ea", "ea",
    ];
    let pre = [3.0, 3.2, 2.8, 3.1, 3.3, 2.9, 3.2, 3.0, 3.4];
    let c = ancova(&post, &group, &pre)?;
    println!(
        "ANCOVA F({}, {}) = {:.3}, p = {:.4}",
        c.df[0], c.df[1], c.statistic, c.p_value
    );

    println!(
        "binomial 31 of 40: p = {:.3e}",
        binomial_two_tailed(31, 40, 0.5)?
    );
    Ok(())
}
