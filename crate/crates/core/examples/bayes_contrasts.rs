//! Posterior mean differences with highest-density intervals.
//!
//! ```text
//! cargo run --example bayes_contrasts
//! ```

use ehk::stats::{bayes_contrasts, BayesConfig};

fn main() -> Result<(), ehk::stats::StatsError> {
    let scores = [
        (
            "success",
            vec![4.2, 4.5, 3.9, 4.8, 4.1, 4.4, 4.6, 4.0, 4.3, 4.7],
        ),
        (
            "control",
            vec![3.1, 3.6, 2.9, 3.4, 3.8, 3.0, 3.5, 3.2, 3.3, 3.7],
        ),
        ("ea", vec![3.9, 4.1, 3.6, 4.4, 3.8, 4.0, 4.2, 3.7, 4.5, 3.9]),
    ];
    let cfg = BayesConfig::default();
    for c in bayes_contrasts(&scores, 0.95, &cfg)? {
        println!(
            "{:<20} mean {:+.3}  95% HDI [{:+.3}, {:+.3}]  P(>0) = {:.3}{}",
            c.label,
            c.mean,
            c.hdi_low,
            c.hdi_high,
            c.prob_gt_zero,
            if c.hdi_excludes_zero() { "  *" } else { "" }
        );
    }
    Ok(())
}
