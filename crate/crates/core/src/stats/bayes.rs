//! Posterior over condition means for `score ~ Normal(mu_c, sigma)`.
//!
//! Priors: `mu_c ~ Normal(3, 2^2)`, `sigma ~ HalfNormal(2)`. Sampling is
//! random-walk Metropolis-within-Gibbs (one coordinate at a time, `sigma` on
//! the log scale) with step sizes tuned during burn-in and frozen after.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{check_finite, mean, PosteriorContrast, Result, StatsError};

const PRIOR_MU_MEAN: f64 = 3.0;
const PRIOR_MU_SD: f64 = 2.0;
const PRIOR_SIGMA_SCALE: f64 = 2.0;
const TARGET_ACCEPT: f64 = 0.44;
const ADAPT_EVERY: usize = 50;

/// Sampler settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct BayesConfig {
    pub chains: usize,
    /// Retained draws per chain.
    pub draws: usize,
    pub burn_in: usize,
    pub seed: u64,
    /// Largest acceptable split R-hat over all parameters.
    pub rhat_limit: f64,
}

impl Default for BayesConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            draws: 20_000,
            burn_in: 5_000,
            seed: 0,
            rhat_limit: 1.01,
        }
    }
}

/// Merged posterior draws, chains concatenated in chain order.
#[derive(Debug, Clone)]
pub struct BayesFit {
    pub labels: Vec<String>,
    /// `mu[c]` holds the draws of condition `c`'s mean.
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    /// Largest split R-hat across parameters.
    pub max_rhat: f64,
}

struct Suff {
    n: f64,
    xbar: f64,
    /// Sum of squared deviations from `xbar`.
    ss: f64,
}

fn log_post(mu: &[f64], log_sigma: f64, data: &[Suff]) -> f64 {
    let sigma = log_sigma.exp();
    let mut lp = 0.0;
    for (m, d) in mu.iter().zip(data) {
        let dev = d.xbar - m;
        lp += -d.n * log_sigma - (d.ss + d.n * dev * dev) / (2.0 * sigma * sigma);
        let z = (m - PRIOR_MU_MEAN) / PRIOR_MU_SD;
        lp -= 0.5 * z * z;
    }
    // HalfNormal prior on sigma plus the log-scale Jacobian
    lp - sigma * sigma / (2.0 * PRIOR_SIGMA_SCALE * PRIOR_SIGMA_SCALE) + log_sigma
}

/// Draws for one chain: `k` mean traces followed by one log-sigma trace.
fn run_chain(data: &[Suff], init_sd: f64, cfg: &BayesConfig, chain: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);
    let k = data.len();
    let dim = k + 1;

    // overdispersed start around the data
    let mut state: Vec<f64> = data
        .iter()
        .map(|d| d.xbar + 2.0 * init_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    state.push(init_sd.ln() + 0.5 * rng.sample::<f64, _>(StandardNormal));

    let mut steps: Vec<f64> = data
        .iter()
        .map(|d| 2.4 * init_sd / d.n.sqrt())
        .chain(std::iter::once(
            2.4 / (2.0 * data.iter().map(|d| d.n).sum::<f64>()).sqrt(),
        ))
        .collect();
    let mut accepted = vec![0usize; dim];
    let mut current = log_post(&state[..k], state[k], data);
    let mut out = vec![Vec::with_capacity(cfg.draws); dim];

    for it in 0..cfg.burn_in + cfg.draws {
        for p in 0..dim {
            let old = state[p];
            state[p] = old + steps[p] * rng.sample::<f64, _>(StandardNormal);
            let proposed = log_post(&state[..k], state[k], data);
            if rng.gen::<f64>().ln() < proposed - current {
                current = proposed;
                accepted[p] += 1;
            } else {
                state[p] = old;
            }
        }
        if it < cfg.burn_in {
            if (it + 1) % ADAPT_EVERY == 0 {
                for p in 0..dim {
                    let rate = accepted[p] as f64 / ADAPT_EVERY as f64;
                    steps[p] *= ((rate - TARGET_ACCEPT) * 2.0).exp();
                    accepted[p] = 0;
                }
            }
        } else {
            for p in 0..dim {
                out[p].push(state[p]);
            }
        }
    }
    out
}

/// Split R-hat over equal-length chains.
fn split_rhat(chains: &[&[f64]]) -> f64 {
    let half = chains[0].len() / 2;
    if half < 2 {
        return f64::NAN;
    }
    let parts: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[half..2 * half]])
        .collect();
    let m = parts.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let grand = mean(&means);
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = parts
        .iter()
        .zip(&means)
        .map(|(p, pm)| p.iter().map(|x| (x - pm).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w == 0.0 {
        return 1.0;
    }
    let var_plus = (n - 1.0) / n * w + b / n;
    (var_plus / w).sqrt()
}

/// Fits the model and returns merged draws.
///
/// Fails with [`StatsError::NotConverged`] when any parameter's split R-hat
/// reaches `cfg.rhat_limit`.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn bayes_fit<S: AsRef<str>, V: AsRef<[f64]>>(
    scores: &[(S, V)],
    cfg: &BayesConfig,
) -> Result<BayesFit> {
    if scores.len() < 2 {
        return Err(StatsError::InsufficientData(
            "bayesian contrasts need at least 2 conditions".into(),
        ));
    }
    if cfg.chains < 2 || cfg.draws < 4 {
        return Err(StatsError::Domain(
            "need at least 2 chains and 4 draws".into(),
        ));
    }
    let mut data = Vec::with_capacity(scores.len());
    for (name, v) in scores {
        let v = v.as_ref();
        if v.len() < 2 {
            return Err(StatsError::InsufficientData(format!(
                "condition {} has {} observations, need 2",
                name.as_ref(),
                v.len()
            )));
        }
        check_finite(v, name.as_ref())?;
        let xbar = mean(v);
        data.push(Suff {
            n: v.len() as f64,
            xbar,
            ss: v.iter().map(|x| (x - xbar).powi(2)).sum(),
        });
    }
    let total_n: f64 = data.iter().map(|d| d.n).sum();
    let pooled_sd = (data.iter().map(|d| d.ss).sum::<f64>() / (total_n - data.len() as f64))
        .sqrt()
        .max(1e-3);

    let per_chain: Vec<Vec<Vec<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.chains)
            .map(|c| {
                let data = &data;
                s.spawn(move || run_chain(data, pooled_sd, cfg, c))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain panicked"))
            .collect()
    });

    let k = data.len();
    let mut max_rhat: f64 = 1.0;
    for p in 0..=k {
        let traces: Vec<&[f64]> = per_chain.iter().map(|c| c[p].as_slice()).collect();
        let r = split_rhat(&traces);
        if r.is_nan() || r > max_rhat {
            max_rhat = r;
        }
    }
    if !(max_rhat < cfg.rhat_limit) {
        return Err(StatsError::NotConverged {
            rhat: max_rhat,
            limit: cfg.rhat_limit,
        });
    }

    let merge = |p: usize| -> Vec<f64> {
        per_chain
            .iter()
            .flat_map(|c| c[p].iter().copied())
            .collect()
    };
    Ok(BayesFit {
        labels: scores.iter().map(|(n, _)| n.as_ref().to_string()).collect(),
        mu: (0..k).map(merge).collect(),
        sigma: merge(k).into_iter().map(f64::exp).collect(),
        max_rhat,
    })
}

/// Pairwise posterior contrasts `mu_i - mu_j` for `i < j` in input order,
/// labelled `"<i> - <j>"`.
pub fn bayes_contrasts<S: AsRef<str>, V: AsRef<[f64]>>(
    scores: &[(S, V)],
    mass: f64,
    cfg: &BayesConfig,
) -> Result<Vec<PosteriorContrast>> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(StatsError::Domain(format!(
            "mass must be in (0, 1), got {mass}"
        )));
    }
    let fit = bayes_fit(scores, cfg)?;
    let mut out = Vec::new();
    for i in 0..fit.labels.len() {
        for j in i + 1..fit.labels.len() {
            let diff: Vec<f64> = fit.mu[i]
                .iter()
                .zip(&fit.mu[j])
                .map(|(a, b)| a - b)
                .collect();
            let (lo, hi) = hdi(&diff, mass)?;
            let gt = diff.iter().filter(|d| **d > 0.0).count() as f64 / diff.len() as f64;
            out.push(PosteriorContrast {
                label: format!("{} - {}", fit.labels[i], fit.labels[j]),
                mean: mean(&diff),
                hdi_low: lo,
                hdi_high: hi,
                prob_gt_zero: gt,
                mass,
            });
        }
    }
    Ok(out)
}

/// Narrowest interval spanning `ceil(mass * n)` sorted samples.
pub fn hdi(samples: &[f64], mass: f64) -> Result<(f64, f64)> {
    if samples.len() < 100 {
        return Err(StatsError::InsufficientData(format!(
            "hdi needs at least 100 samples, got {}",
            samples.len()
        )));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(StatsError::Domain(format!(
            "mass must be in (0, 1), got {mass}"
        )));
    }
    check_finite(samples, "samples")?;
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let width = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let best = (0..=n - width)
        .min_by(|&a, &b| (s[a + width - 1] - s[a]).total_cmp(&(s[b + width - 1] - s[b])))
        .unwrap_or(0);
    Ok((s[best], s[best + width - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hdi_of_constant() {
        assert_eq!(hdi(&[2.5; 200], 0.95).unwrap(), (2.5, 2.5));
    }

    #[test]
    fn hdi_of_uniform_grid() {
        let s: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let (lo, hi) = hdi(&s, 0.95).unwrap();
        assert!((hi - lo - 0.95).abs() < 0.01);
    }

    #[test]
    fn hdi_rejects_small_input() {
        assert!(hdi(&[1.0; 50], 0.95).is_err());
    }

    #[test]
    fn rhat_of_identical_halves_is_near_one() {
        let c: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 101) as f64).collect();
        let r = split_rhat(&[&c, &c]);
        assert!((r - 1.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn shifted_means_recovered() {
        let a: Vec<f64> = (0..30)
            .map(|i| 4.0 + ((i % 5) as f64 - 2.0) * 0.3)
            .collect();
        let b: Vec<f64> = (0..30)
            .map(|i| 2.0 + ((i % 5) as f64 - 2.0) * 0.3)
            .collect();
        let cfg = BayesConfig {
            draws: 4000,
            burn_in: 1000,
            seed: 7,
            ..Default::default()
        };
        let c = bayes_contrasts(&[("a", &a), ("b", &b)], 0.95, &cfg).unwrap();
        assert_eq!(c[0].label, "a - b");
        assert!((c[0].mean - 2.0).abs() < 0.05);
        assert!(c[0].hdi_low > 0.0 && c[0].prob_gt_zero > 0.999);
    }

    #[test]
    fn reproducible() {
        let a = [1.0, 2.0, 3.0, 2.5];
        let b = [2.0, 3.0, 1.5, 2.2];
        let cfg = BayesConfig {
            draws: 500,
            burn_in: 500,
            seed: 3,
            rhat_limit: 1.2,
            ..Default::default()
        };
        let x = bayes_contrasts(&[("a", &a[..]), ("b", &b[..])], 0.9, &cfg).unwrap();
        let y = bayes_contrasts(&[("a", &a[..]), ("b", &b[..])], 0.9, &cfg).unwrap();
        assert_eq!(x, y);
    }
}
