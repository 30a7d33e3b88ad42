//! Rank-normalised split-R̂ and bulk effective sample size.

use crate::special::{mean_var, normal_quantile};

/// Splits every chain into two halves (dropping the middle draw of odd-length chains).
pub fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

/// Replaces every draw by the normal score of its pooled fractional rank,
/// `Φ⁻¹((r − 3/8) / (S + 1/4))`, with average ranks for ties.
pub fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut flat: Vec<(f64, usize)> = chains
        .iter()
        .flatten()
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    flat.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ranks = vec![0.0; total];
    let mut i = 0;
    while i < total {
        let mut j = i;
        while j + 1 < total && flat[j + 1].0 == flat[i].0 {
            j += 1;
        }
        let r = 0.5 * ((i + 1) + (j + 1)) as f64;
        for item in &flat[i..=j] {
            ranks[item.1] = r;
        }
        i = j + 1;
    }
    let s = total as f64;
    let mut out = Vec::with_capacity(chains.len());
    let mut offset = 0;
    for c in chains {
        out.push(
            (0..c.len())
                .map(|k| normal_quantile((ranks[offset + k] - 0.375) / (s + 0.25)))
                .collect(),
        );
        offset += c.len();
    }
    out
}

fn is_degenerate(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().flatten().all(|&v| v == first) || chains.iter().flatten().any(|v| !v.is_finite())
}

/// Classic potential scale reduction on already split chains.
fn rhat_basic(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let stats: Vec<(f64, f64)> = chains
        .iter()
        .map(|c| {
            let (mean, var) = mean_var(c);
            (mean, var * n / (n - 1.0))
        })
        .collect();
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / m;
    let between = n * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let within = stats.iter().map(|s| s.1).sum::<f64>() / m;
    let var_hat = (n - 1.0) / n * within + between / n;
    (var_hat / within).sqrt()
}

/// Rank-normalised split-R̂: the larger of the bulk and folded (tail) values.
/// Degenerate (constant) draws give `NaN`.
pub fn rhat(chains: &[Vec<f64>]) -> f64 {
    assert!(chains.len() >= 2, "R-hat needs at least two chains");
    assert!(chains.iter().all(|c| c.len() >= 4), "R-hat needs four draws per chain");
    if is_degenerate(chains) {
        return f64::NAN;
    }
    let split = split_chains(chains);
    let bulk = rhat_basic(&rank_normalize(&split));
    let mut pooled: Vec<f64> = split.iter().flatten().copied().collect();
    pooled.sort_by(f64::total_cmp);
    let median = crate::special::quantile_sorted(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = split
        .iter()
        .map(|c| c.iter().map(|v| (v - median).abs()).collect())
        .collect();
    let tail = rhat_basic(&rank_normalize(&folded));
    bulk.max(tail)
}

/// Bulk effective sample size of the rank-normalised split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    assert!(chains.len() >= 2, "ESS needs at least two chains");
    assert!(chains.iter().all(|c| c.len() >= 4), "ESS needs four draws per chain");
    if is_degenerate(chains) {
        return f64::NAN;
    }
    ess_raw(&rank_normalize(&split_chains(chains)))
}

/// Autocovariance at `lag` with the `1/n` normaliser.
fn autocov(c: &[f64], mean: f64, lag: usize) -> f64 {
    let n = c.len();
    c[..n - lag]
        .iter()
        .zip(&c[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum::<f64>()
        / n as f64
}

/// Effective sample size from multi-chain autocorrelations, truncated by
/// Geyer's initial positive sequence and made monotone.
pub fn ess_raw(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 3 {
        return f64::NAN;
    }
    let chains: Vec<&[f64]> = chains.iter().map(|c| &c[..n]).collect();
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mean_acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, lag))
            .sum::<f64>()
            / m as f64
    };
    let nf = n as f64;
    let mean_var = mean_acov(0) * nf / (nf - 1.0);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        let grand = means.iter().sum::<f64>() / m as f64;
        var_plus += means.iter().map(|v| (v - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    }
    let rho = |lag: usize| 1.0 - (mean_var - mean_acov(lag)) / var_plus;

    let mut rho_hat = vec![0.0; n];
    let mut t = 0;
    let mut rho_even = 1.0;
    let mut rho_odd = rho(1);
    rho_hat[0] = rho_even;
    rho_hat[1] = rho_odd;
    while t + 5 < n && !(rho_even + rho_odd).is_nan() && rho_even + rho_odd > 0.0 {
        t += 2;
        rho_even = rho(t);
        rho_odd = rho(t + 1);
        if rho_even + rho_odd >= 0.0 {
            rho_hat[t] = rho_even;
            rho_hat[t + 1] = rho_odd;
        }
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho_hat[max_t] = rho_even;
    }
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        let prev = rho_hat[t - 2] + rho_hat[t - 1];
        if rho_hat[t] + rho_hat[t + 1] > prev {
            rho_hat[t] = prev / 2.0;
            rho_hat[t + 1] = prev / 2.0;
        }
    }
    let total = (m * n) as f64;
    let tau = -1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + rho_hat[max_t];
    total / tau.max(1.0 / total.log10())
}
