//! Parameter-recovery and predictive metrics for one fitted model.

use serde::{Deserialize, Serialize};

use crate::dgp::{DgpConfig, Dataset, EffectRegime};
use crate::engine::{Fit, FitDiagnostics, LogLik};
use crate::error::{Error, Result};
use crate::families::{FamilyKind, Shape};
use crate::links::LinkFunction;
use crate::runner::TaskKey;
use crate::special::{log_sum_exp, mean_var, quantile_sorted};

/// Version of the JSONL record layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Pareto shape above which importance sampling is flagged unreliable.
pub const PARETO_K_THRESHOLD: f64 = 0.7;

pub fn bias(draws: &[f64], theta: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Empty("bias of an empty draw vector".into()));
    }
    Ok(draws.iter().sum::<f64>() / draws.len() as f64 - theta)
}

/// `sqrt(mean((draws − θ)²))`.
pub fn rmse(draws: &[f64], theta: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Empty("rmse of an empty draw vector".into()));
    }
    Ok((draws.iter().map(|d| (d - theta).powi(2)).sum::<f64>() / draws.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiDecision {
    pub low: f64,
    pub high: f64,
    pub reject_zero: bool,
}

/// Central credible interval; zero on the closed interval counts as not rejected.
pub fn ci_decision(draws: &[f64], level: f64) -> CiDecision {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    let low = quantile_sorted(&sorted, tail);
    let high = quantile_sorted(&sorted, 1.0 - tail);
    CiDecision {
        low,
        high,
        reject_zero: !(low <= 0.0 && 0.0 <= high),
    }
}

/// `Σ_i ln((1/S) Σ_s p(y_i | θ_s))`. Returns `-inf` when some point has zero
/// density under every draw.
pub fn elpd(ll: &LogLik) -> f64 {
    let ln_s = (ll.draws as f64).ln();
    (0..ll.points)
        .map(|i| log_sum_exp(&ll.point(i)) - ln_s)
        .sum()
}

/// Expected log predictive density of held-out data.
pub fn elpd_test(fit: &Fit, test: &Dataset) -> f64 {
    elpd(&fit.log_lik(test))
}

/// Generalised Pareto fit (Zhang & Stephens posterior mean with a weakly
/// informative prior on the shape). `x` must be sorted ascending and positive.
/// Returns `(k, sigma)`.
pub fn gpdfit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let prior = 3.0;
    let m = 30 + (n as f64).sqrt().floor() as usize;
    let xstar = x[((n as f64) / 4.0 + 0.5).floor() as usize - 1];
    let theta: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x[n - 1] + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / xstar)
        .collect();
    let l_theta: Vec<f64> = theta
        .iter()
        .map(|&t| {
            let a = -t;
            let k = x.iter().map(|&v| (a * v).ln_1p()).sum::<f64>() / n as f64;
            n as f64 * ((a / k).ln() - k - 1.0)
        })
        .collect();
    let lse = log_sum_exp(&l_theta);
    let theta_hat: f64 = theta
        .iter()
        .zip(&l_theta)
        .map(|(t, l)| {
            let w = (l - lse).exp();
            if w.is_finite() {
                t * w
            } else {
                0.0
            }
        })
        .sum();
    let k = x.iter().map(|&v| (-theta_hat * v).ln_1p()).sum::<f64>() / n as f64;
    let sigma = -k / theta_hat;
    let nf = n as f64;
    let k = (k * nf + 0.5 * 10.0) / (nf + 10.0);
    (if k.is_nan() { f64::INFINITY } else { k }, sigma)
}

/// Generalised Pareto quantile function.
pub fn qgpd(p: f64, k: f64, sigma: f64) -> f64 {
    if k == 0.0 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// Pareto-smoothed log weights for one set of log importance ratios,
/// normalised to sum to one. Returns `(log_weights, k_hat)`.
pub fn psis_smooth(log_ratios: &[f64]) -> (Vec<f64>, f64) {
    let (mut lw, k_hat) = psis_smooth_unnormalized(log_ratios);
    let norm = log_sum_exp(&lw);
    lw.iter_mut().for_each(|v| *v -= norm);
    (lw, k_hat)
}

/// Smoothed log weights relative to the largest raw ratio, truncated at 0.
pub fn psis_smooth_unnormalized(log_ratios: &[f64]) -> (Vec<f64>, f64) {
    let s = log_ratios.len();
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut lw: Vec<f64> = log_ratios.iter().map(|r| r - max).collect();
    let tail_len = (0.2 * s as f64).ceil().min((3.0 * (s as f64).sqrt()).ceil()) as usize;
    let mut k_hat = f64::INFINITY;
    if tail_len >= 5 && tail_len < s {
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
        let tail_ids = &order[s - tail_len..];
        let tail: Vec<f64> = tail_ids.iter().map(|&i| lw[i]).collect();
        if (tail[tail_len - 1] - tail[0]).abs() < f64::EPSILON / 100.0 {
            // a constant tail carries no information about the shape
            k_hat = 0.0;
        } else {
            let cutoff = lw[order[s - tail_len - 1]];
            let exp_cutoff = cutoff.exp();
            let excess: Vec<f64> = tail.iter().map(|v| v.exp() - exp_cutoff).collect();
            let (k, sigma) = gpdfit(&excess);
            if k.is_finite() {
                for (j, &idx) in tail_ids.iter().enumerate() {
                    let p = (j as f64 + 0.5) / tail_len as f64;
                    lw[idx] = (qgpd(p, k, sigma) + exp_cutoff).ln();
                }
            }
            k_hat = k;
        }
    }
    for v in lw.iter_mut() {
        if *v > 0.0 {
            *v = 0.0;
        }
    }
    (lw, k_hat)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LooResult {
    pub elpd_loo: f64,
    pub pointwise: Vec<f64>,
    pub pareto_k: Vec<f64>,
}

impl LooResult {
    pub fn k_max(&self) -> f64 {
        self.pareto_k.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// PSIS leave-one-out estimate from a training log-likelihood matrix.
pub fn psis_loo(ll: &LogLik) -> LooResult {
    let mut pointwise = Vec::with_capacity(ll.points);
    let mut pareto_k = Vec::with_capacity(ll.points);
    for i in 0..ll.points {
        let li = ll.point(i);
        if li.iter().any(|v| !v.is_finite()) {
            pointwise.push(f64::NEG_INFINITY);
            pareto_k.push(f64::INFINITY);
            continue;
        }
        let ratios: Vec<f64> = li.iter().map(|v| -v).collect();
        let (lw, k) = psis_smooth(&ratios);
        let terms: Vec<f64> = lw.iter().zip(&li).map(|(w, l)| w + l).collect();
        pointwise.push(log_sum_exp(&terms));
        pareto_k.push(k);
    }
    LooResult {
        elpd_loo: pointwise.iter().sum(),
        pointwise,
        pareto_k,
    }
}

/// `ELPD(m) − max ELPD` over a comparison set. `-inf` entries stay `-inf`.
pub fn delta_elpd(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("delta ELPD of an empty comparison set".into()));
    }
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(values
        .iter()
        .map(|&v| {
            if v == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                v - best
            }
        })
        .collect())
}

/// JSON encoding of floats that may be non-finite: numbers when finite,
/// otherwise the strings `"NaN"`, `"inf"`, `"-inf"`.
pub mod json_float {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(de::Error::custom(format!("invalid float `{other}`"))),
            },
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] f64);
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}

/// Diagnostics as stored in the results file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredDiagnostics {
    #[serde(with = "json_float")]
    pub rhat_beta_xy: f64,
    #[serde(with = "json_float")]
    pub ess_bulk_beta_xy: f64,
    pub divergence_count: usize,
    pub wall_time: f64,
    pub converged: bool,
}

impl From<FitDiagnostics> for StoredDiagnostics {
    fn from(d: FitDiagnostics) -> Self {
        StoredDiagnostics {
            rhat_beta_xy: d.rhat_beta_xy,
            ess_bulk_beta_xy: d.ess_bulk_beta_xy,
            divergence_count: d.divergence_count,
            wall_time: d.wall_time,
            converged: d.converged,
        }
    }
}

impl StoredDiagnostics {
    pub fn failed() -> Self {
        StoredDiagnostics {
            rhat_beta_xy: f64::NAN,
            ess_bulk_beta_xy: f64::NAN,
            divergence_count: 0,
            wall_time: 0.0,
            converged: false,
        }
    }
}

/// Data-generating context carried on every record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub family: FamilyKind,
    pub link: LinkFunction,
    pub shape: Shape,
    pub regime: EffectRegime,
    pub beta_xy: f64,
}

impl From<&DgpConfig> for Truth {
    fn from(c: &DgpConfig) -> Self {
        Truth {
            family: c.family,
            link: c.link,
            shape: c.shape,
            regime: c.regime,
            beta_xy: c.beta_xy,
        }
    }
}

/// One fitted model's metrics, one JSONL line in the results store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    #[serde(flatten)]
    pub key: TaskKey,
    pub truth: Truth,
    #[serde(with = "json_float")]
    pub bias: f64,
    #[serde(with = "json_float")]
    pub abs_bias: f64,
    #[serde(with = "json_float")]
    pub rmse: f64,
    #[serde(with = "json_float")]
    pub beta_xy_mean: f64,
    #[serde(with = "json_float")]
    pub beta_xy_sd: f64,
    #[serde(with = "json_float")]
    pub ci_low: f64,
    #[serde(with = "json_float")]
    pub ci_high: f64,
    pub reject_zero: bool,
    #[serde(with = "json_float")]
    pub elpd_test: f64,
    #[serde(with = "json_float")]
    pub elpd_loo: f64,
    #[serde(with = "json_float")]
    pub pareto_k_max: f64,
    /// Some observation has `k̂ > 0.7`.
    pub pareto_k_warning: bool,
    /// Some test point had zero density under every draw.
    pub non_finite_density: bool,
    #[serde(default, with = "json_float::option", skip_serializing_if = "Option::is_none")]
    pub delta_elpd_loo: Option<f64>,
    #[serde(default, with = "json_float::option", skip_serializing_if = "Option::is_none")]
    pub delta_elpd_test: Option<f64>,
    pub diagnostics: StoredDiagnostics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl MetricRecord {
    /// Record for a task whose fit could not be completed.
    pub fn failed(key: TaskKey, truth: Truth, reason: String) -> Self {
        MetricRecord {
            key,
            truth,
            bias: f64::NAN,
            abs_bias: f64::NAN,
            rmse: f64::NAN,
            beta_xy_mean: f64::NAN,
            beta_xy_sd: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            reject_zero: false,
            elpd_test: f64::NEG_INFINITY,
            elpd_loo: f64::NEG_INFINITY,
            pareto_k_max: f64::NAN,
            pareto_k_warning: false,
            non_finite_density: false,
            delta_elpd_loo: None,
            delta_elpd_test: None,
            diagnostics: StoredDiagnostics::failed(),
            failure: Some(reason),
        }
    }

    pub fn converged(&self) -> bool {
        self.diagnostics.converged
    }

    /// The data-generating link was used for fitting.
    pub fn correct_link(&self) -> bool {
        self.key.link_fit == self.truth.link
    }
}

/// All metrics of a fitted model against its training and test data.
pub fn evaluate(
    fit: &Fit,
    train: &Dataset,
    test: &Dataset,
    key: TaskKey,
    truth: Truth,
) -> Result<MetricRecord> {
    let beta = fit.draws.beta_xy();
    let b = bias(&beta, truth.beta_xy)?;
    let (mean, var) = mean_var(&beta);
    let ci = ci_decision(&beta, 0.95);
    let test_ll = fit.log_lik(test);
    let elpd_test = elpd(&test_ll);
    let loo = psis_loo(&fit.log_lik(train));
    let k_max = loo.k_max();
    Ok(MetricRecord {
        key,
        bias: b,
        abs_bias: b.abs(),
        rmse: rmse(&beta, truth.beta_xy)?,
        beta_xy_mean: mean,
        beta_xy_sd: var.sqrt(),
        ci_low: ci.low,
        ci_high: ci.high,
        reject_zero: ci.reject_zero,
        elpd_test,
        elpd_loo: loo.elpd_loo,
        pareto_k_max: k_max,
        pareto_k_warning: !(k_max <= PARETO_K_THRESHOLD),
        non_finite_density: !elpd_test.is_finite(),
        delta_elpd_loo: None,
        delta_elpd_test: None,
        diagnostics: fit.diagnostics.into(),
        failure: None,
        truth,
    })
}
