//! Bayesian GLM fitting with flat priors.

mod diagnostics;
mod hmc;
mod mode;
mod model;

use std::fmt;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use diagnostics::{ess_bulk, ess_raw, rank_normalize, rhat, split_chains};
pub use hmc::{ChainOutput, HmcSettings, Sampler};
pub use mode::maximize;
pub use model::GlmModel;

use crate::dgp::{Covariate, Dataset};
use crate::error::{Error, Result};
use crate::families::FamilySpec;
use crate::links::LinkFunction;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    Ideal,
    NoZ1,
    NoZ2,
    PlusZ3,
    PlusZ4,
}

pub const ALL_FORMULAS: [Formula; 5] = [
    Formula::Ideal,
    Formula::NoZ1,
    Formula::NoZ2,
    Formula::PlusZ3,
    Formula::PlusZ4,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasClass {
    Unbiased,
    Biased,
}

impl BiasClass {
    pub fn name(self) -> &'static str {
        match self {
            BiasClass::Unbiased => "unbiased",
            BiasClass::Biased => "biased",
        }
    }
}

impl Formula {
    /// Right-hand side covariates; `x` always comes first.
    pub fn covariates(self) -> &'static [Covariate] {
        use Covariate::*;
        match self {
            Formula::Ideal => &[X, Z1, Z2],
            Formula::NoZ1 => &[X, Z2],
            Formula::NoZ2 => &[X, Z1],
            Formula::PlusZ3 => &[X, Z1, Z2, Z3],
            Formula::PlusZ4 => &[X, Z1, Z2, Z4],
        }
    }

    pub fn bias_class(self) -> BiasClass {
        match self {
            Formula::Ideal | Formula::NoZ2 | Formula::PlusZ3 => BiasClass::Unbiased,
            Formula::NoZ1 | Formula::PlusZ4 => BiasClass::Biased,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Formula::Ideal => "ideal",
            Formula::NoZ1 => "no_z1",
            Formula::NoZ2 => "no_z2",
            Formula::PlusZ3 => "plus_z3",
            Formula::PlusZ4 => "plus_z4",
        }
    }

    /// Parameter names in draw-column order.
    pub fn parameter_names(self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        names.extend(self.covariates().iter().map(|c| format!("b_{}", c.name())));
        names.push("phi".to_string());
        names
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_FORMULAS
            .iter()
            .copied()
            .find(|f| f.label() == s)
            .ok_or_else(|| Error::config("formula", format!("unknown formula `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub chains: usize,
    pub hmc: HmcSettings,
    /// Half-width of the uniform initialisation box on the unconstrained scale.
    pub init_radius: f64,
    pub init_attempts: usize,
}

impl Default for FitSettings {
    fn default() -> Self {
        FitSettings {
            chains: 2,
            hmc: HmcSettings::default(),
            init_radius: 0.1,
            init_attempts: 100,
        }
    }
}

/// Posterior draws on the constrained scale, row-major `S × P` with chains
/// stacked in order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub names: Vec<String>,
    pub chains: usize,
    pub per_chain: usize,
    pub values: Vec<f64>,
}

impl PosteriorDraws {
    pub fn n_draws(&self) -> usize {
        self.chains * self.per_chain
    }

    pub fn n_params(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        let p = self.n_params();
        &self.values[s * p..(s + 1) * p]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_draws()).map(|s| self.row(s)[j]).collect()
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        self.names.iter().position(|n| n == name).map(|j| self.column(j))
    }

    /// Column `j` split by chain.
    pub fn chain_columns(&self, j: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| {
                (0..self.per_chain)
                    .map(|i| self.row(c * self.per_chain + i)[j])
                    .collect()
            })
            .collect()
    }

    /// Draws of the slope on `x`.
    pub fn beta_xy(&self) -> Vec<f64> {
        self.column(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub rhat_beta_xy: f64,
    pub ess_bulk_beta_xy: f64,
    pub divergence_count: usize,
    pub wall_time: f64,
    pub converged: bool,
}

impl FitDiagnostics {
    pub fn is_converged(rhat: f64, ess: f64, divergences: usize) -> bool {
        rhat < 1.01 && ess > 400.0 && divergences < 10
    }
}

/// A fitted model: draws plus what is needed to evaluate its likelihood.
#[derive(Debug, Clone)]
pub struct Fit {
    pub spec: FamilySpec,
    pub link: LinkFunction,
    pub formula: Formula,
    pub draws: PosteriorDraws,
    pub diagnostics: FitDiagnostics,
}

/// Pointwise log-likelihood matrix, row-major `S × N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLik {
    pub draws: usize,
    pub points: usize,
    pub values: Vec<f64>,
}

impl LogLik {
    pub fn get(&self, s: usize, i: usize) -> f64 {
        self.values[s * self.points + i]
    }

    /// Log-likelihoods of observation `i` across draws.
    pub fn point(&self, i: usize) -> Vec<f64> {
        (0..self.draws).map(|s| self.get(s, i)).collect()
    }
}

impl Fit {
    /// `ln p(y_i | θ^{(s)})` for every draw and every row of `data`.
    pub fn log_lik(&self, data: &Dataset) -> LogLik {
        log_lik_matrix(self.spec, self.link, self.formula, &self.draws, data)
    }
}

pub fn log_lik_matrix(
    spec: FamilySpec,
    link: LinkFunction,
    formula: Formula,
    draws: &PosteriorDraws,
    data: &Dataset,
) -> LogLik {
    let covariates = formula.covariates();
    let cols: Vec<&[f64]> = covariates.iter().map(|&c| data.column(c)).collect();
    let obs: Vec<_> = data.y.iter().map(|&y| spec.observation_cache(y)).collect();
    let k = covariates.len();
    let n = data.len();
    let mut values = Vec::with_capacity(draws.n_draws() * n);
    for s in 0..draws.n_draws() {
        let row = draws.row(s);
        let aux = spec.aux_cache(row[k + 1]);
        for i in 0..n {
            let mut eta = row[0];
            for j in 0..k {
                eta += row[1 + j] * cols[j][i];
            }
            let lp = spec.point_eval(&obs[i], eta, link, &aux).lp;
            values.push(if lp.is_nan() { f64::NEG_INFINITY } else { lp });
        }
    }
    LogLik {
        draws: draws.n_draws(),
        points: n,
        values,
    }
}

fn check_support(data: &Dataset, spec: FamilySpec) -> Result<()> {
    match data.y.iter().find(|&&y| !spec.support().contains(y)) {
        Some(&y) => Err(Error::Support {
            family: spec.kind.name(),
            y,
        }),
        None => Ok(()),
    }
}

/// Draws an initial point with a finite log density.
fn initial_point<R: Rng + ?Sized>(model: &GlmModel, settings: &FitSettings, rng: &mut R) -> Result<Vec<f64>> {
    let r = settings.init_radius;
    for _ in 0..settings.init_attempts {
        let theta: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-r..=r)).collect();
        if model.log_density(&theta).is_finite() {
            return Ok(theta);
        }
    }
    Err(Error::Fit(format!(
        "no finite log density after {} initialisation attempts",
        settings.init_attempts
    )))
}

/// Samples the flat-prior posterior of a GLM. Chain `c` uses the stream
/// derived from `sampler_seed` and index `c`.
pub fn fit(
    data: &Dataset,
    spec: FamilySpec,
    link: LinkFunction,
    formula: Formula,
    sampler_seed: u64,
    settings: &FitSettings,
) -> Result<Fit> {
    let start = Instant::now();
    check_support(data, spec)?;
    let model = GlmModel::new(data, spec, link, formula);
    let logp = |q: &[f64], g: &mut [f64]| model.log_density_grad(q, g);
    let names = formula.parameter_names();
    let p = names.len();
    let mut values = Vec::with_capacity(settings.chains * settings.hmc.kept * p);
    let mut divergences = 0;
    for c in 0..settings.chains {
        let mut rng = seeds::rng(seeds::derive_index(sampler_seed, c as u64));
        let init = initial_point(&model, settings, &mut rng)?;
        let out = Sampler::new(&logp, model.dim(), settings.hmc).run(init, &mut rng);
        divergences += out.divergences;
        for q in &out.draws {
            values.extend(model.constrain(q));
        }
    }
    let draws = PosteriorDraws {
        names,
        chains: settings.chains,
        per_chain: settings.hmc.kept,
        values,
    };
    let (rhat_b, ess_b) = if settings.chains >= 2 && settings.hmc.kept >= 4 {
        let cols = draws.chain_columns(1);
        (rhat(&cols), ess_bulk(&cols))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Fit {
        spec,
        link,
        formula,
        diagnostics: FitDiagnostics {
            rhat_beta_xy: rhat_b,
            ess_bulk_beta_xy: ess_b,
            divergence_count: divergences,
            wall_time: start.elapsed().as_secs_f64(),
            converged: FitDiagnostics::is_converged(rhat_b, ess_b, divergences),
        },
        draws,
    })
}

/// Posterior mode (= maximum likelihood under flat priors) as
/// `[α, β_1, …, β_k, u]` with `u` the unconstrained auxiliary coordinate.
pub fn find_mode(
    data: &Dataset,
    spec: FamilySpec,
    link: LinkFunction,
    formula: Formula,
) -> Result<Vec<f64>> {
    check_support(data, spec)?;
    let model = GlmModel::new(data, spec, link, formula);
    let mut start = vec![0.0; model.dim()];
    start[0] = if spec.kind.is_transformed_normal() {
        data.y.iter().map(|&y| link.apply_link(y).unwrap_or(0.0)).sum::<f64>() / data.len() as f64
    } else {
        let mean = data.y.iter().sum::<f64>() / data.len() as f64;
        link.apply_link(mean).unwrap_or(0.0)
    };
    let theta = maximize(|q: &[f64], g: &mut [f64]| model.log_density_grad(q, g), &start)?;
    let mut out = model.constrain(&theta);
    let k = model.n_slopes();
    out[k + 1] = theta[k + 1];
    Ok(out)
}
