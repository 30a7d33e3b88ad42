use crate::dgp::Dataset;
use crate::families::{FamilySpec, ObservationCache};
use crate::links::LinkFunction;

use super::Formula;

/// Unnormalised log posterior of a GLM under flat priors on the intercept,
/// slopes and the unconstrained auxiliary coordinate.
///
/// Covariates are centred internally; the sampling coordinates are
/// `[α_c, β_1, …, β_k, u]` with `α_c` the intercept at the covariate means
/// and `u` the unconstrained auxiliary parameter.
#[derive(Debug, Clone)]
pub struct GlmModel {
    pub spec: FamilySpec,
    pub link: LinkFunction,
    obs: Vec<ObservationCache>,
    /// Column-major centred design, `k × n`.
    design: Vec<f64>,
    means: Vec<f64>,
    n: usize,
    k: usize,
}

impl GlmModel {
    pub fn new(data: &Dataset, spec: FamilySpec, link: LinkFunction, formula: Formula) -> Self {
        let n = data.len();
        let covariates = formula.covariates();
        let k = covariates.len();
        let mut design = Vec::with_capacity(n * k);
        let mut means = Vec::with_capacity(k);
        for &c in covariates {
            let col = data.column(c);
            let m = col.iter().sum::<f64>() / n as f64;
            means.push(m);
            design.extend(col.iter().map(|v| v - m));
        }
        GlmModel {
            spec,
            link,
            obs: data.y.iter().map(|&y| spec.observation_cache(y)).collect(),
            design,
            means,
            n,
            k,
        }
    }

    /// Number of sampling coordinates.
    pub fn dim(&self) -> usize {
        self.k + 2
    }

    pub fn n_slopes(&self) -> usize {
        self.k
    }

    /// Log density and its gradient at `theta`. Non-finite values are
    /// reported as `-inf`.
    pub fn log_density_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.k;
        let (phi, dphi_du) = self.spec.kind.aux_from_unconstrained(theta[k + 1]);
        grad.iter_mut().for_each(|g| *g = 0.0);
        if !(phi > 0.0 && phi.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let aux = self.spec.aux_cache(phi);
        let mut lp = 0.0;
        let mut g_phi = 0.0;
        for (i, obs) in self.obs.iter().enumerate() {
            let mut eta = theta[0];
            for j in 0..k {
                eta += theta[1 + j] * self.design[j * self.n + i];
            }
            let pe = self.spec.point_eval(obs, eta, self.link, &aux);
            lp += pe.lp;
            grad[0] += pe.d_eta;
            for j in 0..k {
                grad[1 + j] += pe.d_eta * self.design[j * self.n + i];
            }
            g_phi += pe.d_phi;
        }
        grad[k + 1] = g_phi * dphi_du;
        if lp.is_finite() && grad.iter().all(|g| g.is_finite()) {
            lp
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.log_density_grad(theta, &mut g)
    }

    /// Maps sampling coordinates to `[α, β_1, …, β_k, φ]` on the original
    /// covariate scale.
    pub fn constrain(&self, theta: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut out = Vec::with_capacity(k + 2);
        let shift: f64 = (0..k).map(|j| theta[1 + j] * self.means[j]).sum();
        out.push(theta[0] - shift);
        out.extend_from_slice(&theta[1..=k]);
        out.push(self.spec.kind.aux_from_unconstrained(theta[k + 1]).0);
        out
    }

    /// Inverse of [`GlmModel::constrain`].
    pub fn unconstrain(&self, params: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut out = Vec::with_capacity(k + 2);
        let shift: f64 = (0..k).map(|j| params[1 + j] * self.means[j]).sum();
        out.push(params[0] + shift);
        out.extend_from_slice(&params[1..=k]);
        out.push(self.spec.kind.aux_to_unconstrained(params[k + 1]));
        out
    }
}
