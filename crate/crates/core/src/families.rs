//! Likelihood families on the unit interval and on the positive reals.
//!
//! Every family is parameterised by a location `mu` (mean where a closed-form
//! mean exists, otherwise median) and one auxiliary parameter `phi`. The maps
//! to the textbook parameters are:
//!
//! | family | location | phi | native parameters |
//! |---|---|---|---|
//! | beta | mean | precision | `α = μφ`, `β = (1-μ)φ` |
//! | kumaraswamy | median | shape `a` | `a`, `b = -ln2 / ln(1 - mᵃ)` |
//! | simplex | mean | dispersion `σ²` | `(μ, σ²)` |
//! | transformed normal | median | `σ` | `normal(link(m), σ)` on the link scale |
//! | gamma | mean | shape `α` | shape `α`, rate `α/μ` |
//! | weibull | mean | shape `k` | `k`, scale `μ / Γ(1 + 1/k)` |
//! | frechet | mean | shape `ν > 1` | `ν`, scale `μ / Γ(1 - 1/ν)` |
//! | beta prime | mean | precision | `α = μ(1+φ)`, `β = 2 + φ` |
//! | gompertz | median | rate `b` | `η = ln2 / (e^{bm} - 1)`, `b` |

use std::f64::consts::LN_2;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma, InverseGaussian, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::links::{LinkFunction, Location, Support};
use crate::special::{digamma, gamma_fn, ln_gamma, log1m_exp};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Beta,
    Kumaraswamy,
    Simplex,
    TransformedNormalUnit,
    Gamma,
    Weibull,
    Frechet,
    BetaPrime,
    Gompertz,
    TransformedNormalPositive,
}

pub const UNIT_FAMILIES: [FamilyKind; 4] = [
    FamilyKind::Beta,
    FamilyKind::Kumaraswamy,
    FamilyKind::Simplex,
    FamilyKind::TransformedNormalUnit,
];

pub const POSITIVE_FAMILIES: [FamilyKind; 6] = [
    FamilyKind::Gamma,
    FamilyKind::Weibull,
    FamilyKind::Frechet,
    FamilyKind::BetaPrime,
    FamilyKind::Gompertz,
    FamilyKind::TransformedNormalPositive,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationKind {
    Mean,
    Median,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Beta => "beta",
            FamilyKind::Kumaraswamy => "kumaraswamy",
            FamilyKind::Simplex => "simplex",
            FamilyKind::TransformedNormalUnit => "transformed_normal_unit",
            FamilyKind::Gamma => "gamma",
            FamilyKind::Weibull => "weibull",
            FamilyKind::Frechet => "frechet",
            FamilyKind::BetaPrime => "beta_prime",
            FamilyKind::Gompertz => "gompertz",
            FamilyKind::TransformedNormalPositive => "transformed_normal_positive",
        }
    }

    pub fn support(self) -> Support {
        if UNIT_FAMILIES.contains(&self) {
            Support::UnitInterval
        } else {
            Support::PositiveReals
        }
    }

    pub fn for_support(support: Support) -> &'static [FamilyKind] {
        match support {
            Support::UnitInterval => &UNIT_FAMILIES,
            Support::PositiveReals => &POSITIVE_FAMILIES,
        }
    }

    pub fn location_kind(self) -> LocationKind {
        match self {
            FamilyKind::Kumaraswamy
            | FamilyKind::Gompertz
            | FamilyKind::TransformedNormalUnit
            | FamilyKind::TransformedNormalPositive => LocationKind::Median,
            _ => LocationKind::Mean,
        }
    }

    pub fn aux_name(self) -> &'static str {
        match self {
            FamilyKind::Beta | FamilyKind::BetaPrime => "precision",
            FamilyKind::Kumaraswamy | FamilyKind::Gamma | FamilyKind::Weibull | FamilyKind::Frechet => {
                "shape"
            }
            FamilyKind::Simplex => "sigma2",
            FamilyKind::TransformedNormalUnit | FamilyKind::TransformedNormalPositive => "sigma",
            FamilyKind::Gompertz => "rate",
        }
    }

    pub fn is_transformed_normal(self) -> bool {
        matches!(
            self,
            FamilyKind::TransformedNormalUnit | FamilyKind::TransformedNormalPositive
        )
    }

    /// Maps the unconstrained auxiliary coordinate to `phi`; returns `(phi, dphi/du)`.
    #[inline]
    pub fn aux_from_unconstrained(self, u: f64) -> (f64, f64) {
        let e = u.exp();
        match self {
            FamilyKind::Frechet => (1.0 + e, e),
            _ => (e, e),
        }
    }

    pub fn aux_to_unconstrained(self, phi: f64) -> f64 {
        match self {
            FamilyKind::Frechet => (phi - 1.0).ln(),
            _ => phi.ln(),
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        UNIT_FAMILIES
            .iter()
            .chain(POSITIVE_FAMILIES.iter())
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::config("family", format!("unknown family `{s}`")))
    }
}

/// A likelihood family, with the response transformation for the
/// transformed-normal variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    /// Link applied to `y` by the transformed-normal families; `None` otherwise.
    pub transform: Option<LinkFunction>,
}

impl FamilySpec {
    /// Builds the family as used together with `link`. Transformed-normal
    /// families take `link` as their response transformation.
    pub fn new(kind: FamilyKind, link: LinkFunction) -> Result<Self> {
        if kind.support() != link.support() {
            return Err(Error::config(
                "link",
                format!("{link} link is not valid for {kind} (support mismatch)"),
            ));
        }
        Ok(FamilySpec {
            kind,
            transform: kind.is_transformed_normal().then_some(link),
        })
    }

    pub fn support(&self) -> Support {
        self.kind.support()
    }

    pub fn location_kind(&self) -> LocationKind {
        self.kind.location_kind()
    }

    pub fn aux_name(&self) -> &'static str {
        self.kind.aux_name()
    }

    fn transform_link(&self) -> LinkFunction {
        self.transform
            .expect("transformed-normal family constructed without its link")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyParams {
    pub mu: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NaturalParams {
    Beta { alpha: f64, beta: f64 },
    Kumaraswamy { a: f64, b: f64 },
    Simplex { mu: f64, sigma2: f64 },
    LatentNormal { mean: f64, sd: f64, link: LinkFunction },
    Gamma { shape: f64, rate: f64 },
    Weibull { shape: f64, scale: f64 },
    Frechet { shape: f64, scale: f64 },
    BetaPrime { alpha: f64, beta: f64 },
    Gompertz { eta: f64, b: f64 },
}

impl FamilySpec {
    fn validate(&self, params: FamilyParams) -> Result<()> {
        let name = self.kind.name();
        if !self.support().contains(params.mu) {
            return Err(Error::invalid(
                name,
                format!("location {} is not inside the support", params.mu),
            ));
        }
        if !(params.phi > 0.0 && params.phi.is_finite()) {
            return Err(Error::invalid(
                name,
                format!("{} must be positive, got {}", self.aux_name(), params.phi),
            ));
        }
        if self.kind == FamilyKind::Frechet && params.phi <= 1.0 {
            return Err(Error::invalid(
                name,
                format!("mean undefined for shape {} <= 1", params.phi),
            ));
        }
        Ok(())
    }

    pub fn to_natural_params(&self, params: FamilyParams) -> Result<NaturalParams> {
        self.validate(params)?;
        let FamilyParams { mu, phi } = params;
        Ok(match self.kind {
            FamilyKind::Beta => NaturalParams::Beta {
                alpha: mu * phi,
                beta: (1.0 - mu) * phi,
            },
            FamilyKind::Kumaraswamy => NaturalParams::Kumaraswamy {
                a: phi,
                b: -LN_2 / log1m_exp(phi * mu.ln()),
            },
            FamilyKind::Simplex => NaturalParams::Simplex { mu, sigma2: phi },
            FamilyKind::TransformedNormalUnit | FamilyKind::TransformedNormalPositive => {
                let link = self.transform_link();
                NaturalParams::LatentNormal {
                    mean: link.apply_link(mu)?,
                    sd: phi,
                    link,
                }
            }
            FamilyKind::Gamma => NaturalParams::Gamma {
                shape: phi,
                rate: phi / mu,
            },
            FamilyKind::Weibull => NaturalParams::Weibull {
                shape: phi,
                scale: mu / gamma_fn(1.0 + 1.0 / phi),
            },
            FamilyKind::Frechet => NaturalParams::Frechet {
                shape: phi,
                scale: mu / gamma_fn(1.0 - 1.0 / phi),
            },
            FamilyKind::BetaPrime => NaturalParams::BetaPrime {
                alpha: mu * (1.0 + phi),
                beta: 2.0 + phi,
            },
            FamilyKind::Gompertz => NaturalParams::Gompertz {
                eta: LN_2 / (phi * mu).exp_m1(),
                b: phi,
            },
        })
    }

    pub fn log_density(&self, params: FamilyParams, y: f64) -> Result<f64> {
        if !self.support().contains(y) {
            return Err(Error::Support {
                family: self.kind.name(),
                y,
            });
        }
        Ok(self.to_natural_params(params)?.log_density(y))
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        params: FamilyParams,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let natural = self.to_natural_params(params)?;
        Ok((0..count).map(|_| natural.sample(rng)).collect())
    }
}

impl NaturalParams {
    /// Inverse of [`FamilySpec::to_natural_params`].
    pub fn to_family_params(&self) -> FamilyParams {
        match *self {
            NaturalParams::Beta { alpha, beta } => FamilyParams {
                mu: alpha / (alpha + beta),
                phi: alpha + beta,
            },
            NaturalParams::Kumaraswamy { a, b } => FamilyParams {
                mu: (-(-LN_2 / b).exp_m1()).powf(1.0 / a),
                phi: a,
            },
            NaturalParams::Simplex { mu, sigma2 } => FamilyParams { mu, phi: sigma2 },
            NaturalParams::LatentNormal { mean, sd, link } => FamilyParams {
                mu: link.inverse_unchecked(mean).value,
                phi: sd,
            },
            NaturalParams::Gamma { shape, rate } => FamilyParams {
                mu: shape / rate,
                phi: shape,
            },
            NaturalParams::Weibull { shape, scale } => FamilyParams {
                mu: scale * gamma_fn(1.0 + 1.0 / shape),
                phi: shape,
            },
            NaturalParams::Frechet { shape, scale } => FamilyParams {
                mu: scale * gamma_fn(1.0 - 1.0 / shape),
                phi: shape,
            },
            NaturalParams::BetaPrime { alpha, beta } => FamilyParams {
                mu: alpha / (beta - 1.0),
                phi: beta - 2.0,
            },
            NaturalParams::Gompertz { eta, b } => FamilyParams {
                mu: (LN_2 / eta).ln_1p() / b,
                phi: b,
            },
        }
    }

    pub fn log_density(&self, y: f64) -> f64 {
        match *self {
            NaturalParams::Beta { alpha, beta } => {
                ln_gamma(alpha + beta) - ln_gamma(alpha) - ln_gamma(beta)
                    + (alpha - 1.0) * y.ln()
                    + (beta - 1.0) * (-y).ln_1p()
            }
            NaturalParams::Kumaraswamy { a, b } => {
                a.ln() + b.ln() + (a - 1.0) * y.ln() + (b - 1.0) * log1m_exp(a * y.ln())
            }
            NaturalParams::Simplex { mu, sigma2 } => {
                let yy = y * (1.0 - y);
                let g = mu * (1.0 - mu);
                let d = (y - mu).powi(2) / (yy * g * g);
                -LN_SQRT_2PI - 0.5 * sigma2.ln() - 1.5 * yy.ln() - d / (2.0 * sigma2)
            }
            NaturalParams::LatentNormal { mean, sd, link } => {
                let z = (link.apply_link(y).unwrap_or(f64::NAN) - mean) / sd;
                -LN_SQRT_2PI - sd.ln() - 0.5 * z * z + link.log_abs_derivative(y)
            }
            NaturalParams::Gamma { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * y.ln() - rate * y
            }
            NaturalParams::Weibull { shape, scale } => {
                let w = (y / scale).ln();
                shape.ln() - scale.ln() + (shape - 1.0) * w - (shape * w).exp()
            }
            NaturalParams::Frechet { shape, scale } => {
                let w = (y / scale).ln();
                shape.ln() - scale.ln() - (1.0 + shape) * w - (-shape * w).exp()
            }
            NaturalParams::BetaPrime { alpha, beta } => {
                (alpha - 1.0) * y.ln() - (alpha + beta) * y.ln_1p()
                    - (ln_gamma(alpha) + ln_gamma(beta) - ln_gamma(alpha + beta))
            }
            NaturalParams::Gompertz { eta, b } => {
                b.ln() + eta.ln() + b * y - eta * (b * y).exp_m1()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.sample(Open01);
        match *self {
            NaturalParams::Beta { alpha, beta } => {
                // ratio of gammas; tiny shapes handled on the log scale
                let ga = sample_log_gamma(alpha, rng);
                let gb = sample_log_gamma(beta, rng);
                let m = ga.max(gb);
                let (ea, eb) = ((ga - m).exp(), (gb - m).exp());
                ea / (ea + eb)
            }
            NaturalParams::Kumaraswamy { a, b } => {
                // 1 - (1-u)^{1/b} computed as -expm1(ln(u')/b) with u' = 1-u ~ U(0,1)
                (-(u.ln() / b).exp_m1()).powf(1.0 / a)
            }
            NaturalParams::Simplex { mu, sigma2 } => {
                // (1+x) · IG(x; ε, λ) mixture on the odds scale
                let eps = mu / (1.0 - mu);
                let lambda = 1.0 / (sigma2 * (1.0 - mu).powi(2));
                let ig = InverseGaussian::new(eps, lambda).expect("valid inverse Gaussian");
                let mut x = ig.sample(rng);
                if u < mu {
                    let z: f64 = rng.sample(StandardNormal);
                    x += eps * eps / lambda * z * z;
                }
                x / (1.0 + x)
            }
            NaturalParams::LatentNormal { mean, sd, link } => {
                let z: f64 = rng.sample(StandardNormal);
                link.inverse_unchecked(mean + sd * z).value
            }
            NaturalParams::Gamma { shape, rate } => {
                Gamma::new(shape, 1.0 / rate).expect("valid gamma").sample(rng)
            }
            NaturalParams::Weibull { shape, scale } => scale * (-u.ln()).powf(1.0 / shape),
            NaturalParams::Frechet { shape, scale } => scale * (-u.ln()).powf(-1.0 / shape),
            NaturalParams::BetaPrime { alpha, beta } => {
                (sample_log_gamma(alpha, rng) - sample_log_gamma(beta, rng)).exp()
            }
            NaturalParams::Gompertz { eta, b } => (-u.ln() / eta).ln_1p() / b,
        }
    }
}

/// `ln G` for `G ~ Gamma(shape, 1)`, stable for very small shapes.
fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("valid gamma").sample(rng).ln()
    } else {
        // G(a) = G(a+1) · U^{1/a}
        let g = Gamma::new(shape + 1.0, 1.0).expect("valid gamma").sample(rng);
        let u: f64 = rng.sample(Open01);
        g.ln() + u.ln() / shape
    }
}

/// Per-observation quantities that depend only on `y` (and the response
/// transformation), computed once per dataset.
#[derive(Debug, Clone, Copy)]
pub struct ObservationCache {
    pub y: f64,
    pub ln_y: f64,
    /// `ln(1 - y)` on the unit interval, `ln(1 + y)` on the positive reals.
    pub ln_aux: f64,
    /// Transformed response `link(y)` and `ln|link'(y)|` for transformed normals.
    pub latent: f64,
    pub log_jacobian: f64,
}

/// Quantities that depend only on `phi`, computed once per log-density evaluation.
#[derive(Debug, Clone, Copy)]
pub struct AuxCache {
    phi: f64,
    ln_phi: f64,
    a: f64,
    b: f64,
    c: f64,
}

/// Log-density of one observation and its partial derivatives with respect to
/// the linear predictor and to `phi`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointEval {
    pub lp: f64,
    pub d_eta: f64,
    pub d_phi: f64,
}

impl FamilySpec {
    pub fn observation_cache(&self, y: f64) -> ObservationCache {
        let ln_aux = match self.support() {
            Support::UnitInterval => (-y).ln_1p(),
            Support::PositiveReals => y.ln_1p(),
        };
        let (latent, log_jacobian) = match self.transform {
            Some(link) => (
                link.apply_link(y).unwrap_or(f64::NAN),
                link.log_abs_derivative(y),
            ),
            None => (f64::NAN, 0.0),
        };
        ObservationCache {
            y,
            ln_y: y.ln(),
            ln_aux,
            latent,
            log_jacobian,
        }
    }

    pub fn aux_cache(&self, phi: f64) -> AuxCache {
        let (a, b, c) = match self.kind {
            FamilyKind::Beta => (ln_gamma(phi), digamma(phi), 0.0),
            FamilyKind::Gamma => (
                phi * phi.ln() - ln_gamma(phi),
                phi.ln() + 1.0 - digamma(phi),
                0.0,
            ),
            FamilyKind::Weibull => {
                let g = 1.0 + 1.0 / phi;
                (ln_gamma(g), digamma(g) / (phi * phi), 0.0)
            }
            FamilyKind::Frechet => {
                let g = 1.0 - 1.0 / phi;
                (ln_gamma(g), -digamma(g) / (phi * phi), 0.0)
            }
            FamilyKind::BetaPrime => {
                let beta = 2.0 + phi;
                (ln_gamma(beta), digamma(beta), beta)
            }
            _ => (0.0, 0.0, 0.0),
        };
        AuxCache {
            phi,
            ln_phi: phi.ln(),
            a,
            b,
            c,
        }
    }

    /// Pointwise log-likelihood at linear predictor `eta` under `link`, with
    /// derivatives. `aux` must come from [`FamilySpec::aux_cache`] for the same `phi`.
    #[inline]
    pub fn point_eval(
        &self,
        obs: &ObservationCache,
        eta: f64,
        link: LinkFunction,
        aux: &AuxCache,
    ) -> PointEval {
        let phi = aux.phi;
        if self.kind.is_transformed_normal() {
            let r = obs.latent - eta;
            let inv_var = 1.0 / (phi * phi);
            return PointEval {
                lp: -LN_SQRT_2PI - aux.ln_phi - 0.5 * r * r * inv_var + obs.log_jacobian,
                d_eta: r * inv_var,
                d_phi: (r * r * inv_var - 1.0) / phi,
            };
        }
        let (loc, dmu) = link.inverse_with_derivative(eta);
        let (lp, d_mu, d_phi) = self.point_eval_location(obs, &loc, aux);
        PointEval {
            lp,
            d_eta: d_mu * dmu,
            d_phi,
        }
    }

    /// Returns `(lp, ∂lp/∂μ, ∂lp/∂φ)`.
    #[inline]
    fn point_eval_location(
        &self,
        obs: &ObservationCache,
        loc: &Location,
        aux: &AuxCache,
    ) -> (f64, f64, f64) {
        let phi = aux.phi;
        let mu = loc.value;
        let ln_mu = loc.ln_value;
        match self.kind {
            FamilyKind::Beta => {
                let cmu = loc.complement();
                let (a, b) = (mu * phi, cmu * phi);
                let (ln_y, ln_1my) = (obs.ln_y, obs.ln_aux);
                let (psi_a, psi_b) = (digamma(a), digamma(b));
                let lp = aux.a - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * ln_y
                    + (b - 1.0) * ln_1my;
                let d_mu = phi * (psi_b - psi_a + ln_y - ln_1my);
                let d_phi = aux.b - mu * psi_a - cmu * psi_b + mu * ln_y + cmu * ln_1my;
                (lp, d_mu, d_phi)
            }
            FamilyKind::Kumaraswamy => {
                let a = phi;
                let ln_m = ln_mu;
                let m_a = (a * ln_m).exp();
                let l = log1m_exp(a * ln_m);
                let b = -LN_2 / l;
                let ya = (a * obs.ln_y).exp();
                let ln_1m_ya = log1m_exp(a * obs.ln_y);
                let lp = a.ln() + b.ln() + (a - 1.0) * obs.ln_y + (b - 1.0) * ln_1m_ya;
                let dlp_db = 1.0 / b + ln_1m_ya;
                // db/dL = ln2 / L²
                let db_dl = LN_2 / (l * l);
                let one_m_ma = -(a * ln_m).exp_m1();
                let dl_dm = -a * m_a / (mu * one_m_ma);
                let dl_da = -m_a * ln_m / one_m_ma;
                let one_m_ya = -(a * obs.ln_y).exp_m1();
                let dlp_da = 1.0 / a + obs.ln_y - (b - 1.0) * ya * obs.ln_y / one_m_ya;
                (
                    lp,
                    dlp_db * db_dl * dl_dm,
                    dlp_da + dlp_db * db_dl * dl_da,
                )
            }
            FamilyKind::Simplex => {
                let y = obs.y;
                let cmu = loc.complement();
                let yy = y * (1.0 - y);
                let g = mu * cmu;
                let u = y - mu;
                let d = u * u / (yy * g * g);
                let lp = -LN_SQRT_2PI - 0.5 * aux.ln_phi - 1.5 * (obs.ln_y + obs.ln_aux)
                    - d / (2.0 * phi);
                let dd_dmu = -2.0 * u / (yy * g * g) - 2.0 * u * u * (1.0 - 2.0 * mu) / (yy * g * g * g);
                let d_mu = -dd_dmu / (2.0 * phi);
                let d_phi = -0.5 / phi + d / (2.0 * phi * phi);
                (lp, d_mu, d_phi)
            }
            FamilyKind::Gamma => {
                let ratio = (obs.ln_y - ln_mu).exp();
                let lp = aux.a - phi * ln_mu + (phi - 1.0) * obs.ln_y - phi * ratio;
                let d_mu = phi * (ratio - 1.0) / mu;
                let d_phi = aux.b - ln_mu + obs.ln_y - ratio;
                (lp, d_mu, d_phi)
            }
            FamilyKind::Weibull => {
                let k = phi;
                let ln_scale = ln_mu - aux.a;
                let w = obs.ln_y - ln_scale;
                let z = (k * w).exp();
                let lp = aux.ln_phi - ln_scale + (k - 1.0) * w - z;
                let dlp_dln_scale = k * (z - 1.0);
                let d_mu = dlp_dln_scale / mu;
                let d_phi = 1.0 / k + w - z * w + dlp_dln_scale * aux.b;
                (lp, d_mu, d_phi)
            }
            FamilyKind::Frechet => {
                let nu = phi;
                let ln_scale = ln_mu - aux.a;
                let w = obs.ln_y - ln_scale;
                let z = (-nu * w).exp();
                let lp = aux.ln_phi - ln_scale - (1.0 + nu) * w - z;
                let dlp_dln_scale = nu * (1.0 - z);
                let d_mu = dlp_dln_scale / mu;
                let d_phi = 1.0 / nu - w + z * w + dlp_dln_scale * aux.b;
                (lp, d_mu, d_phi)
            }
            FamilyKind::BetaPrime => {
                let beta = aux.c;
                let alpha = mu * (1.0 + phi);
                let ab = alpha + beta;
                let ln_1py = obs.ln_aux;
                let psi_ab = digamma(ab);
                let lp = (alpha - 1.0) * obs.ln_y - ab * ln_1py - ln_gamma(alpha) - aux.a
                    + ln_gamma(ab);
                let d_alpha = obs.ln_y - ln_1py - digamma(alpha) + psi_ab;
                let d_beta = -ln_1py - aux.b + psi_ab;
                (lp, (1.0 + phi) * d_alpha, mu * d_alpha + d_beta)
            }
            FamilyKind::Gompertz => {
                let b = phi;
                let y = obs.y;
                let bm = b * mu;
                let em1 = bm.exp_m1();
                let eta = LN_2 / em1;
                let by_m1 = (b * y).exp_m1();
                let lp = aux.ln_phi + eta.ln() + b * y - eta * by_m1;
                let dlp_deta = 1.0 / eta - by_m1;
                // e^{bm} / (e^{bm} - 1)
                let r = 1.0 / -(-bm).exp_m1();
                let deta_dm = -eta * b * r;
                let deta_db = -eta * mu * r;
                let d_phi = 1.0 / b + y - eta * y * (by_m1 + 1.0) + dlp_deta * deta_db;
                (lp, dlp_deta * deta_dm, d_phi)
            }
            FamilyKind::TransformedNormalUnit | FamilyKind::TransformedNormalPositive => {
                unreachable!("transformed normals are evaluated on the latent scale")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Symmetric,
    Asymmetric,
    Bathtub,
    ThinTail,
    HeavyTail,
    Ramp,
}

pub const UNIT_SHAPES: [Shape; 3] = [Shape::Symmetric, Shape::Asymmetric, Shape::Bathtub];
pub const POSITIVE_SHAPES: [Shape; 3] = [Shape::ThinTail, Shape::HeavyTail, Shape::Ramp];

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Symmetric => "symmetric",
            Shape::Asymmetric => "asymmetric",
            Shape::Bathtub => "bathtub",
            Shape::ThinTail => "thin_tail",
            Shape::HeavyTail => "heavy_tail",
            Shape::Ramp => "ramp",
        }
    }

    pub fn support(self) -> Support {
        if UNIT_SHAPES.contains(&self) {
            Support::UnitInterval
        } else {
            Support::PositiveReals
        }
    }

    pub fn for_support(support: Support) -> &'static [Shape] {
        match support {
            Support::UnitInterval => &UNIT_SHAPES,
            Support::PositiveReals => &POSITIVE_SHAPES,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
