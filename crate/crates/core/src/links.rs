//! Link functions and their inverses.
//!
//! The inverse link returns a [`Location`], which keeps `ln μ` and, on the unit
//! interval, `ln(1 - μ)` alongside `μ`. Those log forms stay exact in the
//! saturated regions where `μ` itself rounds to a boundary, so densities and the
//! link round trip remain accurate for large `|η|`.

use std::f64::consts::{FRAC_1_PI, PI};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{log1m_exp, log1p_exp, log_expm1, sigmoid};

/// Floor used when a location value has to be materialised as a plain number
/// strictly inside its support (sampling, reporting).
pub const SATURATION_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    UnitInterval,
    PositiveReals,
}

impl Support {
    pub fn contains(self, y: f64) -> bool {
        match self {
            Support::UnitInterval => y > 0.0 && y < 1.0,
            Support::PositiveReals => y > 0.0 && y.is_finite(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkFunction {
    Logit,
    Cauchit,
    Cloglog,
    Log,
    Softplus,
}

/// A response location together with its log and log-complement.
///
/// For positive-support links `ln_complement` is `NaN`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub value: f64,
    pub ln_value: f64,
    pub ln_complement: f64,
}

impl Location {
    /// Builds a location from a plain value, validating it against `support`.
    pub fn from_value(support: Support, value: f64) -> Option<Self> {
        if !support.contains(value) {
            return None;
        }
        let ln_complement = match support {
            Support::UnitInterval => (-value).ln_1p(),
            Support::PositiveReals => f64::NAN,
        };
        Some(Location {
            value,
            ln_value: value.ln(),
            ln_complement,
        })
    }

    /// `1 - μ`, accurate near the upper boundary.
    #[inline]
    pub fn complement(&self) -> f64 {
        self.ln_complement.exp()
    }

    /// The location as a number kept at least [`SATURATION_EPS`] away from
    /// the support boundaries.
    pub fn clamped(&self, support: Support) -> f64 {
        match support {
            Support::UnitInterval => self.value.clamp(SATURATION_EPS, 1.0 - SATURATION_EPS),
            Support::PositiveReals => self.value.max(SATURATION_EPS),
        }
    }
}

pub const ALL_LINKS: [LinkFunction; 5] = [
    LinkFunction::Logit,
    LinkFunction::Cauchit,
    LinkFunction::Cloglog,
    LinkFunction::Log,
    LinkFunction::Softplus,
];

impl LinkFunction {
    pub fn name(self) -> &'static str {
        match self {
            LinkFunction::Logit => "logit",
            LinkFunction::Cauchit => "cauchit",
            LinkFunction::Cloglog => "cloglog",
            LinkFunction::Log => "log",
            LinkFunction::Softplus => "softplus",
        }
    }

    pub fn support(self) -> Support {
        match self {
            LinkFunction::Logit | LinkFunction::Cauchit | LinkFunction::Cloglog => {
                Support::UnitInterval
            }
            LinkFunction::Log | LinkFunction::Softplus => Support::PositiveReals,
        }
    }

    pub fn for_support(support: Support) -> &'static [LinkFunction] {
        match support {
            Support::UnitInterval => &ALL_LINKS[..3],
            Support::PositiveReals => &ALL_LINKS[3..],
        }
    }

    /// Maps a location to the linear-predictor scale.
    pub fn apply_link(self, mu: f64) -> Result<f64> {
        let loc = Location::from_value(self.support(), mu).ok_or(Error::LinkDomain {
            link: self.name(),
            value: mu,
        })?;
        Ok(self.link_location(&loc))
    }

    /// Link applied to a location carrying its log forms.
    pub fn link_location(self, loc: &Location) -> f64 {
        match self {
            LinkFunction::Logit => loc.ln_value - loc.ln_complement,
            LinkFunction::Cauchit => {
                if loc.value > 0.5 {
                    1.0 / (PI * loc.complement()).tan()
                } else {
                    -1.0 / (PI * loc.value).tan()
                }
            }
            // ln(-ln(1 - μ)); for tiny μ, -ln(1-μ) ≈ μ keeps relative accuracy via ln_complement.
            LinkFunction::Cloglog => (-loc.ln_complement).ln(),
            LinkFunction::Log => loc.ln_value,
            LinkFunction::Softplus => {
                if loc.value > 0.0 {
                    log_expm1(loc.value)
                } else {
                    // value underflowed; e^μ - 1 ≈ μ
                    loc.ln_value
                }
            }
        }
    }

    /// The response (inverse link) function.
    pub fn apply_inverse_link(self, eta: f64) -> Result<Location> {
        if !eta.is_finite() {
            return Err(Error::LinkDomain {
                link: self.name(),
                value: eta,
            });
        }
        Ok(self.inverse_unchecked(eta))
    }

    #[inline]
    pub(crate) fn inverse_unchecked(self, eta: f64) -> Location {
        match self {
            LinkFunction::Logit => Location {
                value: sigmoid(eta),
                ln_value: -log1p_exp(-eta),
                ln_complement: -log1p_exp(eta),
            },
            LinkFunction::Cauchit => {
                // 1 - μ = atan(1/η)/π for η > 0, keeping the upper tail accurate
                let (value, complement) = if eta > 0.0 {
                    let c = (1.0 / eta).atan() * FRAC_1_PI;
                    (1.0 - c, c)
                } else if eta < 0.0 {
                    let v = (-1.0 / eta).atan() * FRAC_1_PI;
                    (v, 1.0 - v)
                } else {
                    (0.5, 0.5)
                };
                Location {
                    value,
                    ln_value: value.ln(),
                    ln_complement: complement.ln(),
                }
            }
            LinkFunction::Cloglog => {
                let e = eta.exp();
                // μ = 1 - exp(-e^η)
                let ln_value = if e < 1e-10 {
                    eta + (-0.5 * e).ln_1p()
                } else {
                    log1m_exp(-e)
                };
                Location {
                    value: -(-e).exp_m1(),
                    ln_value,
                    ln_complement: -e,
                }
            }
            LinkFunction::Log => Location {
                value: eta.exp(),
                ln_value: eta,
                ln_complement: f64::NAN,
            },
            LinkFunction::Softplus => {
                let value = log1p_exp(eta);
                let ln_value = if eta < -30.0 {
                    // ln(ln(1 + e^η)) ≈ η - e^η / 2
                    eta - 0.5 * eta.exp()
                } else {
                    value.ln()
                };
                Location {
                    value,
                    ln_value,
                    ln_complement: f64::NAN,
                }
            }
        }
    }

    /// Inverse link and `dμ/dη` in one pass.
    #[inline]
    pub fn inverse_with_derivative(self, eta: f64) -> (Location, f64) {
        let loc = self.inverse_unchecked(eta);
        let d = match self {
            LinkFunction::Logit => (loc.ln_value + loc.ln_complement).exp(),
            LinkFunction::Cauchit => FRAC_1_PI / (1.0 + eta * eta),
            LinkFunction::Cloglog => (eta + loc.ln_complement).exp(),
            LinkFunction::Log => loc.value,
            LinkFunction::Softplus => sigmoid(eta),
        };
        (loc, d)
    }

    /// `ln |d link(y) / dy|`, the Jacobian used by transformed-normal families.
    pub fn log_abs_derivative(self, y: f64) -> f64 {
        match self {
            LinkFunction::Logit => -y.ln() - (-y).ln_1p(),
            LinkFunction::Cauchit => {
                let t = (PI * (y - 0.5)).tan();
                PI.ln() + t.mul_add(t, 1.0).ln()
            }
            LinkFunction::Cloglog => {
                let l1m = (-y).ln_1p();
                -l1m - (-l1m).ln()
            }
            LinkFunction::Log => -y.ln(),
            LinkFunction::Softplus => -log1m_exp(-y),
        }
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LinkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_LINKS
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::config("link", format!("unknown link `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inv(link: LinkFunction, eta: f64) -> f64 {
        link.apply_inverse_link(eta).unwrap().value
    }

    #[test]
    fn forward_examples() {
        assert_eq!(LinkFunction::Logit.apply_link(0.5).unwrap(), 0.0);
        let m = 1.0 - (-1.0f64).exp();
        assert!(LinkFunction::Cloglog.apply_link(m).unwrap().abs() < 1e-15);
        assert!((LinkFunction::Cauchit.apply_link(0.75).unwrap() - 1.0).abs() < 1e-15);
        assert!(LinkFunction::Softplus.apply_link(2f64.ln()).unwrap().abs() < 1e-15);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(inv(LinkFunction::Logit, 0.0), 0.5);
        assert!((inv(LinkFunction::Softplus, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((inv(LinkFunction::Cauchit, 1.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn out_of_support_is_a_domain_error() {
        for (link, bad) in [
            (LinkFunction::Logit, 1.0),
            (LinkFunction::Cauchit, 0.0),
            (LinkFunction::Cloglog, -0.2),
            (LinkFunction::Log, 0.0),
            (LinkFunction::Softplus, -1.0),
        ] {
            let err = link.apply_link(bad).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains(link.name()), "{msg}");
        }
        assert!(LinkFunction::Logit.apply_inverse_link(f64::NAN).is_err());
        assert!(LinkFunction::Log.apply_inverse_link(f64::INFINITY).is_err());
    }

    #[test]
    fn saturation_stays_finite() {
        for link in [LinkFunction::Softplus, LinkFunction::Log] {
            for eta in [-700.0, 700.0] {
                let loc = link.apply_inverse_link(eta).unwrap();
                assert!(loc.ln_value.is_finite(), "{link} {eta}");
                assert!(!loc.value.is_nan());
                let (_, d) = link.inverse_with_derivative(eta);
                assert!(d.is_finite());
            }
        }
        for eta in [-1e8, 1e8] {
            let loc = LinkFunction::Cauchit.apply_inverse_link(eta).unwrap();
            assert!(loc.value > 0.0 && loc.value < 1.0);
            assert!(loc.ln_value.is_finite() && loc.ln_complement.is_finite());
        }
    }

    #[test]
    fn clamping_is_explicit() {
        let loc = LinkFunction::Logit.apply_inverse_link(40.0).unwrap();
        assert_eq!(loc.clamped(Support::UnitInterval), 1.0 - SATURATION_EPS);
        let loc = LinkFunction::Log.apply_inverse_link(-40.0).unwrap();
        assert_eq!(loc.clamped(Support::PositiveReals), SATURATION_EPS);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for link in ALL_LINKS {
            for &eta in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
                let (_, d) = link.inverse_with_derivative(eta);
                let h = 1e-6;
                let fd = (inv(link, eta + h) - inv(link, eta - h)) / (2.0 * h);
                assert!((d - fd).abs() <= 1e-7 * d.abs().max(1e-3), "{link} {eta}");
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_difference() {
        for link in ALL_LINKS {
            let ys: &[f64] = match link.support() {
                Support::UnitInterval => &[0.05, 0.3, 0.5, 0.9],
                Support::PositiveReals => &[0.05, 0.8, 3.0, 20.0],
            };
            for &y in ys {
                let h = 1e-7 * y;
                let fd = (link.apply_link(y + h).unwrap() - link.apply_link(y - h).unwrap())
                    / (2.0 * h);
                assert!(
                    (link.log_abs_derivative(y) - fd.ln()).abs() < 1e-6,
                    "{link} {y}"
                );
            }
        }
    }

    #[test]
    fn names_round_trip_through_serde() {
        for link in ALL_LINKS {
            let s = serde_json::to_string(&link).unwrap();
            assert_eq!(s, format!("\"{}\"", link.name()));
            let back: LinkFunction = serde_json::from_str(&s).unwrap();
            assert_eq!(back, link);
        }
    }

    proptest! {
        #[test]
        fn inverse_is_strictly_increasing(a in -30.0f64..30.0, d in 1e-3f64..5.0) {
            for link in ALL_LINKS {
                let lo = link.apply_inverse_link(a).unwrap();
                let hi = link.apply_inverse_link(a + d).unwrap();
                // compare on the log scale where values saturate in f64
                prop_assert!(hi.ln_value > lo.ln_value || hi.value > lo.value
                    || (link.support() == Support::UnitInterval && hi.ln_complement < lo.ln_complement));
            }
        }

        #[test]
        fn link_of_inverse_recovers_eta(eta in -30.0f64..30.0) {
            for link in ALL_LINKS {
                let loc = link.apply_inverse_link(eta).unwrap();
                prop_assert!((link.link_location(&loc) - eta).abs() <= 1e-12 * eta.abs().max(1.0),
                    "{} {}", link, eta);
            }
        }
    }
}
