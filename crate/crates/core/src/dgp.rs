//! Data generation from the full causal DAG
//!
//! ```text
//! z1, z2, z3 ~ normal(0, σ)
//! x  ~ normal(β_z1x z1 + β_z3x z3, σ_x)
//! y  ~ family(link⁻¹(α_y + β_xy x + β_z1y z1 + β_z2y z2), φ)
//! z4 ~ normal(β_xz4 x + β_yz4 y, σ_z4)
//! ```
//!
//! `z1` is a fork, `z2` an ancestor of `y`, `z3` an ancestor of `x` and `z4`
//! a collider. Responses are clamped `1e-6` away from the support boundaries.

use std::fmt;
use std::io::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::{FamilyKind, FamilyParams, FamilySpec, NaturalParams, Shape};
use crate::links::{LinkFunction, Support};
use crate::presets::PresetTable;
use crate::seeds;

/// Distance kept between simulated responses and the support boundaries.
pub const TRUNCATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    DoubleBounded,
    LowerBounded,
}

impl Domain {
    pub fn support(self) -> Support {
        match self {
            Domain::DoubleBounded => Support::UnitInterval,
            Domain::LowerBounded => Support::PositiveReals,
        }
    }

    pub fn families(self) -> &'static [FamilyKind] {
        FamilyKind::for_support(self.support())
    }

    pub fn links(self) -> &'static [LinkFunction] {
        LinkFunction::for_support(self.support())
    }

    pub fn shapes(self) -> &'static [Shape] {
        Shape::for_support(self.support())
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::DoubleBounded => "double_bounded",
            Domain::LowerBounded => "lower_bounded",
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Domain::DoubleBounded => "db",
            Domain::LowerBounded => "lb",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectRegime {
    Zero,
    Positive,
}

impl EffectRegime {
    pub fn name(self) -> &'static str {
        match self {
            EffectRegime::Zero => "zero",
            EffectRegime::Positive => "positive",
        }
    }
}

/// One ground-truth scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub config_id: String,
    pub family: FamilyKind,
    pub link: LinkFunction,
    pub shape: Shape,
    pub regime: EffectRegime,
    pub alpha_y: f64,
    pub phi: f64,
    pub beta_xy: f64,
    pub beta_z1x: f64,
    pub beta_z3x: f64,
    pub beta_z1y: f64,
    pub beta_z2y: f64,
    pub beta_xz4: f64,
    pub beta_yz4: f64,
    pub sigma_z1: f64,
    pub sigma_z2: f64,
    pub sigma_z3: f64,
    pub sigma_x: f64,
    pub sigma_z4: f64,
    pub n_obs: usize,
    pub n_test: usize,
}

impl DgpConfig {
    /// Scenario filled from the preset table.
    pub fn from_table(
        table: &PresetTable,
        family: FamilyKind,
        link: LinkFunction,
        shape: Shape,
        regime: EffectRegime,
    ) -> Result<Self> {
        let domain = match family.support() {
            Support::UnitInterval => Domain::DoubleBounded,
            Support::PositiveReals => Domain::LowerBounded,
        };
        let (alpha_y, phi) = table.shape_preset(family, link, shape)?;
        let c = table.coefficients(domain, link)?;
        let config = DgpConfig {
            config_id: format!(
                "{}-{}-{}-{}-{}",
                domain.tag(),
                family,
                link,
                shape,
                regime.name()
            ),
            family,
            link,
            shape,
            regime,
            alpha_y,
            phi,
            beta_xy: match regime {
                EffectRegime::Zero => 0.0,
                EffectRegime::Positive => c.beta_xy,
            },
            beta_z1x: c.beta_z1x,
            beta_z3x: c.beta_z3x,
            beta_z1y: c.beta_z1y,
            beta_z2y: c.beta_z2y,
            beta_xz4: c.beta_xz4,
            beta_yz4: c.beta_yz4,
            sigma_z1: c.sigma_z1,
            sigma_z2: c.sigma_z2,
            sigma_z3: c.sigma_z3,
            sigma_x: c.sigma_x,
            sigma_z4: c.sigma_z4,
            n_obs: 100,
            n_test: 100,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn domain(&self) -> Domain {
        match self.family.support() {
            Support::UnitInterval => Domain::DoubleBounded,
            Support::PositiveReals => Domain::LowerBounded,
        }
    }

    pub fn family_spec(&self) -> FamilySpec {
        FamilySpec::new(self.family, self.link).expect("validated config")
    }

    pub fn validate(&self) -> Result<()> {
        if self.link.support() != self.family.support() {
            return Err(Error::config(
                "link",
                format!("{} link is not valid for family {}", self.link, self.family),
            ));
        }
        if self.shape.support() != self.family.support() {
            return Err(Error::config(
                "shape",
                format!("shape {} is not valid for family {}", self.shape, self.family),
            ));
        }
        let sigmas = [
            ("sigma_z1", self.sigma_z1),
            ("sigma_z2", self.sigma_z2),
            ("sigma_z3", self.sigma_z3),
            ("sigma_x", self.sigma_x),
            ("sigma_z4", self.sigma_z4),
            ("phi", self.phi),
        ];
        for (name, v) in sigmas {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be positive, got {v}")));
            }
        }
        if self.family == FamilyKind::Frechet && self.phi <= 1.0 {
            return Err(Error::config("phi", "frechet shape must exceed 1"));
        }
        match self.regime {
            EffectRegime::Zero if self.beta_xy != 0.0 => {
                return Err(Error::config("beta_xy", "zero regime requires beta_xy = 0"));
            }
            EffectRegime::Positive if self.beta_xy <= 0.0 => {
                return Err(Error::config("beta_xy", "positive regime requires beta_xy > 0"));
            }
            _ => {}
        }
        if self.n_obs == 0 || self.n_test == 0 {
            return Err(Error::config("n_obs", "sample sizes must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Test,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Test => "test",
        }
    }
}

/// Covariate columns that can enter a linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariate {
    X,
    Z1,
    Z2,
    Z3,
    Z4,
}

impl Covariate {
    pub fn name(self) -> &'static str {
        match self {
            Covariate::X => "x",
            Covariate::Z1 => "z1",
            Covariate::Z2 => "z2",
            Covariate::Z3 => "z3",
            Covariate::Z4 => "z4",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub config_id: String,
    pub seed: u64,
    pub role: Role,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub x: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub z3: Vec<f64>,
    pub z4: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub train: Dataset,
    pub test: Dataset,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn column(&self, c: Covariate) -> &[f64] {
        match c {
            Covariate::X => &self.x,
            Covariate::Z1 => &self.z1,
            Covariate::Z2 => &self.z2,
            Covariate::Z3 => &self.z3,
            Covariate::Z4 => &self.z4,
        }
    }

    /// Leaves out observation `i`.
    pub fn without(&self, i: usize) -> Dataset {
        let drop = |v: &Vec<f64>| {
            v.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &x)| x)
                .collect::<Vec<_>>()
        };
        Dataset {
            meta: DatasetMeta {
                n: self.len() - 1,
                ..self.meta.clone()
            },
            x: drop(&self.x),
            z1: drop(&self.z1),
            z2: drop(&self.z2),
            z3: drop(&self.z3),
            z4: drop(&self.z4),
            y: drop(&self.y),
        }
    }

    /// Only observation `i`.
    pub fn single(&self, i: usize) -> Dataset {
        Dataset {
            meta: DatasetMeta {
                n: 1,
                ..self.meta.clone()
            },
            x: vec![self.x[i]],
            z1: vec![self.z1[i]],
            z2: vec![self.z2[i]],
            z3: vec![self.z3[i]],
            z4: vec![self.z4[i]],
            y: vec![self.y[i]],
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: std::io::Error| Error::io(path, e);
        let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(out, "x,z1,z2,z3,z4,y").map_err(io)?;
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.x[i], self.z1[i], self.z2[i], self.z3[i], self.z4[i], self.y[i]
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)?;
        let meta_path = path.with_extension("meta.json");
        let meta = serde_json::to_string(&self.meta).expect("meta serialises");
        std::fs::write(&meta_path, meta).map_err(|e| Error::io(&meta_path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let meta_path = path.with_extension("meta.json");
        let meta_text =
            std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Parse {
            path: meta_path.clone(),
            line: 1,
            reason: e.to_string(),
        })?;
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            reason: e.to_string(),
        })?;
        let header = reader.headers().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?;
        if header.iter().collect::<Vec<_>>() != ["x", "z1", "z2", "z3", "z4", "y"] {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                reason: "expected header x,z1,z2,z3,z4,y".into(),
            });
        }
        let mut cols: [Vec<f64>; 6] = Default::default();
        for (line, record) in reader.records().enumerate() {
            let parse_err = |reason: String| Error::Parse {
                path: path.to_path_buf(),
                line: line + 2,
                reason,
            };
            let record = record.map_err(|e| parse_err(e.to_string()))?;
            for (col, field) in cols.iter_mut().zip(record.iter()) {
                col.push(field.parse().map_err(|e: std::num::ParseFloatError| {
                    parse_err(e.to_string())
                })?);
            }
        }
        let [x, z1, z2, z3, z4, y] = cols;
        if y.len() != meta.n {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                reason: format!("expected {} rows, found {}", meta.n, y.len()),
            });
        }
        Ok(Dataset {
            meta,
            x,
            z1,
            z2,
            z3,
            z4,
            y,
        })
    }
}

/// Generates the train/test pair for `config`. The two splits use child seeds
/// of `seed` labelled `"train"` and `"test"`.
pub fn generate_dataset(config: &DgpConfig, seed: u64) -> Result<DatasetPair> {
    config.validate()?;
    Ok(DatasetPair {
        train: generate_split(config, Role::Train, seeds::derive(seed, "train"), config.n_obs)?,
        test: generate_split(config, Role::Test, seeds::derive(seed, "test"), config.n_test)?,
    })
}

/// Draws `n` rows in DAG order from a dedicated stream seeded by `seed`.
pub fn generate_split(config: &DgpConfig, role: Role, seed: u64, n: usize) -> Result<Dataset> {
    let mut rng = seeds::rng(seed);
    let spec = config.family_spec();
    let support = spec.support();
    let normal = |rng: &mut seeds::SimRng, mean: f64, sd: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        mean + sd * z
    };
    let mut z1 = Vec::with_capacity(n);
    let mut z2 = Vec::with_capacity(n);
    let mut z3 = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    for _ in 0..n {
        let a = normal(&mut rng, 0.0, config.sigma_z1);
        let b = normal(&mut rng, 0.0, config.sigma_z2);
        let c = normal(&mut rng, 0.0, config.sigma_z3);
        z1.push(a);
        z2.push(b);
        z3.push(c);
        x.push(normal(&mut rng, config.beta_z1x * a + config.beta_z3x * c, config.sigma_x));
    }
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let eta = config.alpha_y
            + config.beta_xy * x[i]
            + config.beta_z1y * z1[i]
            + config.beta_z2y * z2[i];
        let natural = response_distribution(&spec, config.link, eta, config.phi)?;
        let draw = natural.sample(&mut rng);
        if draw.is_nan() {
            return Err(Error::Generation { eta });
        }
        y.push(truncate(support, draw));
    }
    let z4 = (0..n)
        .map(|i| normal(&mut rng, config.beta_xz4 * x[i] + config.beta_yz4 * y[i], config.sigma_z4))
        .collect();
    Ok(Dataset {
        meta: DatasetMeta {
            config_id: config.config_id.clone(),
            seed,
            role,
            n,
        },
        x,
        z1,
        z2,
        z3,
        z4,
        y,
    })
}

/// Response distribution at linear predictor `eta`.
pub fn response_distribution(
    spec: &FamilySpec,
    link: LinkFunction,
    eta: f64,
    phi: f64,
) -> Result<NaturalParams> {
    if !eta.is_finite() {
        return Err(Error::Generation { eta });
    }
    if spec.kind.is_transformed_normal() {
        return Ok(NaturalParams::LatentNormal {
            mean: eta,
            sd: phi,
            link,
        });
    }
    let loc = link.apply_inverse_link(eta)?;
    if !loc.value.is_finite() {
        return Err(Error::Generation { eta });
    }
    let mu = loc.clamped(spec.support());
    spec.to_natural_params(FamilyParams { mu, phi })
        .map_err(|_| Error::Generation { eta })
}

fn truncate(support: Support, y: f64) -> f64 {
    match support {
        Support::UnitInterval => y.clamp(TRUNCATION, 1.0 - TRUNCATION),
        Support::PositiveReals => y.max(TRUNCATION),
    }
}

/// Fully crossed scenario grid for a domain: families × links × shapes × regimes.
pub fn scenario_table(domain: Domain, table: &PresetTable) -> Result<Vec<DgpConfig>> {
    let mut out = Vec::new();
    for &family in domain.families() {
        for &link in domain.links() {
            for &shape in domain.shapes() {
                for regime in [EffectRegime::Zero, EffectRegime::Positive] {
                    out.push(DgpConfig::from_table(table, family, link, shape, regime)?);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_config() -> DgpConfig {
        DgpConfig::from_table(
            &PresetTable::builtin(),
            FamilyKind::Gamma,
            LinkFunction::Log,
            Shape::ThinTail,
            EffectRegime::Positive,
        )
        .unwrap()
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn scenario_grid_sizes() {
        let table = PresetTable::builtin();
        let db = scenario_table(Domain::DoubleBounded, &table).unwrap();
        let lb = scenario_table(Domain::LowerBounded, &table).unwrap();
        assert_eq!(db.len(), 72);
        assert_eq!(lb.len(), 72);
        assert_eq!(db.len() * 200, 14_400);
        let mut ids: Vec<_> = db.iter().chain(lb.iter()).map(|c| c.config_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 144);
    }

    #[test]
    fn independent_columns_when_unlinked() {
        let mut c = gamma_config();
        c.beta_z1x = 0.0;
        c.beta_z3x = 0.0;
        let n = 100_000;
        let d = generate_split(&c, Role::Train, 1, n).unwrap();
        let r = corr(&d.x, &d.z1);
        assert!(r.abs() < 3.0 / (n as f64).sqrt(), "{r}");
    }

    #[test]
    fn fork_correlation_matches_analytic_value() {
        let mut c = gamma_config();
        c.beta_z1x = 1.0;
        c.beta_z3x = 0.0;
        c.sigma_x = 1.0;
        c.sigma_z1 = 1.0;
        let d = generate_split(&c, Role::Train, 3, 100_000).unwrap();
        let r = corr(&d.x, &d.z1);
        assert!((r - 0.5f64.sqrt()).abs() < 0.01, "{r}");
    }

    #[test]
    fn unit_responses_are_truncated() {
        let table = PresetTable::builtin();
        for &link in Domain::DoubleBounded.links() {
            let c = DgpConfig::from_table(
                &table,
                FamilyKind::Beta,
                link,
                Shape::Bathtub,
                EffectRegime::Positive,
            )
            .unwrap();
            let d = generate_split(&c, Role::Train, 9, 20_000).unwrap();
            let lo = d.y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = d.y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo >= 1e-6 && hi <= 1.0 - 1e-6, "{lo} {hi}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let c = gamma_config();
        assert_eq!(generate_dataset(&c, 77).unwrap(), generate_dataset(&c, 77).unwrap());
        let pair = generate_dataset(&c, 77).unwrap();
        assert_ne!(pair.train.y, pair.test.y);
        assert_eq!(pair.train.len(), 100);
        assert_eq!(pair.test.len(), 100);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let pair = generate_dataset(&gamma_config(), 5).unwrap();
        let path = dir.path().join("train.csv");
        pair.train.write_csv(&path).unwrap();
        assert_eq!(Dataset::read_csv(&path).unwrap(), pair.train);
    }

    #[test]
    fn non_finite_predictor_is_a_generation_error() {
        let mut c = gamma_config();
        c.alpha_y = f64::INFINITY;
        match generate_split(&c, Role::Train, 1, 3) {
            Err(Error::Generation { eta }) => assert!(eta.is_infinite()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = gamma_config();
        c.link = LinkFunction::Logit;
        assert!(c.validate().is_err());
        let mut c = gamma_config();
        c.sigma_x = 0.0;
        assert!(c.validate().is_err());
    }
}
