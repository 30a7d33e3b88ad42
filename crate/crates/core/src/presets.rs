//! Versioned table of ground-truth presets: the intercept and auxiliary
//! parameter that give each family its named density shape, and the DAG
//! coefficients used by the data-generating process.
//!
//! The shipped table lives in `presets/default.json`; a replacement can be
//! loaded from disk with [`PresetTable::load`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dgp::Domain;
use crate::error::{Error, Result};
use crate::families::{FamilyKind, FamilyParams, FamilySpec, Shape};
use crate::links::{LinkFunction, Support};
use crate::quadrature::{exp_sinh, tanh_sinh};

pub const PRESET_TABLE_VERSION: u32 = 1;

const BUILTIN: &str = include_str!("../presets/default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapePreset {
    pub family: FamilyKind,
    pub link: LinkFunction,
    pub shape: Shape,
    pub alpha_y: f64,
    pub phi: f64,
}

/// DAG coefficients for one (domain, link) pair. `beta_xy` is the value used
/// in the positive-effect regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSet {
    pub domain: Domain,
    pub link: LinkFunction,
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
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetTable {
    pub version: u32,
    pub shapes: Vec<ShapePreset>,
    pub coefficients: Vec<CoefficientSet>,
}

impl PresetTable {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("shipped preset table parses")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: PresetTable = serde_json::from_str(&text)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        if table.version != PRESET_TABLE_VERSION {
            return Err(Error::config(
                "version",
                format!(
                    "preset table version {} (expected {PRESET_TABLE_VERSION})",
                    table.version
                ),
            ));
        }
        Ok(table)
    }

    /// `(alpha_y, phi)` for a family/link/shape combination.
    pub fn shape_preset(
        &self,
        family: FamilyKind,
        link: LinkFunction,
        shape: Shape,
    ) -> Result<(f64, f64)> {
        if shape.support() != family.support() {
            return Err(Error::config(
                "shape",
                format!("shape {shape} is not available for {family}"),
            ));
        }
        if link.support() != family.support() {
            return Err(Error::config(
                "link",
                format!("{link} link is not valid for {family}"),
            ));
        }
        self.shapes
            .iter()
            .find(|p| p.family == family && p.link == link && p.shape == shape)
            .map(|p| (p.alpha_y, p.phi))
            .ok_or_else(|| {
                Error::config("shape", format!("no preset for {family}/{link}/{shape}"))
            })
    }

    pub fn coefficients(&self, domain: Domain, link: LinkFunction) -> Result<&CoefficientSet> {
        self.coefficients
            .iter()
            .find(|c| c.domain == domain && c.link == link)
            .ok_or_else(|| {
                Error::config(
                    "coefficients",
                    format!("no coefficient set for {domain:?}/{link}"),
                )
            })
    }
}

/// Qualitative features of a density, read off a fine grid and quadrature.
#[derive(Debug, Clone)]
pub struct ShapeSummary {
    /// Grid locations of local maxima (boundary points included).
    pub modes: Vec<f64>,
    pub skewness: f64,
    /// `q(0.99) / q(0.5)`.
    pub tail_ratio: f64,
    pub q99: f64,
}

pub fn summarize_shape(spec: &FamilySpec, params: FamilyParams) -> Result<ShapeSummary> {
    let natural = spec.to_natural_params(params)?;
    let density = |y: f64| natural.log_density(y).exp();
    let support = spec.support();
    let cdf = |x: f64| tanh_sinh(density, 0.0, x, 1e-10);
    let quantile = |p: f64| -> f64 {
        let (mut lo, mut hi) = match support {
            Support::UnitInterval => (0.0, 1.0),
            Support::PositiveReals => {
                let mut hi = params.mu.max(1e-3);
                while cdf(hi) < p {
                    hi *= 2.0;
                }
                (0.0, hi)
            }
        };
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let q50 = quantile(0.5);
    let q99 = quantile(0.99);
    let upper = match support {
        Support::UnitInterval => 1.0,
        Support::PositiveReals => quantile(0.999),
    };
    let grid_n = 4000;
    let grid: Vec<f64> = (1..grid_n).map(|i| upper * i as f64 / grid_n as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&y| natural.log_density(y)).collect();
    let mut modes = Vec::new();
    let last = values.len() - 1;
    for i in 0..=last {
        let left_ok = i == 0 || values[i] > values[i - 1];
        let right_ok = i == last || values[i] > values[i + 1];
        // the upper end of a positive-support grid is not a boundary
        let is_open_end = i == last && support == Support::PositiveReals;
        if left_ok && right_ok && !is_open_end {
            modes.push(grid[i]);
        }
    }
    let moment = |k: i32| match support {
        Support::UnitInterval => tanh_sinh(|y| y.powi(k) * density(y), 0.0, 1.0, 1e-10),
        Support::PositiveReals => exp_sinh(|y| y.powi(k) * density(y), q50, 1e-10),
    };
    let m1 = moment(1);
    let m2 = moment(2);
    let m3 = moment(3);
    let var = m2 - m1 * m1;
    let skewness = (m3 - 3.0 * m1 * var - m1.powi(3)) / var.powf(1.5);
    Ok(ShapeSummary {
        modes,
        skewness,
        tail_ratio: q99 / q50,
        q99,
    })
}

/// Whether a density summary exhibits the named shape.
///
/// * symmetric: one interior mode, `|skewness| <= 0.3`
/// * asymmetric: one interior mode, `|skewness| >= 0.5`
/// * bathtub: modes only within 0.05 of the boundaries, one near each
/// * thin tail: one mode above `0.02 · q99`, `q99/q50 <= 2.5`
/// * heavy tail: one mode above `0.02 · q99`, `q99/q50 >= 3`
/// * ramp: a single mode below `0.02 · q99`
pub fn shape_holds(shape: Shape, summary: &ShapeSummary) -> bool {
    let single = summary.modes.len() == 1;
    let single_interior = single && summary.modes[0] >= 0.02 * summary.q99;
    match shape {
        Shape::Symmetric => single_interior && summary.skewness.abs() <= 0.3,
        Shape::Asymmetric => single_interior && summary.skewness.abs() >= 0.5,
        Shape::Bathtub => {
            summary.modes.iter().all(|&m| !(0.05..=0.95).contains(&m))
                && summary.modes.iter().any(|&m| m < 0.05)
                && summary.modes.iter().any(|&m| m > 0.95)
        }
        Shape::ThinTail => single_interior && summary.tail_ratio <= 2.5,
        Shape::HeavyTail => single_interior && summary.tail_ratio >= 3.0,
        Shape::Ramp => single && summary.modes[0] < 0.02 * summary.q99,
    }
}
