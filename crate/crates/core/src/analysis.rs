//! Filtering of stored records, per-dataset slopes of recovery metrics on
//! ΔELPD, proportion tables, pooled global slopes and rejection rates.
//!
//! Per-dataset slopes are ordinary least-squares fits within one
//! `(dataset, formula)` comparison group; global slopes pool all groups of a
//! table cell with group-specific intercepts (within-group demeaning).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::dgp::EffectRegime;
use crate::engine::{BiasClass, Formula};
use crate::error::{Error, Result};
use crate::families::Shape;
use crate::links::LinkFunction;
use crate::metrics::{delta_elpd, MetricRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterPolicy {
    pub rhat_max: f64,
    pub ess_min: f64,
    /// Exclusive upper bound on post-warmup divergences.
    pub divergence_max: usize,
    pub delta_elpd_floor: f64,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            rhat_max: 1.01,
            ess_min: 400.0,
            divergence_max: 10,
            delta_elpd_floor: -100.0,
        }
    }
}

impl FilterPolicy {
    pub fn converged(&self, r: &MetricRecord) -> bool {
        let d = &r.diagnostics;
        r.failure.is_none()
            && d.rhat_beta_xy < self.rhat_max
            && d.ess_bulk_beta_xy > self.ess_min
            && d.divergence_count < self.divergence_max
    }

    /// Why a record is dropped, if it is. Non-convergence takes precedence.
    pub fn verdict(&self, r: &MetricRecord) -> Option<DropReason> {
        if !self.converged(r) {
            return Some(DropReason::NonConvergence);
        }
        match r.delta_elpd_loo {
            Some(d) if d > self.delta_elpd_floor => None,
            _ => Some(DropReason::DeltaFloor),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NonConvergence,
    DeltaFloor,
}

impl DropReason {
    pub fn name(self) -> &'static str {
        match self {
            DropReason::NonConvergence => "non_convergence",
            DropReason::DeltaFloor => "delta_floor",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterCounts {
    pub total: usize,
    pub kept: usize,
    pub non_convergence: usize,
    pub delta_floor: usize,
    /// Fits that errored; included in `non_convergence`.
    pub failed_fits: usize,
}

impl FilterCounts {
    pub fn dropped(&self) -> usize {
        self.non_convergence + self.delta_floor
    }

    pub fn drop_share(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.dropped() as f64 / self.total as f64
        }
    }

    fn add(&mut self, r: &MetricRecord, verdict: Option<DropReason>) {
        self.total += 1;
        if r.failure.is_some() {
            self.failed_fits += 1;
        }
        match verdict {
            None => self.kept += 1,
            Some(DropReason::NonConvergence) => self.non_convergence += 1,
            Some(DropReason::DeltaFloor) => self.delta_floor += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterReport {
    pub overall: FilterCounts,
    pub by_scenario: BTreeMap<String, FilterCounts>,
}

/// Fills `delta_elpd_loo` / `delta_elpd_test` within every
/// `(dataset, formula)` comparison group.
pub fn fill_deltas(records: &mut [MetricRecord]) {
    let mut groups: BTreeMap<(String, u32, Formula), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups
            .entry((r.key.config_id.clone(), r.key.replicate, r.key.formula))
            .or_default()
            .push(i);
    }
    for idx in groups.values() {
        let loo: Vec<f64> = idx.iter().map(|&i| records[i].elpd_loo).collect();
        let test: Vec<f64> = idx.iter().map(|&i| records[i].elpd_test).collect();
        let d_loo = delta_elpd(&loo).expect("non-empty group");
        let d_test = delta_elpd(&test).expect("non-empty group");
        for (k, &i) in idx.iter().enumerate() {
            records[i].delta_elpd_loo = Some(d_loo[k]);
            records[i].delta_elpd_test = Some(d_test[k]);
        }
    }
}

/// Partitions records into kept and dropped (with reasons).
pub fn filter_records(
    records: &[MetricRecord],
    policy: &FilterPolicy,
) -> (Vec<MetricRecord>, Vec<(MetricRecord, DropReason)>, FilterReport) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut report = FilterReport::default();
    for r in records {
        let verdict = policy.verdict(r);
        report.overall.add(r, verdict);
        report
            .by_scenario
            .entry(r.key.config_id.clone())
            .or_default()
            .add(r, verdict);
        match verdict {
            None => kept.push(r.clone()),
            Some(reason) => dropped.push((r.clone(), reason)),
        }
    }
    (kept, dropped, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeMetric {
    AbsBias,
    Rmse,
    RejectZero,
}

impl SlopeMetric {
    pub fn name(self) -> &'static str {
        match self {
            SlopeMetric::AbsBias => "abs_bias",
            SlopeMetric::Rmse => "rmse",
            SlopeMetric::RejectZero => "reject_zero",
        }
    }

    /// Only fits with the data-generating link enter bias/RMSE comparisons.
    fn admits(self, r: &MetricRecord) -> bool {
        match self {
            SlopeMetric::AbsBias | SlopeMetric::Rmse => r.correct_link(),
            SlopeMetric::RejectZero => true,
        }
    }

    /// Regression response: log metric for positive metrics, the 0/1
    /// indicator for rejections. `None` excludes the record.
    fn response(self, r: &MetricRecord) -> Option<f64> {
        let v = match self {
            SlopeMetric::AbsBias => r.abs_bias.ln(),
            SlopeMetric::Rmse => r.rmse.ln(),
            SlopeMetric::RejectZero => f64::from(u8::from(r.reject_zero)),
        };
        v.is_finite().then_some(v)
    }

    fn raw(self, r: &MetricRecord) -> f64 {
        match self {
            SlopeMetric::AbsBias => r.abs_bias,
            SlopeMetric::Rmse => r.rmse,
            SlopeMetric::RejectZero => f64::from(u8::from(r.reject_zero)),
        }
    }
}

/// Least-squares slope of one `(dataset, formula)` group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSlope {
    pub config_id: String,
    pub replicate: u32,
    pub formula: Formula,
    pub link: LinkFunction,
    pub shape: Shape,
    pub regime: EffectRegime,
    pub n: usize,
    pub slope: f64,
    /// Centered cross-products, kept for pooling.
    pub sxx: f64,
    pub sxy: f64,
    pub syy: f64,
    /// Untransformed metric values of the group.
    pub values: Vec<f64>,
}

impl GroupSlope {
    pub fn bias_class(&self) -> BiasClass {
        self.formula.bias_class()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeSet {
    pub metric: SlopeMetric,
    pub slopes: Vec<GroupSlope>,
    /// Groups with fewer than [`MIN_GROUP_SIZE`] usable records.
    pub skipped_small: usize,
    /// Groups whose ΔELPD values are all equal.
    pub skipped_zero_variance: usize,
}

pub const MIN_GROUP_SIZE: usize = 3;

/// Slope of the metric on ΔELPD_loo for every `(dataset, formula)` group.
pub fn dataset_slopes(records: &[MetricRecord], metric: SlopeMetric) -> SlopeSet {
    let mut groups: BTreeMap<(String, u32, Formula), Vec<&MetricRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| metric.admits(r)) {
        groups
            .entry((r.key.config_id.clone(), r.key.replicate, r.key.formula))
            .or_default()
            .push(r);
    }
    let mut out = SlopeSet {
        metric,
        slopes: Vec::new(),
        skipped_small: 0,
        skipped_zero_variance: 0,
    };
    for ((config_id, replicate, formula), mut members) in groups {
        // order-independent accumulation
        members.sort_by(|a, b| a.key.cmp(&b.key));
        let points: Vec<(f64, f64, f64)> = members
            .iter()
            .filter_map(|r| {
                let x = r.delta_elpd_loo.filter(|d| d.is_finite())?;
                Some((x, metric.response(r)?, metric.raw(r)))
            })
            .collect();
        if points.len() < MIN_GROUP_SIZE {
            out.skipped_small += 1;
            continue;
        }
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for &(x, y, _) in &points {
            sxx += (x - mx) * (x - mx);
            sxy += (x - mx) * (y - my);
            syy += (y - my) * (y - my);
        }
        let scale = points.iter().map(|p| p.0 * p.0).sum::<f64>().max(1.0);
        if sxx <= 1e-24 * scale {
            out.skipped_zero_variance += 1;
            continue;
        }
        let truth = &members[0].truth;
        out.slopes.push(GroupSlope {
            config_id,
            replicate,
            formula,
            link: truth.link,
            shape: truth.shape,
            regime: truth.regime,
            n: points.len(),
            slope: sxy / sxx,
            sxx,
            sxy,
            syy,
            values: points.iter().map(|p| p.2).collect(),
        });
    }
    out
}

/// Cell of a proportion table. `formula == None` aggregates a whole bias class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SummaryKey {
    pub link: LinkFunction,
    pub shape: Shape,
    pub bias_class: BiasClass,
    pub formula: Option<Formula>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeSummary {
    pub key: SummaryKey,
    pub metric: SlopeMetric,
    pub n_datasets: usize,
    pub proportion_negative: f64,
    pub proportion_positive: f64,
    pub global_slope: f64,
    pub global_se: f64,
    pub floor_ceiling: bool,
}

/// Proportion of negative/positive slopes and pooled slope per table cell.
pub fn aggregate_tables(set: &SlopeSet) -> Vec<SlopeSummary> {
    let mut cells: BTreeMap<SummaryKey, Vec<&GroupSlope>> = BTreeMap::new();
    for s in &set.slopes {
        let class = SummaryKey {
            link: s.link,
            shape: s.shape,
            bias_class: s.bias_class(),
            formula: None,
        };
        cells.entry(class).or_default().push(s);
        cells
            .entry(SummaryKey {
                formula: Some(s.formula),
                ..class
            })
            .or_default()
            .push(s);
    }
    cells
        .into_iter()
        .map(|(key, slopes)| summarize(key, set.metric, &slopes))
        .collect()
}

fn summarize(key: SummaryKey, metric: SlopeMetric, slopes: &[&GroupSlope]) -> SlopeSummary {
    let n = slopes.len();
    let neg = slopes.iter().filter(|s| s.slope < 0.0).count();
    let pos = slopes.iter().filter(|s| s.slope > 0.0).count();
    let sxx: f64 = slopes.iter().map(|s| s.sxx).sum();
    let sxy: f64 = slopes.iter().map(|s| s.sxy).sum();
    let syy: f64 = slopes.iter().map(|s| s.syy).sum();
    let points: usize = slopes.iter().map(|s| s.n).sum();
    let slope = sxy / sxx;
    let df = points as f64 - n as f64 - 1.0;
    let se = if df > 0.0 {
        let rss = (syy - sxy * sxy / sxx).max(0.0);
        (rss / df / sxx).sqrt()
    } else {
        f64::NAN
    };
    let mut values: Vec<f64> = slopes.iter().flat_map(|s| s.values.iter().copied()).collect();
    let floor_ceiling = match metric {
        SlopeMetric::Rmse | SlopeMetric::AbsBias => iqr(&mut values) < 1e-3,
        SlopeMetric::RejectZero => {
            let rate = values.iter().sum::<f64>() / values.len() as f64;
            !(0.05..=0.95).contains(&rate)
        }
    };
    SlopeSummary {
        key,
        metric,
        n_datasets: n,
        proportion_negative: neg as f64 / n as f64,
        proportion_positive: pos as f64 / n as f64,
        global_slope: slope,
        global_se: se,
        floor_ceiling,
    }
}

/// Interquartile range with linear interpolation between order statistics.
fn iqr(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = (values.len() - 1) as f64 * p;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        values[lo] + (h - lo as f64) * (values[hi] - values[lo])
    };
    q(0.75) - q(0.25)
}

/// Rejection-rate cell; `correct_model` marks fits using the data-generating
/// family and link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct RateKey {
    pub regime: EffectRegime,
    pub link: LinkFunction,
    pub shape: Shape,
    pub formula: Formula,
    pub correct_model: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateSummary {
    pub key: RateKey,
    pub n: usize,
    pub rejections: usize,
    /// FPR under the zero regime, TPR under the positive regime.
    pub rate: f64,
    pub se: f64,
}

pub fn rate_summaries(records: &[MetricRecord]) -> Vec<RateSummary> {
    let mut cells: BTreeMap<RateKey, (usize, usize)> = BTreeMap::new();
    for r in records {
        let key = RateKey {
            regime: r.truth.regime,
            link: r.truth.link,
            shape: r.truth.shape,
            formula: r.key.formula,
            correct_model: r.correct_link() && r.key.family_fit == r.truth.family,
        };
        let c = cells.entry(key).or_default();
        c.0 += 1;
        c.1 += usize::from(r.reject_zero);
    }
    cells
        .into_iter()
        .map(|(key, (n, k))| {
            let rate = k as f64 / n as f64;
            RateSummary {
                key,
                n,
                rejections: k,
                rate,
                se: (rate * (1.0 - rate) / n as f64).sqrt(),
            }
        })
        .collect()
}

/// Everything produced from one results store.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Analysis {
    pub policy: FilterPolicy,
    pub filter: FilterReport,
    pub slopes: Vec<SlopeSet>,
    /// RMSE cells (proportion of negative slopes).
    pub table_rmse: Vec<SlopeSummary>,
    /// Rejection cells under a true effect (proportion of positive slopes).
    pub table_tpr: Vec<SlopeSummary>,
    pub global: Vec<SlopeSummary>,
    pub rates: Vec<RateSummary>,
}

/// Full analysis: ΔELPD fill, filtering, slopes, tables and rates.
pub fn analyze(records: &[MetricRecord], policy: &FilterPolicy) -> Result<Analysis> {
    if records.is_empty() {
        return Err(Error::Empty("the results store holds no records".into()));
    }
    let mut records = records.to_vec();
    records.sort_by(|a, b| a.key.cmp(&b.key));
    fill_deltas(&mut records);
    let (kept, _, filter) = filter_records(&records, policy);
    if kept.is_empty() {
        return Err(Error::Empty(format!(
            "no record survives filtering ({} non-converged, {} below the ΔELPD floor)",
            filter.overall.non_convergence, filter.overall.delta_floor
        )));
    }
    let positive: Vec<MetricRecord> = kept
        .iter()
        .filter(|r| r.truth.regime == EffectRegime::Positive)
        .cloned()
        .collect();
    let rmse = dataset_slopes(&kept, SlopeMetric::Rmse);
    let abs_bias = dataset_slopes(&kept, SlopeMetric::AbsBias);
    let tpr = dataset_slopes(&positive, SlopeMetric::RejectZero);
    let table_rmse = aggregate_tables(&rmse);
    let table_tpr = aggregate_tables(&tpr);
    let mut global = aggregate_tables(&abs_bias);
    global.extend(table_rmse.iter().cloned());
    global.extend(table_tpr.iter().cloned());
    Ok(Analysis {
        policy: *policy,
        filter,
        slopes: vec![abs_bias, rmse, tpr],
        table_rmse,
        table_tpr,
        global,
        rates: rate_summaries(&kept),
    })
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NA".into()
    }
}

fn formula_label(f: Option<Formula>) -> &'static str {
    f.map_or("all", Formula::label)
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn table_rows(cells: &[SlopeSummary], proportion: fn(&SlopeSummary) -> f64) -> Vec<Vec<String>> {
    cells
        .iter()
        .map(|c| {
            vec![
                c.key.link.to_string(),
                c.key.shape.to_string(),
                c.key.bias_class.name().into(),
                formula_label(c.key.formula).into(),
                c.n_datasets.to_string(),
                fmt(proportion(c)),
                fmt(c.global_slope),
                fmt(c.global_se),
                c.floor_ceiling.to_string(),
            ]
        })
        .collect()
}

pub const OUTPUT_FILES: [&str; 5] = [
    "tables_3_style.csv",
    "tables_4_style.csv",
    "filter_report.csv",
    "global_slopes.csv",
    "rate_summaries.csv",
];

/// Writes the CSV outputs into `dir`.
pub fn write_outputs(a: &Analysis, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let table_header = [
        "dgp_link",
        "dgp_shape",
        "bias_class",
        "formula",
        "n_datasets",
        "proportion",
        "global_slope",
        "global_se",
        "floor_ceiling",
    ];
    let mut h3 = table_header;
    h3[5] = "proportion_negative_rmse";
    write_csv(
        &dir.join(OUTPUT_FILES[0]),
        &h3,
        table_rows(&a.table_rmse, |c| c.proportion_negative),
    )?;
    let mut h4 = table_header;
    h4[5] = "proportion_positive_tpr";
    write_csv(
        &dir.join(OUTPUT_FILES[1]),
        &h4,
        table_rows(&a.table_tpr, |c| c.proportion_positive),
    )?;

    let filter_row = |name: &str, c: &FilterCounts| {
        vec![
            name.to_string(),
            c.total.to_string(),
            c.kept.to_string(),
            c.non_convergence.to_string(),
            c.delta_floor.to_string(),
            c.failed_fits.to_string(),
            fmt(c.drop_share()),
        ]
    };
    let mut rows: Vec<Vec<String>> = a
        .filter
        .by_scenario
        .iter()
        .map(|(id, c)| filter_row(id, c))
        .collect();
    rows.push(filter_row("all", &a.filter.overall));
    write_csv(
        &dir.join(OUTPUT_FILES[2]),
        &[
            "scenario",
            "total",
            "kept",
            "dropped_non_convergence",
            "dropped_delta_floor",
            "failed_fits",
            "drop_share",
        ],
        rows,
    )?;

    let rows = a
        .global
        .iter()
        .map(|c| {
            vec![
                c.metric.name().into(),
                c.key.link.to_string(),
                c.key.shape.to_string(),
                c.key.bias_class.name().into(),
                formula_label(c.key.formula).into(),
                c.n_datasets.to_string(),
                fmt(c.global_slope),
                fmt(c.global_se),
                fmt(c.proportion_negative),
                fmt(c.proportion_positive),
                c.floor_ceiling.to_string(),
            ]
        })
        .collect();
    write_csv(
        &dir.join(OUTPUT_FILES[3]),
        &[
            "metric",
            "dgp_link",
            "dgp_shape",
            "bias_class",
            "formula",
            "n_datasets",
            "global_slope",
            "global_se",
            "proportion_negative",
            "proportion_positive",
            "floor_ceiling",
        ],
        rows,
    )?;

    let rows = a
        .rates
        .iter()
        .map(|r| {
            vec![
                r.key.regime.name().into(),
                if r.key.regime == EffectRegime::Zero { "fpr" } else { "tpr" }.into(),
                r.key.link.to_string(),
                r.key.shape.to_string(),
                r.key.formula.label().into(),
                r.key.correct_model.to_string(),
                r.n.to_string(),
                r.rejections.to_string(),
                fmt(r.rate),
                fmt(r.se),
            ]
        })
        .collect();
    write_csv(
        &dir.join(OUTPUT_FILES[4]),
        &[
            "regime",
            "rate_kind",
            "dgp_link",
            "dgp_shape",
            "formula",
            "correct_model",
            "n",
            "rejections",
            "rate",
            "se",
        ],
        rows,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::FamilyKind;
    use crate::metrics::{StoredDiagnostics, Truth};
    use crate::runner::TaskKey;

    fn record(rep: u32, family: FamilyKind, formula: Formula, elpd: f64, rmse: f64) -> MetricRecord {
        let key = TaskKey {
            config_id: "lb-gamma-log-thin_tail-positive".into(),
            replicate: rep,
            family_fit: family,
            link_fit: LinkFunction::Log,
            formula,
        };
        let truth = Truth {
            family: FamilyKind::Gamma,
            link: LinkFunction::Log,
            shape: Shape::ThinTail,
            regime: EffectRegime::Positive,
            beta_xy: 0.1,
        };
        let mut r = MetricRecord::failed(key, truth, String::new());
        r.failure = None;
        r.rmse = rmse;
        r.abs_bias = rmse;
        r.elpd_loo = elpd;
        r.elpd_test = elpd;
        r.diagnostics = StoredDiagnostics {
            rhat_beta_xy: 1.0,
            ess_bulk_beta_xy: 1000.0,
            divergence_count: 0,
            wall_time: 0.1,
            converged: true,
        };
        r
    }

    const FAMILIES: [FamilyKind; 4] = [
        FamilyKind::Gamma,
        FamilyKind::Weibull,
        FamilyKind::Frechet,
        FamilyKind::BetaPrime,
    ];

    #[test]
    fn filter_rules() {
        let policy = FilterPolicy::default();
        let mut r = record(0, FamilyKind::Gamma, Formula::Ideal, -10.0, 0.1);
        r.delta_elpd_loo = Some(-1.0);
        assert_eq!(policy.verdict(&r), None);
        r.diagnostics.rhat_beta_xy = 1.02;
        assert_eq!(policy.verdict(&r), Some(DropReason::NonConvergence));
        r.diagnostics.rhat_beta_xy = 1.0;
        r.delta_elpd_loo = Some(-150.0);
        assert_eq!(policy.verdict(&r), Some(DropReason::DeltaFloor));
        r.diagnostics.divergence_count = 10;
        assert_eq!(policy.verdict(&r), Some(DropReason::NonConvergence));
        r.diagnostics.divergence_count = 9;
        r.delta_elpd_loo = Some(f64::NEG_INFINITY);
        assert_eq!(policy.verdict(&r), Some(DropReason::DeltaFloor));
    }

    #[test]
    fn deltas_are_within_comparison_groups() {
        let mut recs = vec![
            record(0, FamilyKind::Gamma, Formula::Ideal, -10.0, 0.1),
            record(0, FamilyKind::Weibull, Formula::Ideal, -12.0, 0.1),
            record(0, FamilyKind::Gamma, Formula::NoZ1, -50.0, 0.1),
            record(1, FamilyKind::Gamma, Formula::Ideal, -30.0, 0.1),
        ];
        fill_deltas(&mut recs);
        let d: Vec<f64> = recs.iter().map(|r| r.delta_elpd_loo.unwrap()).collect();
        assert_eq!(d, vec![0.0, -2.0, 0.0, 0.0]);
    }

    #[test]
    fn recovers_constructed_log_linear_slope() {
        let deltas = [0.0, -1.5, -4.0, -9.0];
        let recs: Vec<MetricRecord> = FAMILIES
            .iter()
            .zip(deltas)
            .map(|(&f, d)| {
                let mut r = record(0, f, Formula::Ideal, d, 0.3 * (0.1 * d).exp());
                r.delta_elpd_loo = Some(d);
                r
            })
            .collect();
        let set = dataset_slopes(&recs, SlopeMetric::Rmse);
        assert_eq!(set.slopes.len(), 1);
        assert!((set.slopes[0].slope - 0.1).abs() < 1e-6);
        // scale invariance
        let scaled: Vec<MetricRecord> = recs
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.rmse *= 17.0;
                r
            })
            .collect();
        let s2 = dataset_slopes(&scaled, SlopeMetric::Rmse);
        assert!((s2.slopes[0].slope - 0.1).abs() < 1e-6);
    }

    #[test]
    fn constant_metric_gives_zero_slope_and_small_groups_skip() {
        let recs: Vec<MetricRecord> = FAMILIES
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let mut r = record(0, f, Formula::Ideal, 0.0, 0.2);
                r.delta_elpd_loo = Some(-(i as f64));
                r
            })
            .collect();
        let set = dataset_slopes(&recs, SlopeMetric::Rmse);
        assert_eq!(set.slopes[0].slope, 0.0);
        let small = dataset_slopes(&recs[..2], SlopeMetric::Rmse);
        assert_eq!((small.slopes.len(), small.skipped_small), (0, 1));
        let flat: Vec<MetricRecord> = recs
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.delta_elpd_loo = Some(-1.0);
                r
            })
            .collect();
        let z = dataset_slopes(&flat, SlopeMetric::Rmse);
        assert_eq!(z.skipped_zero_variance, 1);
    }

    #[test]
    fn wrong_link_is_excluded_from_rmse_only() {
        let mut recs: Vec<MetricRecord> = FAMILIES
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let mut r = record(0, f, Formula::Ideal, 0.0, 0.2 + i as f64);
                r.delta_elpd_loo = Some(-(i as f64));
                r
            })
            .collect();
        for r in recs.iter_mut().skip(2) {
            r.key.link_fit = LinkFunction::Softplus;
        }
        assert_eq!(dataset_slopes(&recs, SlopeMetric::Rmse).skipped_small, 1);
        assert_eq!(dataset_slopes(&recs, SlopeMetric::RejectZero).skipped_small, 0);
    }

    #[test]
    fn analysis_is_order_independent_and_pools() {
        let mut recs = Vec::new();
        for rep in 0..5u32 {
            for (i, &f) in FAMILIES.iter().enumerate() {
                for formula in [Formula::Ideal, Formula::NoZ1] {
                    let d = -(i as f64) * (1.0 + rep as f64 * 0.1);
                    let slope = if formula == Formula::Ideal { -0.2 } else { 0.05 };
                    let noise = ((rep as usize * 7 + i * 3) % 5) as f64 * 0.01;
                    recs.push(record(rep, f, formula, d, (slope * d + noise).exp()));
                }
            }
        }
        let a = analyze(&recs, &FilterPolicy::default()).unwrap();
        recs.reverse();
        let b = analyze(&recs, &FilterPolicy::default()).unwrap();
        assert_eq!(a, b);
        let cell = |class: BiasClass| {
            a.table_rmse
                .iter()
                .find(|c| c.key.bias_class == class && c.key.formula.is_none())
                .unwrap()
                .clone()
        };
        let unbiased = cell(BiasClass::Unbiased);
        assert_eq!(unbiased.n_datasets, 5);
        assert_eq!(unbiased.proportion_negative, 1.0);
        assert!((unbiased.global_slope + 0.2).abs() < 0.02);
        assert!(unbiased.global_se > 0.0);
        assert_eq!(cell(BiasClass::Biased).proportion_positive, 1.0);
        assert_eq!(a.filter.overall.kept, 40);

        let dir = tempfile::tempdir().unwrap();
        write_outputs(&a, dir.path()).unwrap();
        let first: Vec<String> = OUTPUT_FILES
            .iter()
            .map(|f| fs::read_to_string(dir.path().join(f)).unwrap())
            .collect();
        write_outputs(&b, dir.path()).unwrap();
        for (f, text) in OUTPUT_FILES.iter().zip(first) {
            assert_eq!(fs::read_to_string(dir.path().join(f)).unwrap(), text);
        }
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(matches!(analyze(&[], &FilterPolicy::default()), Err(Error::Empty(_))));
        let mut r = record(0, FamilyKind::Gamma, Formula::Ideal, -1.0, 0.1);
        r.diagnostics.rhat_beta_xy = 2.0;
        assert!(matches!(analyze(&[r], &FilterPolicy::default()), Err(Error::Empty(_))));
    }

    #[test]
    fn rates_with_binomial_se() {
        let mut recs: Vec<MetricRecord> = (0..4)
            .map(|rep| record(rep, FamilyKind::Gamma, Formula::Ideal, 0.0, 0.1))
            .collect();
        recs[0].reject_zero = true;
        let rates = rate_summaries(&recs);
        assert_eq!(rates.len(), 1);
        assert!(rates[0].key.correct_model);
        assert_eq!(rates[0].rate, 0.25);
        assert!((rates[0].se - (0.25f64 * 0.75 / 4.0).sqrt()).abs() < 1e-15);
        for r in recs.iter_mut() {
            r.reject_zero = true;
        }
        assert_eq!(rate_summaries(&recs)[0].rate, 1.0);
    }
}
