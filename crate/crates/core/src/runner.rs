//! Simulation plans, the resumable results store and the task executor.
//!
//! Store layout under the results root:
//!
//! ```text
//! manifest.json                  run manifest (plan, seeds, versions, timestamps)
//! tasks.jsonl                    every TaskKey of the plan, one per line
//! datasets/<config_id>/rNNNN-train.csv (+ .meta.json), rNNNN-test.csv (+ .meta.json)
//! results.jsonl                  schema header line, then one MetricRecord per line
//! ```
//!
//! Seeds: the dataset seed of `(config_id, replicate)` is
//! `derive_index(derive(master_seed, config_id), replicate)`; train and test
//! use `derive(dataset_seed, "train" | "test")`; the sampler seed of a task is
//! `derive(dataset_seed, "fit/<family>/<link>/<formula>")`. See [`crate::seeds`].

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::dgp::{generate_dataset, Dataset, DatasetPair, DgpConfig, Domain, EffectRegime};
use crate::engine::{fit, FitSettings, Formula, HmcSettings, ALL_FORMULAS};
use crate::error::{Error, Result};
use crate::families::{FamilyKind, FamilySpec, Shape};
use crate::links::LinkFunction;
use crate::metrics::{evaluate, MetricRecord, Truth, SCHEMA_VERSION};
use crate::par::{self, Execution};
use crate::presets::PresetTable;
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Paper,
    Desk,
    Smoke,
}

impl Scale {
    pub fn default_replicates(self) -> u32 {
        match self {
            Scale::Paper => 200,
            Scale::Desk => 50,
            Scale::Smoke => 2,
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Scale::Paper),
            "desk" => Ok(Scale::Desk),
            "smoke" => Ok(Scale::Smoke),
            _ => Err(Error::config("scale", format!("unknown scale `{s}`"))),
        }
    }
}

/// Unique identity of one fitted model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskKey {
    pub config_id: String,
    pub replicate: u32,
    pub family_fit: FamilyKind,
    pub link_fit: LinkFunction,
    pub formula: Formula,
}

/// One entry of the fit grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FitSpec {
    pub family: FamilyKind,
    pub link: LinkFunction,
    pub formula: Formula,
}

/// Sampler dimensions stored with the plan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub kept: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 2,
            warmup: 500,
            kept: 2000,
        }
    }
}

impl SamplerConfig {
    pub fn settings(&self) -> FitSettings {
        FitSettings {
            chains: self.chains,
            hmc: HmcSettings {
                warmup: self.warmup,
                kept: self.kept,
                ..HmcSettings::default()
            },
            ..FitSettings::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    pub domain: Domain,
    pub scale: Scale,
    pub dgp_configs: Vec<DgpConfig>,
    pub replicates: u32,
    pub fit_grid: Vec<FitSpec>,
    pub master_seed: u64,
    pub sampler: SamplerConfig,
}

/// Full fit grid of a domain: families × links × formulas.
pub fn fit_grid(domain: Domain) -> Vec<FitSpec> {
    let mut grid = Vec::new();
    for &family in domain.families() {
        for &link in domain.links() {
            for formula in ALL_FORMULAS {
                grid.push(FitSpec {
                    family,
                    link,
                    formula,
                });
            }
        }
    }
    grid
}

/// Scenario used at smoke scale.
pub fn smoke_scenario(domain: Domain) -> (FamilyKind, LinkFunction, Shape) {
    match domain {
        Domain::DoubleBounded => (FamilyKind::Beta, LinkFunction::Logit, Shape::Symmetric),
        Domain::LowerBounded => (FamilyKind::Gamma, LinkFunction::Log, Shape::ThinTail),
    }
}

/// Default desk-scale scenarios (positive effect regime).
pub fn desk_scenarios(domain: Domain) -> Vec<(FamilyKind, LinkFunction, Shape)> {
    use FamilyKind::*;
    use LinkFunction::*;
    use Shape::*;
    match domain {
        Domain::LowerBounded => vec![
            (Gamma, Log, ThinTail),
            (Gamma, Log, HeavyTail),
            (Gamma, Softplus, ThinTail),
            (Gamma, Softplus, HeavyTail),
            (Weibull, Log, ThinTail),
            (Weibull, Softplus, HeavyTail),
        ],
        Domain::DoubleBounded => vec![
            (Beta, Logit, Symmetric),
            (Beta, Logit, Asymmetric),
            (Beta, Cloglog, Symmetric),
            (Beta, Cloglog, Asymmetric),
            (Kumaraswamy, Logit, Symmetric),
            (Kumaraswamy, Cloglog, Asymmetric),
        ],
    }
}

/// Plan with the default scenario selection for `scale`: the full grid at
/// paper scale, [`desk_scenarios`] at desk scale and one scenario for smoke.
pub fn build_plan(domain: Domain, scale: Scale, master_seed: u64) -> Result<SimulationPlan> {
    let table = PresetTable::builtin();
    let configs = match scale {
        Scale::Paper => crate::dgp::scenario_table(domain, &table)?,
        Scale::Desk => desk_scenarios(domain)
            .into_iter()
            .map(|(f, l, s)| DgpConfig::from_table(&table, f, l, s, EffectRegime::Positive))
            .collect::<Result<_>>()?,
        Scale::Smoke => {
            let (f, l, s) = smoke_scenario(domain);
            vec![DgpConfig::from_table(&table, f, l, s, EffectRegime::Positive)?]
        }
    };
    plan_from_configs(domain, scale, configs, scale.default_replicates(), master_seed)
}

pub fn plan_from_configs(
    domain: Domain,
    scale: Scale,
    dgp_configs: Vec<DgpConfig>,
    replicates: u32,
    master_seed: u64,
) -> Result<SimulationPlan> {
    if dgp_configs.is_empty() {
        return Err(Error::config("scenarios", "the scenario subset is empty"));
    }
    if replicates == 0 {
        return Err(Error::config("replicates", "must be positive"));
    }
    for (i, c) in dgp_configs.iter().enumerate() {
        if c.domain() != domain {
            return Err(Error::config(
                format!("scenarios[{i}].family"),
                format!("{} does not belong to the {domain} domain", c.family),
            ));
        }
        c.validate()?;
    }
    let mut ids = HashSet::new();
    for c in &dgp_configs {
        if !ids.insert(&c.config_id) {
            return Err(Error::config(
                "scenarios",
                format!("duplicate scenario {}", c.config_id),
            ));
        }
    }
    Ok(SimulationPlan {
        domain,
        scale,
        dgp_configs,
        replicates,
        fit_grid: fit_grid(domain),
        master_seed,
        sampler: SamplerConfig::default(),
    })
}

impl SimulationPlan {
    pub fn task_count(&self) -> usize {
        self.dgp_configs.len() * self.replicates as usize * self.fit_grid.len()
    }

    pub fn tasks(&self) -> Vec<TaskKey> {
        let mut out = Vec::with_capacity(self.task_count());
        for c in &self.dgp_configs {
            for r in 0..self.replicates {
                for f in &self.fit_grid {
                    out.push(TaskKey {
                        config_id: c.config_id.clone(),
                        replicate: r,
                        family_fit: f.family,
                        link_fit: f.link,
                        formula: f.formula,
                    });
                }
            }
        }
        out
    }

    pub fn dataset_seed(&self, config_id: &str, replicate: u32) -> u64 {
        seeds::derive_index(seeds::derive(self.master_seed, config_id), replicate as u64)
    }

    pub fn sampler_seed(&self, key: &TaskKey) -> u64 {
        seeds::derive(
            self.dataset_seed(&key.config_id, key.replicate),
            &format!("fit/{}/{}/{}", key.family_fit, key.link_fit, key.formula),
        )
    }

    fn config(&self, id: &str) -> &DgpConfig {
        self.dgp_configs
            .iter()
            .find(|c| c.config_id == id)
            .expect("task refers to a planned scenario")
    }
}

/// One scenario entry of a plan file; unset fields come from the preset table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub family: FamilyKind,
    pub link: LinkFunction,
    pub shape: Shape,
    #[serde(default = "positive_regime")]
    pub regime: EffectRegime,
    #[serde(default)]
    pub beta_xy: Option<f64>,
    #[serde(default)]
    pub alpha_y: Option<f64>,
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default)]
    pub n_obs: Option<usize>,
    #[serde(default)]
    pub n_test: Option<usize>,
}

fn positive_regime() -> EffectRegime {
    EffectRegime::Positive
}

/// User-facing plan description (JSON).
///
/// ```json
/// { "domain": "lower_bounded", "scale": "desk", "master_seed": 7,
///   "replicates": 10,
///   "scenarios": [{ "family": "gamma", "link": "log", "shape": "thin_tail" }] }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub domain: Domain,
    pub scale: Scale,
    pub master_seed: u64,
    #[serde(default)]
    pub replicates: Option<u32>,
    #[serde(default)]
    pub scenarios: Option<Vec<ScenarioSpec>>,
    #[serde(default)]
    pub sampler: Option<SamplerConfig>,
    /// Alternative preset table (path to JSON).
    #[serde(default)]
    pub presets: Option<PathBuf>,
}

impl PlanConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }

    pub fn into_plan(self) -> Result<SimulationPlan> {
        let table = match &self.presets {
            Some(p) => PresetTable::load(p)?,
            None => PresetTable::builtin(),
        };
        let configs = match &self.scenarios {
            None => build_plan(self.domain, self.scale, self.master_seed)?.dgp_configs,
            Some(list) if list.is_empty() => {
                return Err(Error::config("scenarios", "the scenario subset is empty"))
            }
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(i, s)| scenario_config(&table, self.domain, s).map_err(|e| at_index(i, e)))
                .collect::<Result<Vec<_>>>()?,
        };
        let replicates = self.replicates.unwrap_or(self.scale.default_replicates());
        let mut plan =
            plan_from_configs(self.domain, self.scale, configs, replicates, self.master_seed)?;
        if let Some(sampler) = self.sampler {
            if sampler.chains < 2 || sampler.warmup == 0 || sampler.kept < 4 {
                return Err(Error::config(
                    "sampler",
                    "need at least 2 chains, a warmup phase and 4 kept draws",
                ));
            }
            plan.sampler = sampler;
        }
        Ok(plan)
    }
}

fn at_index(i: usize, e: Error) -> Error {
    match e {
        Error::Config { path, reason } => Error::config(format!("scenarios[{i}].{path}"), reason),
        other => other,
    }
}

fn scenario_config(table: &PresetTable, domain: Domain, s: &ScenarioSpec) -> Result<DgpConfig> {
    if s.family.support() != domain.support() {
        return Err(Error::config(
            "family",
            format!("{} does not belong to the {domain} domain", s.family),
        ));
    }
    let mut c = DgpConfig::from_table(table, s.family, s.link, s.shape, s.regime)?;
    let mut tweaked = false;
    if let Some(b) = s.beta_xy {
        c.beta_xy = b;
        tweaked = true;
    }
    if let Some(a) = s.alpha_y {
        c.alpha_y = a;
        tweaked = true;
    }
    if let Some(p) = s.phi {
        c.phi = p;
        tweaked = true;
    }
    if let Some(n) = s.n_obs {
        c.n_obs = n;
        tweaked = true;
    }
    if let Some(n) = s.n_test {
        c.n_test = n;
        tweaked = true;
    }
    if tweaked {
        c.config_id = format!("{}-custom{:08x}", c.config_id, override_hash(s));
    }
    c.validate()?;
    Ok(c)
}

fn override_hash(s: &ScenarioSpec) -> u32 {
    let text = serde_json::to_string(s).expect("scenario serialises");
    (seeds::derive(0, &text) >> 32) as u32
}

/// Stored once per results root and refreshed on every run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub master_seed: u64,
    pub plan: SimulationPlan,
    pub created_unix: u64,
    pub updated_unix: u64,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Serialize, Deserialize)]
struct StoreHeader {
    schema_version: u32,
    kind: String,
}

const STORE_KIND: &str = "glmlab-results";

/// On-disk results store.
#[derive(Debug, Clone)]
pub struct Store {
    pub root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Store { root: root.into() }
    }

    pub fn results_path(&self) -> PathBuf {
        self.root.join("results.jsonl")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn exists(&self) -> bool {
        self.manifest_path().exists() || self.results_path().exists()
    }

    pub fn dataset_path(&self, config_id: &str, replicate: u32, role: &str) -> PathBuf {
        self.root
            .join("datasets")
            .join(config_id)
            .join(format!("r{replicate:04}-{role}.csv"))
    }

    pub fn read_manifest(&self) -> Result<Option<RunManifest>> {
        let path = self.manifest_path();
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|e| Error::Parse {
                path,
                line: e.line(),
                reason: e.to_string(),
            })
    }

    /// Creates the directory layout and writes (or refreshes) the manifest
    /// and task list. An existing manifest must describe the same plan.
    pub fn prepare(&self, plan: &SimulationPlan) -> Result<()> {
        fs::create_dir_all(self.root.join("datasets")).map_err(|e| Error::io(&self.root, e))?;
        let created = match self.read_manifest()? {
            Some(m) if m.plan != *plan => {
                return Err(Error::config(
                    self.manifest_path().display().to_string(),
                    "results store was created for a different plan",
                ));
            }
            Some(m) => m.created_unix,
            None => now_unix(),
        };
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: plan.master_seed,
            plan: plan.clone(),
            created_unix: created,
            updated_unix: now_unix(),
        };
        write_atomic(
            &self.manifest_path(),
            serde_json::to_string_pretty(&manifest).expect("manifest serialises").as_bytes(),
        )?;
        let tasks_path = self.root.join("tasks.jsonl");
        if !tasks_path.exists() {
            let mut buf = Vec::new();
            for key in plan.tasks() {
                serde_json::to_writer(&mut buf, &key).expect("key serialises");
                buf.push(b'\n');
            }
            write_atomic(&tasks_path, &buf)?;
        }
        Ok(())
    }

    /// Loads the train/test pair of a replicate, generating and caching it
    /// on first use.
    pub fn dataset(&self, plan: &SimulationPlan, config: &DgpConfig, replicate: u32) -> Result<DatasetPair> {
        let train_path = self.dataset_path(&config.config_id, replicate, "train");
        let test_path = self.dataset_path(&config.config_id, replicate, "test");
        if train_path.exists() && test_path.exists() {
            return Ok(DatasetPair {
                train: Dataset::read_csv(&train_path)?,
                test: Dataset::read_csv(&test_path)?,
            });
        }
        let pair = generate_dataset(config, plan.dataset_seed(&config.config_id, replicate))?;
        let dir = train_path.parent().expect("dataset dir");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        pair.train.write_csv(&train_path)?;
        pair.test.write_csv(&test_path)?;
        Ok(pair)
    }

    pub fn load_records(&self) -> Result<Vec<MetricRecord>> {
        read_records(&self.results_path())
    }

    /// Opens the results file for appending, writing the header if new and
    /// dropping a partially written final line.
    fn appender(&self) -> Result<BufWriter<File>> {
        let path = self.results_path();
        if path.exists() {
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            if !bytes.is_empty() && bytes.last() != Some(&b'\n') {
                let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
                let f = OpenOptions::new().write(true).open(&path).map_err(|e| Error::io(&path, e))?;
                f.set_len(keep as u64).map_err(|e| Error::io(&path, e))?;
            }
        }
        let fresh = !path.exists() || fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        if fresh {
            let header = StoreHeader {
                schema_version: SCHEMA_VERSION,
                kind: STORE_KIND.to_string(),
            };
            serde_json::to_writer(&mut w, &header).expect("header serialises");
            w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
        Ok(w)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a results file, keeping the first record of every TaskKey. A
/// truncated final line is ignored.
pub fn read_records(path: &Path) -> Result<Vec<MetricRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let bytes_len = file.metadata().map(|m| m.len()).unwrap_or(0);
    let mut lines = BufReader::new(file).lines().enumerate().peekable();
    let parse_err = |line: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, header)) => {
            let header = header.map_err(|e| Error::io(path, e))?;
            let h: StoreHeader = serde_json::from_str(&header)
                .map_err(|e| parse_err(1, format!("missing store header: {e}")))?;
            if h.kind != STORE_KIND || h.schema_version != SCHEMA_VERSION {
                return Err(parse_err(
                    1,
                    format!("unsupported store {} v{}", h.kind, h.schema_version),
                ));
            }
        }
    }
    let ends_with_newline = {
        let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
        use std::io::{Read, Seek, SeekFrom};
        if bytes_len == 0 {
            true
        } else {
            f.seek(SeekFrom::End(-1)).map_err(|e| Error::io(path, e))?;
            let mut b = [0u8; 1];
            f.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
            b[0] == b'\n'
        }
    };
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    while let Some((idx, line)) = lines.next() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let is_last = lines.peek().is_none();
        match serde_json::from_str::<MetricRecord>(&line) {
            Ok(rec) => {
                if seen.insert(rec.key.clone()) {
                    out.push(rec);
                }
            }
            Err(_) if is_last && !ends_with_newline => break,
            Err(e) => return Err(parse_err(idx + 1, e.to_string())),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub exec: Execution,
    /// Stop after executing this many tasks (fault injection / partial runs).
    pub stop_after: Option<usize>,
    pub progress: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            exec: Execution::Parallel { workers: 0 },
            stop_after: None,
            progress: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub total: usize,
    pub already_done: usize,
    pub executed: usize,
    pub failed: usize,
}

impl RunSummary {
    pub fn complete(&self) -> bool {
        self.already_done + self.executed == self.total
    }
}

/// Fits one task, converting errors and panics into failed records.
pub fn execute_task(plan: &SimulationPlan, key: &TaskKey, pair: &DatasetPair) -> MetricRecord {
    let config = plan.config(&key.config_id);
    let truth = Truth::from(config);
    let settings = plan.sampler.settings();
    let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<MetricRecord> {
        let spec = FamilySpec::new(key.family_fit, key.link_fit)?;
        let fitted = fit(
            &pair.train,
            spec,
            key.link_fit,
            key.formula,
            plan.sampler_seed(key),
            &settings,
        )?;
        evaluate(&fitted, &pair.train, &pair.test, key.clone(), truth.clone())
    }));
    match outcome {
        Ok(Ok(record)) => record,
        Ok(Err(e)) => MetricRecord::failed(key.clone(), truth, e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            MetricRecord::failed(key.clone(), truth, format!("panic: {msg}"))
        }
    }
}

/// Generates (or loads) every dataset of the plan.
pub fn generate(plan: &SimulationPlan, store: &Store, exec: Execution) -> Result<usize> {
    store.prepare(plan)?;
    let jobs: Vec<(&DgpConfig, u32)> = plan
        .dgp_configs
        .iter()
        .flat_map(|c| (0..plan.replicates).map(move |r| (c, r)))
        .collect();
    let results = par::map(exec, &jobs, |(c, r)| store.dataset(plan, c, *r).map(|_| ()));
    results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(jobs.len())
}

/// Executes every task not yet present in the store.
pub fn run(plan: &SimulationPlan, store: &Store, options: &RunOptions) -> Result<RunSummary> {
    store.prepare(plan)?;
    let done: HashSet<TaskKey> = if store.results_path().exists() {
        store.load_records()?.into_iter().map(|r| r.key).collect()
    } else {
        HashSet::new()
    };
    let all = plan.tasks();
    let total = all.len();
    let mut pending: Vec<TaskKey> = all.into_iter().filter(|k| !done.contains(k)).collect();
    let already_done = total - pending.len();
    if let Some(limit) = options.stop_after {
        pending.truncate(limit);
    }
    // group pending tasks by dataset so each dataset is loaded once
    let mut by_dataset: BTreeMap<(String, u32), Vec<TaskKey>> = BTreeMap::new();
    for key in pending {
        by_dataset
            .entry((key.config_id.clone(), key.replicate))
            .or_default()
            .push(key);
    }
    let groups: Vec<((String, u32), Vec<TaskKey>)> = by_dataset.into_iter().collect();
    let appender = Mutex::new(store.appender()?);
    let executed = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    let results_path = store.results_path();
    let outcomes = par::map(options.exec, &groups, |((config_id, replicate), keys)| -> Result<()> {
        let pair = store.dataset(plan, plan.config(config_id), *replicate)?;
        let records = par::map_nested(options.exec, keys, |key| execute_task(plan, key, &pair));
        let mut w = appender.lock().unwrap_or_else(|e| e.into_inner());
        for rec in records {
            if rec.failure.is_some() {
                failed.fetch_add(1, Ordering::Relaxed);
            }
            let line = serde_json::to_string(&rec).expect("record serialises");
            w.write_all(line.as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .and_then(|_| w.flush())
                .map_err(|e| Error::io(&results_path, e))?;
            let n = executed.fetch_add(1, Ordering::Relaxed) + 1;
            if options.progress && n.is_multiple_of(100) {
                eprintln!(
                    "[glmlab] {} / {} tasks done ({} failed)",
                    already_done + n,
                    total,
                    failed.load(Ordering::Relaxed)
                );
            }
        }
        Ok(())
    });
    outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(RunSummary {
        total,
        already_done,
        executed: executed.into_inner(),
        failed: failed.into_inner(),
    })
}

/// Pilot-run outcome for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub config_id: String,
    pub beta_xy: f64,
    pub replicates: usize,
    pub converged: usize,
    pub tpr: f64,
    /// `"floor"` (TPR ≤ 0.2), `"ceiling"` (TPR ≥ 0.9) or `"ok"`.
    pub flag: &'static str,
}

pub const CALIBRATION_BAND: (f64, f64) = (0.2, 0.9);

pub fn calibration_flag(tpr: f64) -> &'static str {
    if !(tpr > CALIBRATION_BAND.0) {
        "floor"
    } else if tpr >= CALIBRATION_BAND.1 {
        "ceiling"
    } else {
        "ok"
    }
}

/// Ideal-formula TPR of the correctly specified model over `replicates`
/// pilot datasets per scenario. Zero-effect scenarios are skipped.
pub fn calibrate(
    configs: &[DgpConfig],
    replicates: u32,
    master_seed: u64,
    sampler: SamplerConfig,
    exec: Execution,
) -> Result<Vec<CalibrationRow>> {
    let configs: Vec<&DgpConfig> = configs
        .iter()
        .filter(|c| c.regime == EffectRegime::Positive)
        .collect();
    let jobs: Vec<(&DgpConfig, u32)> = configs
        .iter()
        .flat_map(|&c| (0..replicates).map(move |r| (c, r)))
        .collect();
    let settings = sampler.settings();
    let outcomes = par::map(exec, &jobs, |(c, r)| -> Result<Option<bool>> {
        let seed = seeds::derive_index(seeds::derive(master_seed, &c.config_id), *r as u64);
        let pair = generate_dataset(c, seed)?;
        let spec = c.family_spec();
        let sampler_seed = seeds::derive(seed, "calibrate");
        let fitted = match fit(&pair.train, spec, c.link, Formula::Ideal, sampler_seed, &settings) {
            Ok(f) => f,
            Err(Error::Fit(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        if !fitted.diagnostics.converged {
            return Ok(None);
        }
        Ok(Some(crate::metrics::ci_decision(&fitted.draws.beta_xy(), 0.95).reject_zero))
    });
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        let chunk = &outcomes[i * replicates as usize..(i + 1) * replicates as usize];
        let decided: Vec<bool> = chunk.iter().flatten().copied().collect();
        let tpr = if decided.is_empty() {
            f64::NAN
        } else {
            decided.iter().filter(|&&d| d).count() as f64 / decided.len() as f64
        };
        rows.push(CalibrationRow {
            config_id: c.config_id.clone(),
            beta_xy: c.beta_xy,
            replicates: replicates as usize,
            converged: decided.len(),
            tpr,
            flag: calibration_flag(tpr),
        });
    }
    Ok(rows)
}
