//! Experiment orchestration: configs, per-seed metric records, CSV output,
//! empirical CDFs and the migration-versus-retraining study.
//!
//! A run builds one fixed instance from `instance_seed` and then, for every
//! entry of `seeds`, draws a request set, solves it with the chosen method and
//! records per-request results. Aggregates are always recomputable from the
//! per-request rows of `requests.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{exact_solve, greedy_bestfit, greedy_nearest, ExactLimits};
use crate::catalog::{generate_requests, pad_to_batches, with_delay_factor, CatalogSpec, RequestSpec, ServiceRequest, VnfCatalog};
use crate::error::ExperimentError;
use crate::learning::{continue_training_until, deploy_all, migrate, smooth, train, EpochLog, HyperParams, TrainedModel};
use crate::rng::RNG_ALGORITHM;
use crate::solution::{evaluate_cost, evaluate_delay, validate, weighted_objective, Deployment, Scales};
use crate::topology::{
    full_mesh, generate_instance, mutate_topology, parse_topology_file, random_connected, sample_change, DistributionSpec,
    SubstrateNetwork,
};

pub const FORMAT_VERSION: u32 = 1;
/// Window of the moving average applied to reward curves.
pub const SMOOTHING_WINDOW: usize = 100;
/// Caps the number of worker threads used for seeds.
pub const THREADS_ENV: &str = "VNF_ORCH_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Madrl,
    GreedyBestfit,
    GreedyNearest,
    Exact,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Madrl => "madrl",
            Method::GreedyBestfit => "greedy-bestfit",
            Method::GreedyNearest => "greedy-nearest",
            Method::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TopologySource {
    /// Node/link list file; attributes are always sampled from `distribution`.
    File { path: PathBuf },
    Random { nodes: usize, extra_link_prob: f64 },
    FullMesh { nodes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Paper,
    Toy,
}

impl Preset {
    pub fn params(self) -> HyperParams {
        match self {
            Preset::Paper => HyperParams::paper(),
            Preset::Toy => HyperParams::toy(),
        }
    }
}

/// A preset plus individual overrides, e.g. `[hyper] preset = "toy"`,
/// `epochs = 500`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperBlock {
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(flatten)]
    pub overrides: toml::Table,
}

fn default_preset() -> Preset {
    Preset::Toy
}

impl Default for HyperBlock {
    fn default() -> Self {
        HyperBlock { preset: Preset::Toy, overrides: toml::Table::new() }
    }
}

impl HyperBlock {
    pub fn resolve(&self) -> Result<HyperParams, ExperimentError> {
        let base = self.preset.params();
        if self.overrides.is_empty() {
            return Ok(base);
        }
        let mut table = toml::Table::try_from(&base).map_err(|e| ExperimentError::config("hyper", e.to_string()))?;
        for (key, value) in &self.overrides {
            if !table.contains_key(key) {
                return Err(ExperimentError::config(format!("hyper.{key}"), "unknown field"));
            }
            table.insert(key.clone(), value.clone());
        }
        let hyper: HyperParams =
            table.try_into().map_err(|e: toml::de::Error| ExperimentError::config("hyper", e.to_string()))?;
        Ok(hyper)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RequestParams {
    /// Requests per seed (M).
    pub count: usize,
    pub rate: f64,
    pub mean_delay_factor: f64,
    pub min_chain: usize,
    pub max_chain: usize,
    /// Draw this many and keep the first `count`, so runs that differ only in
    /// `count` see nested request sets.
    pub pool: Option<usize>,
    /// Overrides every request's delay factor (cost factor becomes `1 - x`).
    pub delay_factor: Option<f64>,
}

impl Default for RequestParams {
    fn default() -> Self {
        let d = RequestSpec::default();
        RequestParams {
            count: d.count,
            rate: d.rate,
            mean_delay_factor: d.mean_delay_factor,
            min_chain: d.min_chain,
            max_chain: d.max_chain,
            pool: None,
            delay_factor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologySource,
    /// Seeds the structure (generated graphs), the attributes and the catalog.
    #[serde(default)]
    pub instance_seed: u64,
    #[serde(default)]
    pub distribution: DistributionSpec,
    #[serde(default)]
    pub catalog: CatalogSpec,
    #[serde(default)]
    pub requests: RequestParams,
    pub method: Method,
    #[serde(default)]
    pub hyper: HyperBlock,
    /// Agents per batch (M_batch) for `madrl`; defaults to the request count.
    #[serde(default)]
    pub agents: Option<usize>,
    #[serde(default)]
    pub exact: ExactLimits,
    #[serde(default)]
    pub scales: Scales,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative topology and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        if let TopologySource::File { path: p } = &mut cfg.topology {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        if let Some(out) = &mut cfg.output_dir {
            if out.is_relative() {
                *out = dir.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |field: &str, message: &str| Err(ExperimentError::config(field, message));
        if self.seeds.is_empty() {
            return bad("seeds", "must list at least one seed");
        }
        if self.requests.count == 0 {
            return bad("requests.count", "must be at least 1");
        }
        if let Some(pool) = self.requests.pool {
            if pool < self.requests.count {
                return bad("requests.pool", "must be at least requests.count");
            }
        }
        if let Some(x) = self.requests.delay_factor {
            if !(0.0..=1.0).contains(&x) {
                return bad("requests.delay_factor", "must lie in [0,1]");
            }
        }
        if self.catalog.category_count != self.distribution.category_count {
            return bad("catalog.category_count", "must equal distribution.category_count");
        }
        if self.agents == Some(0) {
            return bad("agents", "must be at least 1");
        }
        match self.topology {
            TopologySource::Random { nodes, extra_link_prob } => {
                if nodes < 2 {
                    return bad("topology.nodes", "need at least two nodes");
                }
                if !(0.0..=1.0).contains(&extra_link_prob) {
                    return bad("topology.extra_link_prob", "must lie in [0,1]");
                }
            }
            TopologySource::FullMesh { nodes } if nodes < 2 => return bad("topology.nodes", "need at least two nodes"),
            _ => {}
        }
        if !(self.scales.cost > 0.0 && self.scales.delay > 0.0) {
            return bad("scales", "must be positive");
        }
        self.distribution.validate().map_err(|e| ExperimentError::config("distribution", e.to_string()))?;
        self.hyper.resolve()?.validate().map_err(|e| ExperimentError::config("hyper", e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the config's canonical JSON form, without `output_dir`.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&ExperimentConfig { output_dir: None, ..self.clone() }).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn agents(&self) -> usize {
        self.agents.unwrap_or(self.requests.count)
    }
}

/// The fixed substrate network and catalog of a config.
pub fn build_instance(cfg: &ExperimentConfig) -> Result<(SubstrateNetwork, VnfCatalog), ExperimentError> {
    let k = cfg.distribution.category_count;
    let structure = match &cfg.topology {
        TopologySource::File { path } => {
            let file = parse_topology_file(&fs::read_to_string(path)?)?;
            SubstrateNetwork::bare(file.node_count, file.links, k)?
        }
        TopologySource::Random { nodes, extra_link_prob } => {
            random_connected(*nodes, *extra_link_prob, cfg.instance_seed, k)?
        }
        TopologySource::FullMesh { nodes } => full_mesh(*nodes, k)?,
    };
    let net = generate_instance(&structure, cfg.instance_seed, &cfg.distribution)?;
    let catalog = VnfCatalog::generate(&cfg.catalog, cfg.instance_seed)?;
    Ok((net, catalog))
}

/// The request set of one seed.
pub fn build_requests(
    cfg: &ExperimentConfig,
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    seed: u64,
) -> Result<Vec<ServiceRequest>, ExperimentError> {
    let p = &cfg.requests;
    let spec = RequestSpec {
        count: p.pool.unwrap_or(p.count),
        rate: p.rate,
        min_chain: p.min_chain,
        max_chain: p.max_chain,
        mean_delay_factor: p.mean_delay_factor,
    };
    let mut reqs = generate_requests(net, catalog, &spec, seed)?;
    reqs.truncate(p.count);
    if let Some(x) = p.delay_factor {
        reqs = with_delay_factor(&reqs, x);
    }
    Ok(reqs)
}

/// Outcome for one request; cost, delay and objective only when accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub request: usize,
    pub source: usize,
    pub destination: usize,
    pub chain_len: usize,
    pub rate: f64,
    pub cost_factor: f64,
    pub delay_factor: f64,
    pub accepted: bool,
    pub cost: Option<f64>,
    pub delay: Option<f64>,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub method: Method,
    pub requests: Vec<RequestRecord>,
    pub accepted: usize,
    pub total: usize,
    pub acceptance_ratio: f64,
    /// Sum of accepted rates (Mbps).
    pub throughput: f64,
    /// Sum of accepted weighted objectives.
    pub objective: f64,
    /// Means over accepted requests (0 when none).
    pub mean_cost: f64,
    pub mean_delay: f64,
    /// Total joint reward per training epoch (`madrl` only).
    pub reward_curve: Vec<f64>,
    pub epochs_to_threshold: Option<usize>,
}

impl MetricsRecord {
    /// Aggregates per-request rows; every field is a plain fold over them.
    pub fn from_requests(seed: u64, method: Method, requests: Vec<RequestRecord>, reward_curve: Vec<f64>) -> Self {
        let total = requests.len();
        let accepted = requests.iter().filter(|r| r.accepted).count();
        let sum = |f: fn(&RequestRecord) -> Option<f64>| requests.iter().filter_map(f).fold(0.0, |a, b| a + b);
        // fold from +0.0: an empty f64 sum is -0.0, which would print as "-0"
        let throughput = requests.iter().filter(|r| r.accepted).map(|r| r.rate).fold(0.0, |a, b| a + b);
        let objective = sum(|r| r.objective);
        let mean = |x: f64| if accepted == 0 { 0.0 } else { x / accepted as f64 };
        MetricsRecord {
            seed,
            method,
            accepted,
            total,
            acceptance_ratio: if total == 0 { 0.0 } else { accepted as f64 / total as f64 },
            throughput,
            objective,
            mean_cost: mean(sum(|r| r.cost)),
            mean_delay: mean(sum(|r| r.delay)),
            requests,
            reward_curve,
            epochs_to_threshold: None,
        }
    }
}

/// Per-request rows for a solved request set, after checking that the
/// accepted deployments are jointly feasible on the full network.
pub fn record_requests(
    seed: u64,
    requests: &[ServiceRequest],
    deployments: &[Deployment],
    accepted: &[bool],
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    scales: Scales,
) -> Result<Vec<RequestRecord>, ExperimentError> {
    let (mut deps, mut reqs) = (Vec::new(), Vec::new());
    for ((d, r), &ok) in deployments.iter().zip(requests).zip(accepted) {
        if ok {
            deps.push(d.clone());
            reqs.push(r.clone());
        }
    }
    let report = validate(&deps, &reqs, net, catalog)?;
    if !report.feasible() {
        return Err(ExperimentError::InvalidResult { seed, violated: report.violated_list });
    }
    Ok(requests
        .iter()
        .zip(deployments)
        .zip(accepted)
        .map(|((r, d), &ok)| {
            let (cost, delay) = if ok {
                (Some(evaluate_cost(d, r, net, catalog)), Some(evaluate_delay(d, r, net, catalog)))
            } else {
                (None, None)
            };
            RequestRecord {
                request: r.id,
                source: r.source,
                destination: r.destination,
                chain_len: r.chain_len(),
                rate: r.rate,
                cost_factor: r.cost_factor,
                delay_factor: r.delay_factor,
                accepted: ok,
                cost,
                delay,
                objective: cost.zip(delay).map(|(c, dl)| weighted_objective(c, dl, r, scales)),
            }
        })
        .collect())
}

/// Runs one seed of a validated config on a prebuilt instance.
pub fn run_seed(
    cfg: &ExperimentConfig,
    net: &SubstrateNetwork,
    catalog: &VnfCatalog,
    seed: u64,
) -> Result<MetricsRecord, ExperimentError> {
    let requests = build_requests(cfg, net, catalog, seed)?;
    let mut curve = Vec::new();
    let (deployments, accepted) = match cfg.method {
        Method::GreedyBestfit => {
            let r = greedy_bestfit(&requests, net, catalog);
            (r.deployments, r.accepted)
        }
        Method::GreedyNearest => {
            let r = greedy_nearest(&requests, net, catalog);
            (r.deployments, r.accepted)
        }
        Method::Exact => match exact_solve(&requests, net, catalog, cfg.scales, &cfg.exact)? {
            Some(sol) => (sol.deployments, vec![true; requests.len()]),
            None => {
                let n = net.node_count();
                let empty = requests.iter().map(|r| Deployment::empty(r.id, r.chain_len(), n)).collect();
                (empty, vec![false; requests.len()])
            }
        },
        Method::Madrl => {
            let hyper = cfg.hyper.resolve()?;
            let batch = pad_to_batches(&requests, cfg.agents()).swap_remove(0);
            let (model, log) = train(&batch, net, catalog, &hyper, cfg.scales, seed)?;
            curve = log.total_joint();
            let out = deploy_all(&requests, net, catalog, &model)?;
            (out.deployments, out.accepted)
        }
    };
    let rows = record_requests(seed, &requests, &deployments, &accepted, net, catalog, cfg.scales)?;
    Ok(MetricsRecord::from_requests(seed, cfg.method, rows, curve))
}

/// Thread cap from [`THREADS_ENV`]; `None` leaves the pool size to rayon.
pub fn thread_cap() -> Result<Option<usize>, ExperimentError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(ExperimentError::config(THREADS_ENV, format!("expected a positive integer, got `{v}`"))),
        },
    }
}

/// Maps `f` over the seeds on a pool capped by [`THREADS_ENV`], keeping seed
/// order in the output.
fn per_seed<T: Send>(
    seeds: &[u64],
    f: impl Fn(u64) -> Result<T, ExperimentError> + Sync,
) -> Result<Vec<T>, ExperimentError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| ExperimentError::config(THREADS_ENV, e.to_string()))?;
    pool.install(|| seeds.par_iter().map(|&s| f(s)).collect())
}

/// Builds the instance, runs every seed and, when `output_dir` is set, writes
/// the metric files and manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<MetricsRecord>, ExperimentError> {
    cfg.validate()?;
    let (net, catalog) = build_instance(cfg)?;
    let records = per_seed(&cfg.seeds, |seed| run_seed(cfg, &net, &catalog, seed))?;
    if let Some(dir) = &cfg.output_dir {
        write_outputs(cfg, &net, &records, dir)?;
    }
    Ok(records)
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub rng: String,
    pub smoothing_window: usize,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub node_count: usize,
    /// Path length bound used by `exact`.
    pub hop_bound: Option<usize>,
    pub files: Vec<String>,
}

/// Writes `requests.csv` (raw rows), one CSV per aggregate metric and
/// `manifest.json`.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    net: &SubstrateNetwork,
    records: &[MetricsRecord],
    dir: &Path,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut emit = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<(), ExperimentError> {
        write_csv(&dir.join(name), header, rows)?;
        files.push(name.to_string());
        Ok(())
    };
    let rows_of = |f: &dyn Fn(u64, &RequestRecord) -> Option<Vec<String>>| -> Vec<Vec<String>> {
        records.iter().flat_map(|m| m.requests.iter().filter_map(|r| f(m.seed, r))).collect()
    };
    emit(
        "requests.csv",
        &[
            "seed", "request", "source", "destination", "chain_len", "rate", "cost_factor", "delay_factor",
            "accepted", "cost", "delay", "objective",
        ],
        rows_of(&|seed, r| {
            Some(vec![
                seed.to_string(),
                r.request.to_string(),
                r.source.to_string(),
                r.destination.to_string(),
                r.chain_len.to_string(),
                num(r.rate),
                num(r.cost_factor),
                num(r.delay_factor),
                u8::from(r.accepted).to_string(),
                opt(r.cost),
                opt(r.delay),
                opt(r.objective),
            ])
        }),
    )?;
    emit("cost.csv", &["seed", "request", "cost"], rows_of(&|s, r| r.cost.map(|c| vec![s.to_string(), r.request.to_string(), num(c)])))?;
    emit("delay.csv", &["seed", "request", "delay"], rows_of(&|s, r| r.delay.map(|d| vec![s.to_string(), r.request.to_string(), num(d)])))?;
    emit(
        "acceptance.csv",
        &["seed", "accepted", "total", "acceptance_ratio"],
        records
            .iter()
            .map(|m| vec![m.seed.to_string(), m.accepted.to_string(), m.total.to_string(), num(m.acceptance_ratio)])
            .collect(),
    )?;
    emit("throughput.csv", &["seed", "throughput"], records.iter().map(|m| vec![m.seed.to_string(), num(m.throughput)]).collect())?;
    emit(
        "objective.csv",
        &["seed", "objective", "mean_cost", "mean_delay"],
        records.iter().map(|m| vec![m.seed.to_string(), num(m.objective), num(m.mean_cost), num(m.mean_delay)]).collect(),
    )?;
    if cfg.method == Method::Madrl {
        let mut rows = Vec::new();
        for m in records {
            for (e, (r, s)) in m.reward_curve.iter().zip(smooth(&m.reward_curve, SMOOTHING_WINDOW)).enumerate() {
                rows.push(vec![m.seed.to_string(), e.to_string(), num(*r), num(s)]);
            }
        }
        emit("reward.csv", &["seed", "epoch", "total_joint", "smoothed"], rows)?;
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config_hash: cfg.hash(),
        rng: RNG_ALGORITHM.to_string(),
        smoothing_window: SMOOTHING_WINDOW,
        method: cfg.method,
        seeds: cfg.seeds.clone(),
        node_count: net.node_count(),
        hop_bound: (cfg.method == Method::Exact)
            .then(|| cfg.exact.max_hops.unwrap_or(net.node_count().saturating_sub(1))),
        files: files.clone(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    files.push("manifest.json".into());
    Ok(files.into_iter().map(|f| dir.join(f)).collect())
}

/// Empirical CDF `F(x) = #{v ≤ x} / n`.
pub fn empirical_cdf(values: &[f64], x: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v <= x).count() as f64 / values.len() as f64
}

/// Empirical CDF sampled at `points` evenly spaced quantile levels
/// `j / points`, `j = 1..=points`; the last pair is `(max, 1)`.
pub fn emit_cdf(values: &[f64], points: usize) -> Result<Vec<(f64, f64)>, ExperimentError> {
    if values.is_empty() {
        return Err(ExperimentError::EmptyInput);
    }
    if points == 0 {
        return Err(ExperimentError::config("points", "must be at least 1"));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(ExperimentError::config("values", "NaN in input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out = Vec::with_capacity(points);
    for j in 1..=points {
        let idx = (j * n).div_ceil(points).max(1) - 1;
        let x = sorted[idx];
        let below = sorted.partition_point(|&v| v <= x);
        out.push((x, below as f64 / n as f64));
    }
    Ok(out)
}

/// Reads one numeric column of a CSV with a header row; empty cells are
/// skipped.
pub fn read_csv_column(path: &Path, column: &str) -> Result<Vec<f64>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    let idx = r
        .headers()?
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| ExperimentError::config("column", format!("`{column}` not in {}", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let cell = rec.get(idx).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        out.push(cell.parse::<f64>().map_err(|_| ExperimentError::config(column, format!("not a number: `{cell}`")))?);
    }
    Ok(out)
}

/// Topology change applied in a migration study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChangeSpec {
    pub add_node: bool,
    pub link_count: usize,
}

impl Default for ChangeSpec {
    fn default() -> Self {
        ChangeSpec { add_node: false, link_count: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MigrationConfig {
    /// Must use `method = "madrl"`.
    pub base: ExperimentConfig,
    #[serde(default)]
    pub change: ChangeSpec,
    /// Threshold as a fraction of the base model's converged smoothed reward.
    #[serde(default = "default_fraction")]
    pub threshold_fraction: f64,
    /// Initial exploration noise when fine-tuning a migrated model; defaults
    /// to the schedule's final value.
    #[serde(default)]
    pub finetune_noise: Option<f64>,
}

fn default_fraction() -> f64 {
    0.95
}

impl MigrationConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: MigrationConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        if let TopologySource::File { path: p } = &mut cfg.base.topology {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        if let Some(out) = &mut cfg.base.output_dir {
            if out.is_relative() {
                *out = dir.join(&*out);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.base.validate()?;
        if self.base.method != Method::Madrl {
            return Err(ExperimentError::config("base.method", "migration studies need `madrl`"));
        }
        if !(self.threshold_fraction > 0.0 && self.threshold_fraction <= 1.0) {
            return Err(ExperimentError::config("threshold_fraction", "must lie in (0,1]"));
        }
        if let Some(x) = self.finetune_noise {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(ExperimentError::config("finetune_noise", "must be nonnegative"));
            }
        }
        Ok(())
    }
}

/// Paired result of one seed; `None` epochs mean the threshold was not reached
/// within the epoch budget (censored).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationOutcome {
    pub seed: u64,
    pub base_converged: f64,
    pub threshold: f64,
    pub migrated: Option<usize>,
    pub retrained: Option<usize>,
    pub migrated_curve: Vec<f64>,
    pub retrained_curve: Vec<f64>,
}

impl MigrationOutcome {
    /// Migration reached the threshold strictly sooner (censored counts as
    /// never).
    pub fn migrated_faster(&self) -> bool {
        match (self.migrated, self.retrained) {
            (Some(m), Some(r)) => m < r,
            (Some(_), None) => true,
            _ => false,
        }
    }
}

/// Epochs needed for the smoothed curve to reach `threshold` (1-based).
pub fn epochs_to_threshold(curve: &[f64], threshold: f64) -> Option<usize> {
    smooth(curve, SMOOTHING_WINDOW).iter().position(|&s| s >= threshold).map(|i| i + 1)
}

fn threshold_reached(threshold: f64) -> impl FnMut(&[EpochLog]) -> bool {
    let mut window = std::collections::VecDeque::new();
    let mut sum = 0.0;
    move |log: &[EpochLog]| {
        let x = log.last().map_or(0.0, |e| e.total_joint);
        window.push_back(x);
        sum += x;
        if window.len() > SMOOTHING_WINDOW {
            sum -= window.pop_front().unwrap_or(0.0);
        }
        sum / window.len() as f64 >= threshold
    }
}

/// Trains a base model, applies a sampled topology change and compares
/// epochs-to-threshold of migrate-and-continue against training from scratch.
pub fn migration_study(cfg: &MigrationConfig) -> Result<Vec<MigrationOutcome>, ExperimentError> {
    Ok(migration_studies(cfg, std::slice::from_ref(&cfg.change))?.swap_remove(0))
}

/// Runs one study per change in `changes` (overriding `cfg.change`), training
/// each seed's base model once. Outer index follows `changes`.
pub fn migration_studies(
    cfg: &MigrationConfig,
    changes: &[ChangeSpec],
) -> Result<Vec<Vec<MigrationOutcome>>, ExperimentError> {
    cfg.validate()?;
    let base_cfg = &cfg.base;
    let (net, catalog) = build_instance(base_cfg)?;
    let hyper = base_cfg.hyper.resolve()?;
    let rows = per_seed(&base_cfg.seeds, |seed| {
        let requests = build_requests(base_cfg, &net, &catalog, seed)?;
        let batch = pad_to_batches(&requests, base_cfg.agents()).swap_remove(0);
        let (base, log) = train(&batch, &net, &catalog, &hyper, base_cfg.scales, seed)?;
        let converged = smooth(&log.total_joint(), SMOOTHING_WINDOW).last().copied().unwrap_or(0.0);
        if !(converged > 0.0) {
            return Err(ExperimentError::NoBaseline { seed });
        }
        let threshold = cfg.threshold_fraction * converged;
        changes
            .iter()
            .map(|spec| {
                let change = sample_change(&net, spec.add_node, spec.link_count, seed, &base_cfg.distribution)?;
                let new_net = mutate_topology(&net, &change)?;

                let mut migrated: TrainedModel = migrate(&base, &new_net, seed)?;
                migrated.hyper.noise_start = cfg.finetune_noise.unwrap_or(hyper.noise_end);
                let m_log = continue_training_until(
                    &mut migrated,
                    &batch,
                    &new_net,
                    &catalog,
                    seed,
                    hyper.epochs,
                    threshold_reached(threshold),
                )?;
                let mut fresh =
                    TrainedModel::for_instance(&batch, &new_net, &catalog, hyper.clone(), base_cfg.scales, seed)?;
                let r_log = continue_training_until(
                    &mut fresh,
                    &batch,
                    &new_net,
                    &catalog,
                    seed,
                    hyper.epochs,
                    threshold_reached(threshold),
                )?;
                let (mc, rc) = (m_log.total_joint(), r_log.total_joint());
                Ok(MigrationOutcome {
                    seed,
                    base_converged: converged,
                    threshold,
                    migrated: epochs_to_threshold(&mc, threshold),
                    retrained: epochs_to_threshold(&rc, threshold),
                    migrated_curve: mc,
                    retrained_curve: rc,
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;
    Ok((0..changes.len()).map(|c| rows.iter().map(|r| r[c].clone()).collect()).collect())
}

/// Writes `migration.csv` (one row per seed; empty epochs are censored) and
/// a manifest.
pub fn write_migration_outputs(
    cfg: &MigrationConfig,
    outcomes: &[MigrationOutcome],
    dir: &Path,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir)?;
    let opt_n = |x: Option<usize>| x.map(|v| v.to_string()).unwrap_or_default();
    write_csv(
        &dir.join("migration.csv"),
        &["seed", "base_converged", "threshold", "migrated_epochs", "retrained_epochs"],
        outcomes.iter().map(|o| {
            vec![o.seed.to_string(), num(o.base_converged), num(o.threshold), opt_n(o.migrated), opt_n(o.retrained)]
        }),
    )?;
    let mut rows = Vec::new();
    for o in outcomes {
        for (kind, curve) in [("migrated", &o.migrated_curve), ("retrained", &o.retrained_curve)] {
            for (e, (r, s)) in curve.iter().zip(smooth(curve, SMOOTHING_WINDOW)).enumerate() {
                rows.push(vec![o.seed.to_string(), kind.to_string(), e.to_string(), num(*r), num(s)]);
            }
        }
    }
    write_csv(&dir.join("migration_reward.csv"), &["seed", "run", "epoch", "total_joint", "smoothed"], rows)?;
    let json = serde_json::to_string(cfg).expect("config serializes");
    let manifest = serde_json::json!({
        "format_version": FORMAT_VERSION,
        "config_hash": hex::encode(Sha256::digest(json.as_bytes())),
        "rng": RNG_ALGORITHM,
        "smoothing_window": SMOOTHING_WINDOW,
        "threshold_fraction": cfg.threshold_fraction,
        "seeds": cfg.base.seeds,
        "files": ["migration.csv", "migration_reward.csv"],
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(method: Method) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
method = "{}"
seeds = [1, 2]
instance_seed = 3
[topology]
kind = "random"
nodes = 5
extra_link_prob = 0.3
[distribution]
category_count = 3
[catalog]
category_count = 3
[requests]
count = 2
min_chain = 1
max_chain = 2
"#,
            method.name()
        ))
        .unwrap()
    }

    #[test]
    fn cdf_examples() {
        let c = emit_cdf(&[1.0, 2.0, 3.0, 4.0], 4).unwrap();
        assert_eq!(c, vec![(1.0, 0.25), (2.0, 0.5), (3.0, 0.75), (4.0, 1.0)]);
        assert_eq!(empirical_cdf(&[1.0, 2.0, 3.0, 4.0], 2.5), 0.5);
        let k = emit_cdf(&[7.0; 5], 3).unwrap();
        assert!(k.iter().all(|&(x, f)| x == 7.0 && f == 1.0));
        assert_eq!(empirical_cdf(&[7.0; 5], 6.999), 0.0);
        assert!(matches!(emit_cdf(&[], 3), Err(ExperimentError::EmptyInput)));
    }

    #[test]
    fn config_diagnostics_name_the_field() {
        let mut c = cfg(Method::Exact);
        c.seeds.clear();
        assert!(matches!(c.validate(), Err(ExperimentError::Config { field, .. }) if field == "seeds"));
        let mut c = cfg(Method::Exact);
        c.hyper.overrides.insert("epochz".into(), toml::Value::Integer(3));
        assert!(matches!(c.validate(), Err(ExperimentError::Config { field, .. }) if field == "hyper.epochz"));
        let err = ExperimentConfig::from_toml("method = \"magic\"\nseeds=[1]\n[topology]\nkind=\"full-mesh\"\nnodes=3\n");
        assert!(err.is_err());
    }

    #[test]
    fn hyper_overrides_apply() {
        let mut c = cfg(Method::Madrl);
        c.hyper.overrides.insert("epochs".into(), toml::Value::Integer(7));
        let h = c.hyper.resolve().unwrap();
        assert_eq!(h.epochs, 7);
        assert_eq!(h.batch_size, HyperParams::toy().batch_size);
    }

    #[test]
    fn exact_matches_oracle_and_seeds_are_independent() {
        let c = cfg(Method::Exact);
        let recs = run_experiment(&c).unwrap();
        assert_eq!(recs.len(), 2);
        let (net, cat) = build_instance(&c).unwrap();
        for r in &recs {
            let reqs = build_requests(&c, &net, &cat, r.seed).unwrap();
            let sol = exact_solve(&reqs, &net, &cat, c.scales, &c.exact).unwrap().unwrap();
            assert!((sol.objective.objective - r.objective).abs() <= 1e-9 * sol.objective.objective);
        }
        assert_ne!(recs[0].requests, recs[1].requests);
    }

    #[test]
    fn aggregates_fold_rows() {
        let c = cfg(Method::GreedyNearest);
        for r in run_experiment(&c).unwrap() {
            let acc: Vec<_> = r.requests.iter().filter(|x| x.accepted).collect();
            assert_eq!(r.accepted, acc.len());
            assert_eq!(r.throughput, acc.iter().map(|x| x.rate).sum::<f64>());
            assert_eq!(r.acceptance_ratio, acc.len() as f64 / r.total as f64);
        }
    }

    #[test]
    fn threshold_counting() {
        assert_eq!(epochs_to_threshold(&[0.0, 0.0, 3.0], 1.0), Some(3));
        assert_eq!(epochs_to_threshold(&[5.0], 1.0), Some(1));
        assert_eq!(epochs_to_threshold(&[0.0; 10], 1.0), None);
    }

    #[test]
    fn shared_base_studies_match_single_studies() {
        let mut base = cfg(Method::Madrl);
        base.seeds = vec![4];
        base.hyper.overrides.insert("epochs".into(), toml::Value::Integer(80));
        let changes = [ChangeSpec { add_node: false, link_count: 1 }, ChangeSpec { add_node: true, link_count: 2 }];
        let mk = |change: &ChangeSpec| MigrationConfig {
            base: base.clone(),
            change: change.clone(),
            threshold_fraction: 0.5,
            finetune_noise: None,
        };
        let both = migration_studies(&mk(&changes[0]), &changes).unwrap();
        for (c, out) in changes.iter().zip(&both) {
            assert_eq!(out, &migration_study(&mk(c)).unwrap());
        }
    }
}
