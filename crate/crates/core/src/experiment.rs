//! Study orchestration: baseline cost mining, beta sweeps, load sweeps,
//! cross-setting normalization and plot-ready reports.
//!
//! A sweep cell is one (setting, beta, seed index) run. Demand and the
//! simulator's respawn stream come from [`seeds::replicate_seed`] and are
//! therefore shared by every beta of a seed index; the agent tree uses
//! [`seeds::cell_seed`]. Cells run on a bounded worker pool and are merged
//! in cell order, so output never depends on scheduling.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::collective::{optimize, CostTrace, OptimizeOutcome, OptimizerConfig, Selections, Weights};
use crate::demand::{
    build_districts, read_population_csv, sample_trips, sample_uniform_trips, DistrictGrid,
    PopulationRecord, Trip, DEFAULT_CELL_SIZE,
};
use crate::error::{Error, Result};
use crate::mesosim::{run_seeded, SimConfig, SimOutput, VehicleSpec, DEFAULT_MIN_GAP, DEFAULT_VEHICLE_LENGTH};
use crate::network::{load_network, GridSpec, RoadNetwork};
use crate::plans::{
    mine_router_costs, mine_router_costs_imputed, AgentId, AgentPlanSet, BaselineRecord,
    RouterCostTable,
};
use crate::routing::{candidate_routes, shortest_route, CostMode};
use crate::seeds;

pub const DEFAULT_BASELINE_RUNS: usize = 100;
pub const DEFAULT_SEEDS: usize = 5;
pub const DEFAULT_HORIZON_TICKS: u32 = 1800;
pub const DEFAULT_LOAD_HORIZON_TICKS: u32 = 800;

/// β from 1.0 down to 0.0 in steps of 0.1.
pub fn default_betas() -> Vec<f64> {
    (0..=10).rev().map(|i| i as f64 / 10.0).collect()
}

/// 100, 200, ..., 1500 vehicles.
pub fn default_loads() -> Vec<usize> {
    (1..=15).map(|i| i * 100).collect()
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkSource {
    File(PathBuf),
    Grid(GridSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopulationSource {
    File(PathBuf),
    Records(Vec<PopulationRecord>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OriginModel {
    /// Origins weighted by district population.
    Districts {
        population: PopulationSource,
        #[serde(default = "default_cell_size")]
        cell_size: f64,
    },
    /// Origins uniform over spawnable streets.
    Uniform,
}

fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE
}

/// A network and a fleet size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSetting {
    pub label: String,
    pub network: NetworkSource,
    pub vehicles: usize,
    #[serde(default = "default_horizon")]
    pub horizon_ticks: u32,
    #[serde(default = "default_origins")]
    pub origins: OriginModel,
}

fn default_horizon() -> u32 {
    DEFAULT_HORIZON_TICKS
}

fn default_origins() -> OriginModel {
    OriginModel::Uniform
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConstants {
    pub vehicle_length: f64,
    pub min_gap: f64,
    pub tick: f64,
}

impl Default for SimConstants {
    fn default() -> Self {
        SimConstants {
            vehicle_length: DEFAULT_VEHICLE_LENGTH,
            min_gap: DEFAULT_MIN_GAP,
            tick: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConstants {
    pub fanout: usize,
    pub max_iterations: usize,
    pub alpha: f64,
}

impl Default for OptimizerConstants {
    fn default() -> Self {
        OptimizerConstants {
            fanout: crate::collective::DEFAULT_FANOUT,
            max_iterations: crate::collective::DEFAULT_MAX_ITERATIONS,
            alpha: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaSweepConfig {
    pub betas: Vec<f64>,
    pub seeds: usize,
}

impl Default for BetaSweepConfig {
    fn default() -> Self {
        BetaSweepConfig {
            betas: default_betas(),
            seeds: DEFAULT_SEEDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSweepConfig {
    /// Label of the setting whose network is swept.
    pub setting: String,
    #[serde(default = "default_loads")]
    pub loads: Vec<usize>,
    #[serde(default = "default_load_betas")]
    pub betas: Vec<f64>,
    #[serde(default = "default_seed_count")]
    pub seeds: usize,
    #[serde(default = "default_load_horizon")]
    pub horizon_ticks: u32,
}

fn default_load_betas() -> Vec<f64> {
    vec![0.0, 1.0]
}

fn default_seed_count() -> usize {
    DEFAULT_SEEDS
}

fn default_load_horizon() -> u32 {
    DEFAULT_LOAD_HORIZON_TICKS
}

fn default_baseline_runs() -> usize {
    DEFAULT_BASELINE_RUNS
}

/// Top-level JSON configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub settings: Vec<TrafficSetting>,
    #[serde(default = "default_baseline_runs")]
    pub baseline_runs: usize,
    /// Fill (agent, router) pairs with no completed baseline trip using the
    /// router mean instead of failing.
    #[serde(default)]
    pub impute_missing_costs: bool,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub sim: SimConstants,
    #[serde(default)]
    pub optimizer: OptimizerConstants,
    #[serde(default)]
    pub beta_sweep: BetaSweepConfig,
    #[serde(default)]
    pub load_sweep: Option<LoadSweepConfig>,
}

impl ExperimentConfig {
    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("config {}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for s in &mut self.settings {
            if let NetworkSource::File(p) = &mut s.network {
                fix(p);
            }
            if let OriginModel::Districts {
                population: PopulationSource::File(p),
                ..
            } = &mut s.origins
            {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut labels = HashSet::new();
        for s in &self.settings {
            if !labels.insert(s.label.as_str()) {
                return Err(Error::Config(format!("duplicate setting label \"{}\"", s.label)));
            }
            if s.vehicles == 0 || s.horizon_ticks == 0 {
                return Err(Error::Config(format!(
                    "setting \"{}\" needs at least one vehicle and one tick",
                    s.label
                )));
            }
            if s.label.contains('@') {
                return Err(Error::Config(format!("setting label \"{}\" may not contain '@'", s.label)));
            }
        }
        for &b in &self.beta_sweep.betas {
            Weights::new(self.optimizer.alpha, b)?;
        }
        if let Some(ls) = &self.load_sweep {
            if !labels.contains(ls.setting.as_str()) {
                return Err(Error::Config(format!(
                    "load sweep refers to unknown setting \"{}\"",
                    ls.setting
                )));
            }
            for &b in &ls.betas {
                Weights::new(self.optimizer.alpha, b)?;
            }
        }
        if self.baseline_runs == 0 {
            return Err(Error::Config("baseline_runs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn setting(&self, label: &str) -> Result<&TrafficSetting> {
        self.settings
            .iter()
            .find(|s| s.label == label)
            .ok_or_else(|| Error::Config(format!("unknown setting \"{label}\"")))
    }

    pub fn context(&self) -> RunContext {
        RunContext {
            master_seed: self.master_seed,
            sim: self.sim,
            optimizer: self.optimizer,
            workers: self.workers,
            baseline_runs: self.baseline_runs,
            impute_missing_costs: self.impute_missing_costs,
        }
    }
}

/// Constants shared by every run of a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunContext {
    pub master_seed: u64,
    pub sim: SimConstants,
    pub optimizer: OptimizerConstants,
    pub workers: Option<usize>,
    pub baseline_runs: usize,
    pub impute_missing_costs: bool,
}

impl RunContext {
    pub fn new(master_seed: u64) -> Self {
        RunContext {
            master_seed,
            sim: SimConstants::default(),
            optimizer: OptimizerConstants::default(),
            workers: None,
            baseline_runs: DEFAULT_BASELINE_RUNS,
            impute_missing_costs: false,
        }
    }

    fn sim_config(&self, horizon_ticks: u32) -> SimConfig {
        SimConfig {
            horizon_ticks,
            vehicle_length: self.sim.vehicle_length,
            min_gap: self.sim.min_gap,
            tick: self.sim.tick,
            record_occupancy: false,
        }
    }
}

// ---------------------------------------------------------------------------
// Prepared settings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Origins {
    Districts(DistrictGrid),
    Uniform,
}

/// A setting with its network loaded and districts built.
#[derive(Debug, Clone)]
pub struct PreparedSetting {
    pub label: String,
    pub net: Arc<RoadNetwork>,
    pub vehicles: usize,
    pub horizon_ticks: u32,
    pub origins: Origins,
}

impl PreparedSetting {
    pub fn new(
        label: impl Into<String>,
        net: Arc<RoadNetwork>,
        vehicles: usize,
        horizon_ticks: u32,
        origins: Origins,
    ) -> Self {
        PreparedSetting {
            label: label.into(),
            net,
            vehicles,
            horizon_ticks,
            origins,
        }
    }

    pub fn prepare(setting: &TrafficSetting, sim: &SimConstants) -> Result<Self> {
        let net = match &setting.network {
            NetworkSource::File(p) => load_network(p)?,
            NetworkSource::Grid(spec) => spec.build()?,
        };
        let origins = match &setting.origins {
            OriginModel::Uniform => Origins::Uniform,
            OriginModel::Districts {
                population,
                cell_size,
            } => {
                let records = match population {
                    PopulationSource::Records(r) => r.clone(),
                    PopulationSource::File(p) => {
                        let f = fs::File::open(p).map_err(|e| Error::io(p, e))?;
                        read_population_csv(f)?
                    }
                };
                Origins::Districts(build_districts(&records, &net, *cell_size, sim.vehicle_length)?)
            }
        };
        Ok(PreparedSetting {
            label: setting.label.clone(),
            net: Arc::new(net),
            vehicles: setting.vehicles,
            horizon_ticks: setting.horizon_ticks,
            origins,
        })
    }

    /// Same network at another fleet size, labelled `label@vehicles`.
    pub fn with_load(&self, vehicles: usize, horizon_ticks: u32) -> Self {
        PreparedSetting {
            label: format!("{}@{vehicles}", self.label),
            net: Arc::clone(&self.net),
            vehicles,
            horizon_ticks,
            origins: Origins::Uniform,
        }
    }

    pub fn sample_trips(&self, seed: u64, vehicle_length: f64) -> Result<Vec<Trip>> {
        match &self.origins {
            Origins::Districts(grid) => sample_trips(grid, &self.net, self.vehicles, seed, vehicle_length),
            Origins::Uniform => sample_uniform_trips(&self.net, self.vehicles, seed, vehicle_length),
        }
    }
}

// ---------------------------------------------------------------------------
// Worker pool
// ---------------------------------------------------------------------------

/// Maps `f` over `items` on at most `workers` threads, keeping input order.
fn map_ordered<T, R, F>(workers: Option<usize>, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || items.par_iter().map(&f).collect();
        match workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map(|pool| pool.install(run))
                .unwrap_or_else(|_| items.iter().map(&f).collect()),
            None => run(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = workers;
        items.iter().map(f).collect()
    }
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// Runs without optimization: every vehicle uses a uniformly drawn router
/// for its trips, and each completed first trip is logged.
pub fn run_baselines(
    setting: &PreparedSetting,
    n_runs: usize,
    seed0: u64,
    ctx: &RunContext,
) -> Result<Vec<BaselineRecord>> {
    if n_runs == 0 {
        return Err(Error::Config("at least one baseline run is required".into()));
    }
    let runs: Vec<usize> = (0..n_runs).collect();
    let logs = map_ordered(ctx.workers, &runs, |&r| {
        baseline_run(setting, seeds::SeedHasher::new(seed0).u64(r as u64).finish(), ctx)
    });
    let mut out = Vec::new();
    for log in logs {
        out.extend(log?);
    }
    Ok(out)
}

fn baseline_run(setting: &PreparedSetting, seed: u64, ctx: &RunContext) -> Result<Vec<BaselineRecord>> {
    let net = &*setting.net;
    let trips = setting
        .sample_trips(seeds::stream(seed, "demand"), ctx.sim.vehicle_length)
        .map_err(|e| e.at_stage("demand"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::stream(seed, "routers"));
    let vehicles = trips
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let router = CostMode::ALL[rng.gen_range(0..3)];
            let route = shortest_route(net, t.origin, t.destination, router)?;
            Ok(VehicleSpec {
                id: i as u32,
                route,
                router,
                respawn_router: router,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at_stage("routing"))?;
    let out = run_seeded(
        net,
        vehicles,
        ctx.sim_config(setting.horizon_ticks),
        seeds::stream(seed, "sim"),
    )
    .map_err(|e| e.at_stage("simulate"))?;
    Ok(out
        .first_trips()
        .map(|t| BaselineRecord {
            agent: t.vehicle,
            router: t.router,
            overhead: t.overhead,
        })
        .collect())
}

/// Baselines followed by cost mining for one setting.
pub fn mine_setting_costs(setting: &PreparedSetting, ctx: &RunContext) -> Result<RouterCostTable> {
    let seed0 = seeds::SeedHasher::new(ctx.master_seed)
        .str(&setting.label)
        .str("baseline")
        .finish();
    let records = run_baselines(setting, ctx.baseline_runs, seed0, ctx)?;
    if ctx.impute_missing_costs {
        mine_router_costs_imputed(&records, setting.vehicles as u32)
    } else {
        let table = mine_router_costs(&records)?;
        let missing = table.missing_agents(setting.vehicles as u32);
        if missing.is_empty() {
            Ok(table)
        } else {
            Err(Error::Mining(format!(
                "{} agent(s) never completed a baseline trip, e.g. {:?}",
                missing.len(),
                &missing[..missing.len().min(5)]
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// Single runs
// ---------------------------------------------------------------------------

/// Fractions of agents per router, in [`CostMode::ALL`] order.
pub fn router_distribution(selections: &Selections) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for r in selections.routers() {
        counts[r.index()] += 1;
    }
    let n = selections.len().max(1) as f64;
    counts.map(|c| c as f64 / n)
}

/// Simulator invariants observed during a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimChecks {
    pub trips: usize,
    pub min_overhead: f64,
    pub population_constant: bool,
}

impl SimChecks {
    pub fn of(out: &SimOutput, vehicles: usize) -> Self {
        SimChecks {
            trips: out.trips.len(),
            min_overhead: out.trips.iter().map(|t| t.overhead).fold(f64::INFINITY, f64::min),
            population_constant: out.vehicles_per_tick.iter().all(|&n| n as usize == vehicles),
        }
    }
}

/// Metrics of one sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub setting: String,
    pub vehicles: usize,
    pub beta: f64,
    pub alpha: f64,
    pub seed: usize,
    pub local_cost: f64,
    pub global_cost: f64,
    /// `None` when no first trip completed.
    pub mean_overhead: Option<f64>,
    pub router_distribution: [f64; 3],
    pub iterations: usize,
    /// `"ok"` or `"failed: <stage> ..."`.
    pub status: String,
    pub checks: SimChecks,
}

impl RunResult {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(setting: &PreparedSetting, weights: Weights, seed: usize, err: &Error) -> Self {
        RunResult {
            setting: setting.label.clone(),
            vehicles: setting.vehicles,
            beta: weights.beta,
            alpha: weights.alpha,
            seed,
            local_cost: f64::NAN,
            global_cost: f64::NAN,
            mean_overhead: None,
            router_distribution: [f64::NAN; 3],
            iterations: 0,
            status: format!("failed: {err}").replace(['\n', ','], ";"),
            checks: SimChecks::default(),
        }
    }
}

/// Everything produced by one run.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub result: RunResult,
    pub plan_sets: Vec<AgentPlanSet>,
    pub outcome: OptimizeOutcome,
    pub sim: SimOutput,
}

/// Seeds of one run: demand and respawns follow `replicate`, the tree
/// follows `tree`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSeeds {
    pub index: usize,
    pub replicate: u64,
    pub tree: u64,
}

impl RunSeeds {
    pub fn for_cell(master: u64, label: &str, beta_index: usize, seed_index: usize) -> Self {
        RunSeeds {
            index: seed_index,
            replicate: seeds::replicate_seed(master, label, seed_index),
            tree: seeds::cell_seed(master, label, beta_index, seed_index),
        }
    }
}

/// Builds every agent's three plans from its trip.
pub fn build_plan_sets(
    net: &RoadNetwork,
    trips: &[Trip],
    costs: &RouterCostTable,
    horizon: f64,
    vehicle_length: f64,
) -> Result<Vec<AgentPlanSet>> {
    trips
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let agent = i as AgentId;
            let cost = costs
                .get(agent)
                .ok_or_else(|| Error::Config(format!("cost table has no entry for agent {agent}")))?;
            let routes = candidate_routes(net, t.origin, t.destination)?;
            Ok(AgentPlanSet::from_routes(net, agent, routes, cost, horizon, vehicle_length))
        })
        .collect()
}

/// Demand, candidate routes, plans, one optimization at t = 0, simulation,
/// metrics.
pub fn run_setting_detailed(
    setting: &PreparedSetting,
    weights: Weights,
    seeds: RunSeeds,
    costs: &RouterCostTable,
    ctx: &RunContext,
    record_occupancy: bool,
) -> Result<RunArtifacts> {
    let net = &*setting.net;
    let vl = ctx.sim.vehicle_length;
    let trips = setting
        .sample_trips(seeds::stream(seeds.replicate, "demand"), vl)
        .map_err(|e| e.at_stage("demand"))?;
    let horizon = setting.horizon_ticks as f64 * ctx.sim.tick;
    let plan_sets =
        build_plan_sets(net, &trips, costs, horizon, vl).map_err(|e| e.at_stage("plans"))?;

    let config = OptimizerConfig {
        weights,
        seed: seeds.tree,
        max_iterations: ctx.optimizer.max_iterations,
        fanout: ctx.optimizer.fanout,
    };
    let outcome = optimize(&plan_sets, &config).map_err(|e| e.at_stage("optimize"))?;

    let vehicles = plan_sets
        .iter()
        .zip(&outcome.selections.selected)
        .map(|(set, &j)| VehicleSpec {
            id: set.agent,
            route: set.plans[j].route.clone(),
            router: CostMode::ALL[j],
            respawn_router: set.preferred_router(),
        })
        .collect();
    let mut sim_cfg = ctx.sim_config(setting.horizon_ticks);
    sim_cfg.record_occupancy = record_occupancy;
    let respawn_seed = seeds::stream(seeds.replicate, "sim");
    let sim = run_seeded(net, vehicles, sim_cfg, respawn_seed).map_err(|e| e.at_stage("simulate"))?;

    let last = *outcome.trace.last().expect("trace has the bootstrap entry");
    let result = RunResult {
        setting: setting.label.clone(),
        vehicles: setting.vehicles,
        beta: weights.beta,
        alpha: weights.alpha,
        seed: seeds.index,
        local_cost: last.local_cost,
        global_cost: last.global_cost,
        mean_overhead: crate::mesosim::mean_first_trip_overhead(&sim),
        router_distribution: router_distribution(&outcome.selections),
        iterations: outcome.iterations,
        status: "ok".into(),
        checks: SimChecks::of(&sim, setting.vehicles),
    };
    Ok(RunArtifacts {
        result,
        plan_sets,
        outcome,
        sim,
    })
}

pub fn run_setting(
    setting: &PreparedSetting,
    weights: Weights,
    seeds: RunSeeds,
    costs: &RouterCostTable,
    ctx: &RunContext,
) -> Result<RunResult> {
    run_setting_detailed(setting, weights, seeds, costs, ctx, false).map(|a| a.result)
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Per-metric min/max used for normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRange {
    pub min: f64,
    pub max: f64,
}

impl MetricRange {
    fn of(values: impl Iterator<Item = f64>) -> Option<Self> {
        values.filter(|v| v.is_finite()).fold(None, |acc, v| match acc {
            None => Some(MetricRange { min: v, max: v }),
            Some(r) => Some(MetricRange {
                min: r.min.min(v),
                max: r.max.max(v),
            }),
        })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    /// `(v - min) / range`, or 0 when the range is zero.
    pub fn normalize(&self, v: f64) -> f64 {
        let r = self.range();
        if r > 0.0 {
            (v - self.min) / r
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, n: f64) -> f64 {
        self.min + n * self.range()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub local_cost: MetricRange,
    pub global_cost: MetricRange,
    pub mean_overhead: MetricRange,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepTable {
    pub rows: Vec<RunResult>,
    pub normalization: Option<Normalization>,
}

pub const RESULTS_HEADER: [&str; 12] = [
    "setting",
    "beta",
    "alpha",
    "seed",
    "local_cost",
    "global_cost",
    "mean_overhead",
    "frac_minlength",
    "frac_maxspeed",
    "frac_balanced",
    "iterations",
    "status",
];

fn fmt_metric(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        String::new()
    }
}

fn parse_metric(s: &str) -> Result<f64> {
    if s.is_empty() {
        Ok(f64::NAN)
    } else {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad numeric field \"{s}\"")))
    }
}

/// Fleet size encoded in a load-sweep label (`base@vehicles`).
pub fn load_of_label(label: &str) -> Option<usize> {
    label.rsplit_once('@').and_then(|(_, n)| n.parse().ok())
}

impl SweepTable {
    pub fn new(rows: Vec<RunResult>) -> Self {
        SweepTable {
            rows,
            normalization: None,
        }
    }

    /// Normalized (local, global, overhead) of a row.
    pub fn normalized(&self, row: &RunResult) -> Option<[f64; 3]> {
        let n = self.normalization?;
        Some([
            n.local_cost.normalize(row.local_cost),
            n.global_cost.normalize(row.global_cost),
            n.mean_overhead.normalize(row.mean_overhead.unwrap_or(f64::NAN)),
        ])
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = RESULTS_HEADER.to_vec();
        if self.normalization.is_some() {
            header.extend(["norm_local_cost", "norm_global_cost", "norm_mean_overhead"]);
        }
        out.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                row.setting.clone(),
                row.beta.to_string(),
                row.alpha.to_string(),
                row.seed.to_string(),
                fmt_metric(row.local_cost),
                fmt_metric(row.global_cost),
                fmt_metric(row.mean_overhead.unwrap_or(f64::NAN)),
                fmt_metric(row.router_distribution[0]),
                fmt_metric(row.router_distribution[1]),
                fmt_metric(row.router_distribution[2]),
                row.iterations.to_string(),
                row.status.clone(),
            ];
            if let Some(norm) = self.normalized(row) {
                rec.extend(norm.map(fmt_metric));
            }
            out.write_record(&rec)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads a results CSV (normalized columns, if any, are recomputed on
    /// demand rather than read).
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let header = reader.headers()?.clone();
        if header.iter().take(RESULTS_HEADER.len()).ne(RESULTS_HEADER.iter().copied()) {
            return Err(Error::Parse("results CSV header mismatch".into()));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let f = |i: usize| rec.get(i).unwrap_or("");
            let setting = f(0).to_string();
            rows.push(RunResult {
                vehicles: load_of_label(&setting).unwrap_or(0),
                setting,
                beta: parse_metric(f(1))?,
                alpha: parse_metric(f(2))?,
                seed: f(3)
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad seed \"{}\"", f(3))))?,
                local_cost: parse_metric(f(4))?,
                global_cost: parse_metric(f(5))?,
                mean_overhead: Some(parse_metric(f(6))?).filter(|v| v.is_finite()),
                router_distribution: [parse_metric(f(7))?, parse_metric(f(8))?, parse_metric(f(9))?],
                iterations: f(10).parse().unwrap_or(0),
                status: f(11).to_string(),
                checks: SimChecks::default(),
            });
        }
        Ok(SweepTable::new(rows))
    }

    /// Medians over seeds per (setting, beta), in first-appearance order.
    pub fn medians(&self) -> Vec<MedianRow> {
        let mut groups: Vec<((String, u64), Vec<&RunResult>)> = Vec::new();
        for row in self.rows.iter().filter(|r| r.is_ok()) {
            let key = (row.setting.clone(), row.beta.to_bits());
            match groups.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(row),
                None => groups.push((key, vec![row])),
            }
        }
        groups
            .into_iter()
            .map(|((setting, _), rows)| MedianRow {
                load: rows[0].vehicles,
                beta: rows[0].beta,
                median_overhead: median(rows.iter().filter_map(|r| r.mean_overhead)),
                median_global: median(rows.iter().map(|r| r.global_cost)),
                median_local: median(rows.iter().map(|r| r.local_cost)),
                setting,
            })
            .collect()
    }
}

/// Median of the finite values; NaN when there are none.
pub fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianRow {
    pub setting: String,
    pub load: usize,
    pub beta: f64,
    pub median_overhead: f64,
    pub median_global: f64,
    pub median_local: f64,
}

pub fn write_medians_csv<W: Write>(rows: &[MedianRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["setting", "load", "beta", "median_overhead", "median_global", "median_local"])?;
    for r in rows {
        out.write_record([
            r.setting.clone(),
            r.load.to_string(),
            r.beta.to_string(),
            fmt_metric(r.median_overhead),
            fmt_metric(r.median_global),
            fmt_metric(r.median_local),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// A sweep cell to run.
#[derive(Debug, Clone, Copy)]
struct Cell {
    beta_index: usize,
    beta: f64,
    seed_index: usize,
}

fn run_cells(
    setting: &PreparedSetting,
    betas: &[f64],
    n_seeds: usize,
    costs: &RouterCostTable,
    ctx: &RunContext,
    done: &[RunResult],
) -> Vec<RunResult> {
    let mut cells = Vec::with_capacity(betas.len() * n_seeds);
    for (bi, &beta) in betas.iter().enumerate() {
        for si in 0..n_seeds {
            cells.push(Cell {
                beta_index: bi,
                beta,
                seed_index: si,
            });
        }
    }
    let previous = |c: &Cell| {
        done.iter().find(|r| {
            r.is_ok() && r.setting == setting.label && r.beta == c.beta && r.seed == c.seed_index
        })
    };
    let todo: Vec<Cell> = cells.iter().copied().filter(|c| previous(c).is_none()).collect();
    let fresh = map_ordered(ctx.workers, &todo, |c| {
        let seeds = RunSeeds::for_cell(ctx.master_seed, &setting.label, c.beta_index, c.seed_index);
        let result = Weights::new(ctx.optimizer.alpha, c.beta)
            .and_then(|w| run_setting(setting, w, seeds, costs, ctx));
        result.unwrap_or_else(|e| {
            log::warn!("{} beta={} seed={}: {e}", setting.label, c.beta, c.seed_index);
            let w = Weights {
                alpha: ctx.optimizer.alpha,
                beta: c.beta,
            };
            RunResult::failed(setting, w, c.seed_index, &e)
        })
    });
    let mut fresh = fresh.into_iter();
    let mut rows: Vec<RunResult> = cells
        .iter()
        .map(|c| match previous(c) {
            Some(r) => r.clone(),
            None => fresh.next().expect("one result per pending cell"),
        })
        .collect();
    rows.sort_by(|a, b| b.beta.total_cmp(&a.beta).then(a.seed.cmp(&b.seed)));
    rows
}

/// Every beta in `betas` times `n_seeds` paired seeds; rows sorted by beta
/// descending, then seed. Cells already present (status ok) in `resume`
/// are reused instead of rerun.
pub fn beta_sweep(
    setting: &PreparedSetting,
    betas: &[f64],
    n_seeds: usize,
    costs: &RouterCostTable,
    ctx: &RunContext,
    resume: &[RunResult],
) -> SweepTable {
    SweepTable::new(run_cells(setting, betas, n_seeds, costs, ctx, resume))
}

/// One load of a load sweep with its mined cost table.
pub fn load_sweep(
    base: &PreparedSetting,
    config: &LoadSweepConfig,
    ctx: &RunContext,
    resume: &[RunResult],
) -> Result<SweepTable> {
    let mut rows = Vec::new();
    for &load in &config.loads {
        let setting = base.with_load(load, config.horizon_ticks);
        let costs = mine_setting_costs(&setting, ctx).map_err(|e| e.at_stage("baseline"))?;
        rows.extend(run_cells(&setting, &config.betas, config.seeds, &costs, ctx, resume));
    }
    Ok(SweepTable::new(rows))
}

/// Pools every row of every table and min-max normalizes each metric.
pub fn normalize_cross_setting(tables: &[SweepTable]) -> SweepTable {
    let rows: Vec<RunResult> = tables.iter().flat_map(|t| t.rows.iter().cloned()).collect();
    let ok = || rows.iter().filter(|r| r.is_ok());
    let zero = MetricRange { min: 0.0, max: 0.0 };
    let normalization = Normalization {
        local_cost: MetricRange::of(ok().map(|r| r.local_cost)).unwrap_or(zero),
        global_cost: MetricRange::of(ok().map(|r| r.global_cost)).unwrap_or(zero),
        mean_overhead: MetricRange::of(ok().filter_map(|r| r.mean_overhead)).unwrap_or(zero),
    };
    SweepTable {
        rows,
        normalization: Some(normalization),
    }
}

/// Long-format rows `setting,load,beta,seed,metric,raw,normalized` for
/// box plots over beta, median curves over load and router shares.
pub fn write_report<W: Write>(table: &SweepTable, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["setting", "load", "beta", "seed", "metric", "raw", "normalized"])?;
    for row in table.rows.iter().filter(|r| r.is_ok()) {
        let norm = table.normalized(row);
        let load = if row.vehicles > 0 { row.vehicles.to_string() } else { String::new() };
        let metrics = [
            ("local_cost", row.local_cost, norm.map(|n| n[0])),
            ("global_cost", row.global_cost, norm.map(|n| n[1])),
            ("mean_overhead", row.mean_overhead.unwrap_or(f64::NAN), norm.map(|n| n[2])),
            ("frac_minlength", row.router_distribution[0], None),
            ("frac_maxspeed", row.router_distribution[1], None),
            ("frac_balanced", row.router_distribution[2], None),
        ];
        for (name, raw, n) in metrics {
            out.write_record([
                row.setting.clone(),
                load.clone(),
                row.beta.to_string(),
                row.seed.to_string(),
                name.to_string(),
                fmt_metric(raw),
                n.map(fmt_metric).unwrap_or_default(),
            ])?;
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads previously written results for `--resume`; a missing file is an
/// empty table.
pub fn read_existing(path: &Path) -> Result<Vec<RunResult>> {
    match fs::File::open(path) {
        Ok(f) => Ok(SweepTable::read_csv(f)?.rows),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(Error::io(path, e)),
    }
}

/// Router costs keyed by agent, for callers that build tables by hand.
pub fn cost_table_from(costs: impl IntoIterator<Item = (AgentId, [f64; 3])>) -> RouterCostTable {
    RouterCostTable::from_costs(costs.into_iter().collect::<BTreeMap<_, _>>())
}

/// Convenience wrapper: trace of a run, for CSV dumps.
pub fn trace_of(artifacts: &RunArtifacts) -> &CostTrace {
    &artifacts.outcome.trace
}
