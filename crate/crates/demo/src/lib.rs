//! Browser demo: a small arterial grid where the altruism level can be
//! varied and its effect on street load and trip times inspected.
//!
//! [`Demo`] is plain Rust and is what the tests exercise; [`WasmDemo`]
//! wraps it for JavaScript with JSON strings in and out.

use std::sync::Arc;

use altruroute_core::collective::Weights;
use altruroute_core::experiment::{
    mine_setting_costs, run_setting_detailed, Origins, PreparedSetting, RunContext, RunSeeds,
};
use altruroute_core::mesosim::edge_capacity;
use altruroute_core::network::GridSpec;
use altruroute_core::plans::RouterCostTable;
use altruroute_core::routing::{candidate_routes, CostMode};
use altruroute_core::seeds;
use altruroute_core::{Error, Result};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoParams {
    pub size: usize,
    pub vehicles: usize,
    pub horizon_ticks: u32,
    pub baseline_runs: usize,
    pub seed: u64,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams {
            size: 8,
            vehicles: 300,
            horizon_ticks: 900,
            baseline_runs: 12,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EdgeView {
    pub id: String,
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub max_speed: f64,
    pub lanes: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunView {
    pub beta: f64,
    pub local_cost: f64,
    pub global_cost: f64,
    pub mean_overhead: Option<f64>,
    pub router_distribution: [f64; 3],
    pub iterations: usize,
    /// Expected utilization per edge from the selected plans.
    pub utilization: Vec<f64>,
    /// Mean occupancy over the run divided by capacity, per edge.
    pub load: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub beta: f64,
    pub local_cost: f64,
    pub global_cost: f64,
    pub mean_overhead: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RouteView {
    pub router: &'static str,
    pub edges: Vec<usize>,
    pub length_m: f64,
    pub free_flow_s: f64,
}

pub struct Demo {
    setting: PreparedSetting,
    costs: RouterCostTable,
    ctx: RunContext,
}

impl Demo {
    pub fn new(params: &DemoParams) -> Result<Self> {
        if !(2..=20).contains(&params.size) {
            return Err(Error::Config("grid size must be between 2 and 20".into()));
        }
        let spec = GridSpec {
            arterial_every: Some(3),
            arterial_speed: Some(20.0),
            arterial_lanes: Some(2),
            jitter: 0.2,
            seed: params.seed,
            ..GridSpec::uniform(params.size, params.size, 100.0, 10.0, 1)
        };
        let net = Arc::new(spec.build()?);
        let setting = PreparedSetting::new(
            "demo",
            net,
            params.vehicles.max(1),
            params.horizon_ticks.max(1),
            Origins::Uniform,
        );
        let mut ctx = RunContext::new(params.seed);
        ctx.baseline_runs = params.baseline_runs.max(1);
        ctx.impute_missing_costs = true;
        let costs = mine_setting_costs(&setting, &ctx)?;
        Ok(Demo {
            setting,
            costs,
            ctx,
        })
    }

    pub fn edges(&self) -> Vec<EdgeView> {
        let net = &*self.setting.net;
        net.edge_indices()
            .map(|e| {
                let edge = net.edge(e);
                let a = net.node(net.edge_from(e));
                let b = net.node(net.edge_to(e));
                EdgeView {
                    id: edge.id.clone(),
                    x1: a.x,
                    y1: a.y,
                    x2: b.x,
                    y2: b.y,
                    max_speed: edge.max_speed,
                    lanes: edge.lanes,
                }
            })
            .collect()
    }

    pub fn run(&self, beta: f64, seed_index: usize) -> Result<RunView> {
        let weights = Weights::new(0.0, beta)?;
        let seeds = RunSeeds::for_cell(self.ctx.master_seed, &self.setting.label, 0, seed_index);
        let art = run_setting_detailed(&self.setting, weights, seeds, &self.costs, &self.ctx, true)?;
        let net = &*self.setting.net;
        let mut load = vec![0.0; net.edge_count()];
        for &(_, e, n) in art.sim.occupancy.as_deref().unwrap_or_default() {
            load[e.index()] += n as f64;
        }
        let ticks = self.setting.horizon_ticks as f64;
        for (e, l) in net.edge_indices().zip(load.iter_mut()) {
            let edge = net.edge(e);
            let cap = edge_capacity(edge.length, edge.lanes, self.ctx.sim.vehicle_length, self.ctx.sim.min_gap);
            *l /= ticks * cap as f64;
        }
        let r = art.result;
        Ok(RunView {
            beta,
            local_cost: r.local_cost,
            global_cost: r.global_cost,
            mean_overhead: r.mean_overhead,
            router_distribution: r.router_distribution,
            iterations: r.iterations,
            utilization: art.outcome.selections.aggregate,
            load,
        })
    }

    pub fn beta_curve(&self, betas: &[f64], seed_index: usize) -> Result<Vec<CurvePoint>> {
        betas
            .iter()
            .map(|&beta| {
                let r = self.run(beta, seed_index)?;
                Ok(CurvePoint {
                    beta,
                    local_cost: r.local_cost,
                    global_cost: r.global_cost,
                    mean_overhead: r.mean_overhead,
                })
            })
            .collect()
    }

    /// The three routers' routes for a random spawnable street pair.
    pub fn routes(&self, seed: u64) -> Result<Vec<RouteView>> {
        let net = &*self.setting.net;
        let spawnable = net.spawnable_edges(self.ctx.sim.vehicle_length);
        let h = |k: u64| seeds::SeedHasher::new(seed).u64(k).finish() as usize % spawnable.len();
        let origin = spawnable[h(0)];
        let mut dest = spawnable[h(1)];
        if dest == origin {
            dest = spawnable[(h(1) + 1) % spawnable.len()];
        }
        let routes = candidate_routes(net, origin, dest)?;
        Ok(CostMode::ALL
            .iter()
            .zip(routes)
            .map(|(m, r)| RouteView {
                router: m.as_str(),
                edges: r.edges.iter().map(|e| e.index()).collect(),
                length_m: r.total_length,
                free_flow_s: r.free_flow_time,
            })
            .collect())
    }
}

fn js_err(e: impl std::fmt::Display) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, JsValue> {
    serde_json::to_string(v).map_err(js_err)
}

#[wasm_bindgen]
pub struct WasmDemo(Demo);

#[wasm_bindgen]
impl WasmDemo {
    /// Builds the network and mines router costs; `params` is a JSON
    /// object with any of `size`, `vehicles`, `horizon_ticks`,
    /// `baseline_runs`, `seed`.
    #[wasm_bindgen(constructor)]
    pub fn new(params: &str) -> Result<WasmDemo, JsValue> {
        let params: DemoParams = if params.trim().is_empty() {
            DemoParams::default()
        } else {
            serde_json::from_str(params).map_err(js_err)?
        };
        Demo::new(&params).map(WasmDemo).map_err(js_err)
    }

    pub fn edges(&self) -> Result<String, JsValue> {
        to_json(&self.0.edges())
    }

    pub fn run(&self, beta: f64, seed_index: usize) -> Result<String, JsValue> {
        to_json(&self.0.run(beta, seed_index).map_err(js_err)?)
    }

    #[wasm_bindgen(js_name = betaCurve)]
    pub fn beta_curve(&self, seed_index: usize) -> Result<String, JsValue> {
        let betas: Vec<f64> = (0..=10).rev().map(|i| i as f64 / 10.0).collect();
        to_json(&self.0.beta_curve(&betas, seed_index).map_err(js_err)?)
    }

    pub fn routes(&self, seed: u64) -> Result<String, JsValue> {
        to_json(&self.0.routes(seed).map_err(js_err)?)
    }
}
