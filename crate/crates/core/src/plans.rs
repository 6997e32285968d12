//! Routes encoded as per-street utilization vectors, and router costs
//! mined from baseline runs.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{EdgeIx, RoadNetwork};
use crate::routing::{CostMode, Route};

pub type AgentId = u32;

/// Sparse real vector over the network's edge ordering. Entries are sorted
/// by index and never repeat.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVec {
    pub dim: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn new(dim: usize, mut entries: Vec<(u32, f64)>) -> Self {
        entries.sort_by_key(|&(i, _)| i);
        debug_assert!(entries.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(entries.iter().all(|&(i, _)| (i as usize) < dim));
        SparseVec { dim, entries }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(i as u32), |&(j, _)| j)
            .map(|k| self.entries[k].1)
            .unwrap_or(0.0)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        self.add_to(&mut v);
        v
    }

    #[inline]
    pub fn add_to(&self, dense: &mut [f64]) {
        for &(i, x) in &self.entries {
            dense[i as usize] += x;
        }
    }

    #[inline]
    pub fn sub_from(&self, dense: &mut [f64]) {
        for &(i, x) in &self.entries {
            dense[i as usize] -= x;
        }
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|&(_, x)| x).sum()
    }
}

/// Expected utilization of each street on `route` over a planning horizon.
///
/// Per route edge: `(vehicle_length / length) * min(1, free_flow_time / horizon)`.
/// The space fraction is clamped to 1 on streets shorter than a vehicle.
pub fn encode_plan(
    net: &RoadNetwork,
    route: &Route,
    horizon: f64,
    vehicle_length: f64,
) -> SparseVec {
    assert!(horizon > 0.0 && vehicle_length > 0.0);
    let entries = route
        .edges
        .iter()
        .map(|&e| {
            let edge = net.edge(e);
            let mut space = vehicle_length / edge.length;
            if space > 1.0 {
                log::debug!("edge {} shorter than a vehicle; clamping occupancy", edge.id);
                space = 1.0;
            }
            let time = (edge.free_flow_time() / horizon).min(1.0);
            (e.0, space * time)
        })
        .collect();
    SparseVec::new(net.edge_count(), entries)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub utilization: SparseVec,
    pub cost: f64,
    pub router: CostMode,
    pub route: Route,
}

/// The three candidate plans of one agent, indexed by [`CostMode::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct AgentPlanSet {
    pub agent: AgentId,
    pub plans: [Plan; 3],
    pub preferred: usize,
}

impl AgentPlanSet {
    pub fn new(agent: AgentId, plans: [Plan; 3]) -> Self {
        debug_assert!(plans.iter().enumerate().all(|(i, p)| p.router.index() == i));
        let preferred = argmin_cost(plans.iter().map(|p| p.cost));
        AgentPlanSet {
            agent,
            plans,
            preferred,
        }
    }

    /// Encodes three candidate routes with their router costs.
    pub fn from_routes(
        net: &RoadNetwork,
        agent: AgentId,
        routes: [Route; 3],
        costs: [f64; 3],
        horizon: f64,
        vehicle_length: f64,
    ) -> Self {
        let mut i = 0;
        let plans = routes.map(|route| {
            let plan = Plan {
                utilization: encode_plan(net, &route, horizon, vehicle_length),
                cost: costs[i],
                router: CostMode::ALL[i],
                route,
            };
            i += 1;
            plan
        });
        Self::new(agent, plans)
    }

    pub fn preferred_router(&self) -> CostMode {
        CostMode::ALL[self.preferred]
    }
}

/// Index of the smallest value; earlier index wins ties.
pub fn argmin_cost(costs: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, c) in costs.into_iter().enumerate() {
        if c < best.1 {
            best = (i, c);
        }
    }
    best.0
}

/// One logged first trip from a baseline run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub agent: AgentId,
    pub router: CostMode,
    #[serde(rename = "trip_overhead")]
    pub overhead: f64,
}

/// Normalized router cost per agent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RouterCostTable {
    costs: BTreeMap<AgentId, [f64; 3]>,
}

impl RouterCostTable {
    pub fn from_costs(costs: BTreeMap<AgentId, [f64; 3]>) -> Self {
        RouterCostTable { costs }
    }

    pub fn get(&self, agent: AgentId) -> Option<[f64; 3]> {
        self.costs.get(&agent).copied()
    }

    pub fn cost(&self, agent: AgentId, router: CostMode) -> Option<f64> {
        self.costs.get(&agent).map(|c| c[router.index()])
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn agents(&self) -> impl Iterator<Item = AgentId> + '_ {
        self.costs.keys().copied()
    }

    /// Agents in `0..n` without an entry.
    pub fn missing_agents(&self, n: u32) -> Vec<AgentId> {
        (0..n).filter(|a| !self.costs.contains_key(a)).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["agent", "router", "cost"])?;
        for (agent, costs) in &self.costs {
            for mode in CostMode::ALL {
                out.write_record([
                    agent.to_string(),
                    mode.to_string(),
                    costs[mode.index()].to_string(),
                ])?;
            }
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            agent: AgentId,
            router: CostMode,
            cost: f64,
        }
        let mut partial: BTreeMap<AgentId, [Option<f64>; 3]> = BTreeMap::new();
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: Row = row?;
            partial.entry(row.agent).or_default()[row.router.index()] = Some(row.cost);
        }
        let mut costs = BTreeMap::new();
        let mut gaps = Vec::new();
        for (agent, c) in partial {
            match c {
                [Some(a), Some(b), Some(d)] => {
                    costs.insert(agent, [a, b, d]);
                }
                _ => gaps.extend(
                    CostMode::ALL
                        .iter()
                        .filter(|m| c[m.index()].is_none())
                        .map(|m| format!("({agent}, {m})")),
                ),
            }
        }
        if !gaps.is_empty() {
            return Err(Error::Mining(format!("cost table lacks {}", gaps.join(", "))));
        }
        Ok(RouterCostTable { costs })
    }
}

/// Mean overhead per (agent, router), min-max normalized over the whole table.
///
/// When every mean is identical the table is all zeros.
pub fn mine_router_costs(records: &[BaselineRecord]) -> Result<RouterCostTable> {
    let mut acc: BTreeMap<AgentId, [(f64, u32); 3]> = BTreeMap::new();
    for r in records {
        let slot = &mut acc.entry(r.agent).or_default()[r.router.index()];
        slot.0 += r.overhead;
        slot.1 += 1;
    }
    let gaps: Vec<String> = acc
        .iter()
        .flat_map(|(agent, s)| {
            CostMode::ALL
                .into_iter()
                .filter(|m| s[m.index()].1 == 0)
                .map(move |m| format!("({agent}, {m})"))
        })
        .collect();
    if acc.is_empty() {
        return Err(Error::Mining("no baseline records".into()));
    }
    if !gaps.is_empty() {
        return Err(Error::Mining(format!(
            "no baseline record for {}",
            gaps.join(", ")
        )));
    }
    let means: BTreeMap<AgentId, [f64; 3]> = acc
        .into_iter()
        .map(|(a, s)| (a, s.map(|(sum, n)| sum / n as f64)))
        .collect();
    let (lo, hi) = means
        .values()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    let costs = means
        .into_iter()
        .map(|(a, m)| {
            let norm = m.map(|v| if range > 0.0 { (v - lo) / range } else { 0.0 });
            (a, norm)
        })
        .collect();
    Ok(RouterCostTable { costs })
}

/// Like [`mine_router_costs`] for agents `0..n_agents`, but a missing
/// (agent, router) mean is filled with that router's mean over the agents
/// that have one. Fails only when a router has no record at all.
pub fn mine_router_costs_imputed(
    records: &[BaselineRecord],
    n_agents: u32,
) -> Result<RouterCostTable> {
    let mut router_acc = [(0.0, 0u32); 3];
    let mut acc: BTreeMap<AgentId, [(f64, u32); 3]> =
        (0..n_agents).map(|a| (a, [(0.0, 0); 3])).collect();
    for r in records {
        if let Some(slot) = acc.get_mut(&r.agent) {
            slot[r.router.index()].0 += r.overhead;
            slot[r.router.index()].1 += 1;
        }
    }
    for s in acc.values() {
        for (k, &(sum, n)) in s.iter().enumerate() {
            if n > 0 {
                router_acc[k].0 += sum / n as f64;
                router_acc[k].1 += 1;
            }
        }
    }
    if let Some(k) = router_acc.iter().position(|&(_, n)| n == 0) {
        return Err(Error::Mining(format!(
            "no baseline record for router {}",
            CostMode::ALL[k]
        )));
    }
    let fill = router_acc.map(|(sum, n)| sum / n as f64);
    let mut imputed = 0;
    let mut synthetic = Vec::new();
    for (&agent, s) in &acc {
        for mode in CostMode::ALL {
            let (sum, n) = s[mode.index()];
            let mean = if n > 0 {
                sum / n as f64
            } else {
                imputed += 1;
                fill[mode.index()]
            };
            synthetic.push(BaselineRecord {
                agent,
                router: mode,
                overhead: mean,
            });
        }
    }
    if imputed > 0 {
        log::warn!("imputed {imputed} missing (agent, router) cost(s) with router means");
    }
    mine_router_costs(&synthetic)
}

pub fn write_baseline_csv<W: Write>(records: &[BaselineRecord], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["agent", "router", "trip_overhead"])?;
    for r in records {
        out.write_record([r.agent.to_string(), r.router.to_string(), r.overhead.to_string()])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_baseline_csv<R: Read>(r: R) -> Result<Vec<BaselineRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Debug dump: `agent,plan,edge,utilization`, one row per nonzero entry.
pub fn write_plan_dump<W: Write>(net: &RoadNetwork, sets: &[AgentPlanSet], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["agent", "plan", "edge", "utilization"])?;
    for set in sets {
        for plan in &set.plans {
            for &(e, u) in &plan.utilization.entries {
                out.write_record([
                    set.agent.to_string(),
                    plan.router.to_string(),
                    net.edge(EdgeIx(e)).id.clone(),
                    u.to_string(),
                ])?;
            }
        }
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
