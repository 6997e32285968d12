#![allow(dead_code)]

use altruroute_core::network::{Edge, EdgeIx, GridSpec, Node, RoadNetwork};
use altruroute_core::plans::{AgentId, AgentPlanSet, Plan, SparseVec};
use altruroute_core::routing::{CostMode, Route};
use rand::Rng;

/// 10×10 grid, 100 m blocks at 10 m/s, every third line an arterial at
/// 20 m/s with two lanes, nodes jittered so the three routers disagree.
pub fn acceptance_grid() -> GridSpec {
    GridSpec {
        arterial_every: Some(3),
        arterial_speed: Some(20.0),
        arterial_lanes: Some(2),
        jitter: 0.2,
        seed: 7,
        ..GridSpec::uniform(10, 10, 100.0, 10.0, 1)
    }
}

fn dummy_route() -> Route {
    Route {
        edges: vec![EdgeIx(0)],
        total_length: 1.0,
        free_flow_time: 1.0,
    }
}

/// Agent with three dense plan vectors and costs.
pub fn plan_set(agent: AgentId, vecs: [Vec<f64>; 3], costs: [f64; 3]) -> AgentPlanSet {
    let mut k = 0;
    let plans = vecs.map(|v| {
        let dim = v.len();
        let entries = v
            .into_iter()
            .enumerate()
            .filter(|(_, x)| *x != 0.0)
            .map(|(i, x)| (i as u32, x))
            .collect();
        let plan = Plan {
            utilization: SparseVec::new(dim, entries),
            cost: costs[k],
            router: CostMode::ALL[k],
            route: dummy_route(),
        };
        k += 1;
        plan
    });
    AgentPlanSet::new(agent, plans)
}

/// Random instance: sparse-ish nonnegative vectors, costs on a coarse grid
/// so ties occur.
pub fn random_instance<R: Rng>(rng: &mut R, agents: usize, dim: usize) -> Vec<AgentPlanSet> {
    (0..agents)
        .map(|a| {
            let vecs = [(); 3].map(|_| {
                (0..dim)
                    .map(|_| if rng.gen_bool(0.4) { rng.gen_range(0.0..1.0) } else { 0.0 })
                    .collect::<Vec<f64>>()
            });
            let costs = [(); 3].map(|_| rng.gen_range(0..=10) as f64 / 10.0);
            plan_set(a as AgentId, vecs, costs)
        })
        .collect()
}

/// Random strongly connected network: a directed ring through every node
/// plus random chords.
pub fn random_network<R: Rng>(rng: &mut R, n: usize, chords: usize) -> RoadNetwork {
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: format!("v{i}"),
            x: rng.gen_range(0.0..1000.0),
            y: rng.gen_range(0.0..1000.0),
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let mut tries = 0;
    while pairs.len() < n + chords && tries < 1000 {
        tries += 1;
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b && !pairs.contains(&(a, b)) {
            pairs.push((a, b));
        }
    }
    let edges = pairs
        .into_iter()
        .enumerate()
        .map(|(k, (a, b))| Edge {
            id: format!("e{k:03}"),
            from: format!("v{a}"),
            to: format!("v{b}"),
            length: rng.gen_range(1..=50) as f64 * 10.0,
            max_speed: [5.0, 8.3, 13.9, 20.0, 27.8][rng.gen_range(0..5)],
            lanes: rng.gen_range(1..=3),
        })
        .collect();
    RoadNetwork::new(nodes, edges).expect("ring keeps the network strongly connected")
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Random instance with 0/1 vectors, closer to real route plans where a
/// street is either used or not.
pub fn binary_instance<R: Rng>(rng: &mut R, agents: usize, dim: usize) -> Vec<AgentPlanSet> {
    (0..agents)
        .map(|a| {
            let vecs = [(); 3].map(|_| {
                (0..dim)
                    .map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 })
                    .collect::<Vec<f64>>()
            });
            let costs = [(); 3].map(|_| rng.gen_range(0..=10) as f64 / 10.0);
            plan_set(a as AgentId, vecs, costs)
        })
        .collect()
}
