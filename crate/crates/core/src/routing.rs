//! Edge-to-edge Dijkstra routing under the three router cost policies.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Edge, EdgeIx, NodeIx, RoadNetwork};

/// Router cost policy. The declaration order is also the tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMode {
    MinLength,
    MaxSpeed,
    Balanced,
}

impl CostMode {
    pub const ALL: [CostMode; 3] = [CostMode::MinLength, CostMode::MaxSpeed, CostMode::Balanced];

    pub fn as_str(self) -> &'static str {
        match self {
            CostMode::MinLength => "minlength",
            CostMode::MaxSpeed => "maxspeed",
            CostMode::Balanced => "balanced",
        }
    }

    /// Position in [`CostMode::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl fmt::Display for CostMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CostMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "minlength" => Ok(CostMode::MinLength),
            "maxspeed" => Ok(CostMode::MaxSpeed),
            "balanced" => Ok(CostMode::Balanced),
            other => Err(Error::Parse(format!("unknown router \"{other}\""))),
        }
    }
}

#[inline]
pub fn edge_cost(edge: &Edge, mode: CostMode) -> f64 {
    match mode {
        CostMode::MinLength => edge.length,
        CostMode::MaxSpeed => 1.0 / edge.max_speed,
        CostMode::Balanced => edge.length / edge.max_speed,
    }
}

/// An edge path from the origin street to the destination street, both included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub edges: Vec<EdgeIx>,
    pub total_length: f64,
    pub free_flow_time: f64,
}

impl Route {
    /// Builds a route and its totals from an edge list.
    pub fn from_edges(net: &RoadNetwork, edges: Vec<EdgeIx>) -> Self {
        assert!(!edges.is_empty(), "a route has at least one edge");
        let (total_length, free_flow_time) = edges.iter().fold((0.0, 0.0), |(l, t), &e| {
            let edge = net.edge(e);
            (l + edge.length, t + edge.free_flow_time())
        });
        Route {
            edges,
            total_length,
            free_flow_time,
        }
    }

    pub fn origin(&self) -> EdgeIx {
        self.edges[0]
    }

    pub fn destination(&self) -> EdgeIx {
        *self.edges.last().expect("non-empty route")
    }

    /// Σ edge costs under `mode`, accumulated from the origin.
    pub fn cost(&self, net: &RoadNetwork, mode: CostMode) -> f64 {
        self.edges
            .iter()
            .fold(0.0, |acc, &e| acc + edge_cost(net.edge(e), mode))
    }

    /// Consecutive edges connect and no edge repeats.
    pub fn is_valid_in(&self, net: &RoadNetwork) -> bool {
        let connected = self
            .edges
            .windows(2)
            .all(|w| net.edge_to(w[0]) == net.edge_from(w[1]));
        let mut seen = self.edges.clone();
        seen.sort_unstable();
        seen.dedup();
        connected && seen.len() == self.edges.len()
    }

    pub fn edge_ids<'a>(&'a self, net: &'a RoadNetwork) -> impl Iterator<Item = &'a str> + 'a {
        self.edges.iter().map(move |&e| net.edge(e).id.as_str())
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Frontier {
    cost: f64,
    node: NodeIx,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on cost, then on node index.
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Minimum-cost route from street `origin` to street `dest` under `mode`.
///
/// Runs node Dijkstra from the end of `origin` to the start of `dest`; both
/// endpoint streets are part of the route and of its cost. Among equal-cost
/// relaxations the incoming edge with the smaller id wins.
pub fn shortest_route(
    net: &RoadNetwork,
    origin: EdgeIx,
    dest: EdgeIx,
    mode: CostMode,
) -> Result<Route> {
    if origin == dest {
        return Ok(Route::from_edges(net, vec![origin]));
    }
    let source = net.edge_to(origin);
    let target = net.edge_from(dest);

    let n = net.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred: Vec<Option<EdgeIx>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source.index()] = edge_cost(net.edge(origin), mode);
    heap.push(Frontier {
        cost: dist[source.index()],
        node: source,
    });

    while let Some(Frontier { cost, node }) = heap.pop() {
        if done[node.index()] {
            continue;
        }
        done[node.index()] = true;
        if node == target {
            break;
        }
        for &e in net.outgoing(node) {
            let v = net.edge_to(e);
            if done[v.index()] {
                continue;
            }
            let next = cost + edge_cost(net.edge(e), mode);
            let slot = &mut dist[v.index()];
            if next < *slot {
                *slot = next;
                pred[v.index()] = Some(e);
                heap.push(Frontier { cost: next, node: v });
            } else if next == *slot && pred[v.index()].is_some_and(|p| e < p) {
                pred[v.index()] = Some(e);
            }
        }
    }

    if !done[target.index()] {
        return Err(Error::Routing(format!(
            "no path from edge \"{}\" to edge \"{}\"",
            net.edge(origin).id,
            net.edge(dest).id
        )));
    }

    let mut middle = Vec::new();
    let mut at = target;
    while at != source {
        let e = pred[at.index()].expect("settled node has a predecessor");
        middle.push(e);
        at = net.edge_from(e);
    }
    let mut edges = Vec::with_capacity(middle.len() + 2);
    edges.push(origin);
    edges.extend(middle.into_iter().rev());
    edges.push(dest);
    let route = Route::from_edges(net, edges);
    debug_assert!(route.is_valid_in(net), "dijkstra produced a non-simple route");
    Ok(route)
}

/// One route per router, in [`CostMode::ALL`] order.
pub fn candidate_routes(net: &RoadNetwork, origin: EdgeIx, dest: EdgeIx) -> Result<[Route; 3]> {
    Ok([
        shortest_route(net, origin, dest, CostMode::MinLength)?,
        shortest_route(net, origin, dest, CostMode::MaxSpeed)?,
        shortest_route(net, origin, dest, CostMode::Balanced)?,
    ])
}
