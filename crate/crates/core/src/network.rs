//! Road network model: intersections, directed streets, file ingestion and
//! the structural statistics used to characterise a map.
//!
//! Edges and nodes are stored sorted by their string id, so the dense index
//! order ([`EdgeIx`], [`NodeIx`]) is also the lexicographic id order. Every
//! downstream tie-break relies on that.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest street accepted at load time.
pub const MIN_EDGE_LENGTH: f64 = 0.1;

/// Dense index of an edge in a [`RoadNetwork`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeIx(pub u32);

/// Dense index of a node in a [`RoadNetwork`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeIx(pub u32);

impl EdgeIx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl NodeIx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: String,
    pub from: String,
    pub to: String,
    #[serde(rename = "length_m")]
    pub length: f64,
    #[serde(rename = "max_speed_mps")]
    pub max_speed: f64,
    pub lanes: u32,
}

impl Edge {
    /// Traversal time at the speed limit, in seconds.
    #[inline]
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.max_speed
    }
}

/// On-disk JSON layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub allow_self_loops: bool,
}

/// A validated, immutable directed road graph.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    edge_from: Vec<NodeIx>,
    edge_to: Vec<NodeIx>,
    outgoing: Vec<Vec<EdgeIx>>,
    node_lookup: HashMap<String, NodeIx>,
    edge_lookup: HashMap<String, EdgeIx>,
    allow_self_loops: bool,
}

impl PartialEq for RoadNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.edges == other.edges
            && self.allow_self_loops == other.allow_self_loops
    }
}

impl RoadNetwork {
    /// Validates raw nodes and edges and builds the indexed network.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        Self::from_file(NetworkFile {
            nodes,
            edges,
            allow_self_loops: false,
        })
    }

    pub fn from_file(file: NetworkFile) -> Result<Self> {
        let NetworkFile {
            mut nodes,
            mut edges,
            allow_self_loops,
        } = file;
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        edges.sort_by(|a, b| a.id.cmp(&b.id));

        let mut node_lookup = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !(n.x.is_finite() && n.y.is_finite()) {
                return Err(Error::Validation(format!(
                    "node \"{}\" has non-finite coordinates",
                    n.id
                )));
            }
            if node_lookup.insert(n.id.clone(), NodeIx(i as u32)).is_some() {
                return Err(Error::Validation(format!("duplicate node id \"{}\"", n.id)));
            }
        }

        let mut edge_lookup = HashMap::with_capacity(edges.len());
        let mut edge_from = Vec::with_capacity(edges.len());
        let mut edge_to = Vec::with_capacity(edges.len());
        let mut outgoing = vec![Vec::new(); nodes.len()];
        for (i, e) in edges.iter().enumerate() {
            let ix = EdgeIx(i as u32);
            if edge_lookup.insert(e.id.clone(), ix).is_some() {
                return Err(Error::Validation(format!("duplicate edge id \"{}\"", e.id)));
            }
            let from = *node_lookup.get(&e.from).ok_or_else(|| {
                Error::Validation(format!(
                    "edge \"{}\" references missing node \"{}\"",
                    e.id, e.from
                ))
            })?;
            let to = *node_lookup.get(&e.to).ok_or_else(|| {
                Error::Validation(format!(
                    "edge \"{}\" references missing node \"{}\"",
                    e.id, e.to
                ))
            })?;
            if from == to && !allow_self_loops {
                return Err(Error::Validation(format!(
                    "edge \"{}\" is a self-loop on \"{}\"",
                    e.id, e.from
                )));
            }
            if !(e.length.is_finite() && e.length > 0.0) {
                return Err(Error::Validation(format!(
                    "edge \"{}\" has non-positive length {}",
                    e.id, e.length
                )));
            }
            if e.length < MIN_EDGE_LENGTH {
                return Err(Error::Validation(format!(
                    "edge \"{}\" is shorter than {MIN_EDGE_LENGTH} m ({})",
                    e.id, e.length
                )));
            }
            if !(e.max_speed.is_finite() && e.max_speed > 0.0) {
                return Err(Error::Validation(format!(
                    "edge \"{}\" has non-positive speed {}",
                    e.id, e.max_speed
                )));
            }
            if e.lanes == 0 {
                return Err(Error::Validation(format!("edge \"{}\" has zero lanes", e.id)));
            }
            edge_from.push(from);
            edge_to.push(to);
            outgoing[from.index()].push(ix);
        }

        let net = RoadNetwork {
            nodes,
            edges,
            edge_from,
            edge_to,
            outgoing,
            node_lookup,
            edge_lookup,
            allow_self_loops,
        };
        net.check_connectivity()?;
        Ok(net)
    }

    /// Every edge must be able to reach every other edge. Connectivity is
    /// judged on the edge graph (e -> f when e ends where f starts) because
    /// trips start and end on streets.
    fn check_connectivity(&self) -> Result<()> {
        if self.edges.is_empty() {
            return Err(Error::Validation("network has no edges".into()));
        }
        let comp = self.edge_components();
        let mut sizes: HashMap<usize, usize> = HashMap::new();
        for &c in &comp {
            *sizes.entry(c).or_default() += 1;
        }
        // Largest component; ties go to the one holding the smallest edge index.
        let mut best: Option<(usize, usize)> = None;
        for &c in &comp {
            let size = sizes[&c];
            if best.is_none_or(|(_, s)| size > s) {
                best = Some((c, size));
            }
        }
        let (main, _) = best.expect("non-empty");
        let stray: Vec<&str> = comp
            .iter()
            .zip(&self.edges)
            .filter(|(c, _)| **c != main)
            .map(|(_, e)| e.id.as_str())
            .collect();
        if stray.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "{} edge(s) outside the largest strongly connected component: {}",
                stray.len(),
                stray.join(", ")
            )))
        }
    }

    /// Strongly connected components of the edge graph (iterative Tarjan).
    fn edge_components(&self) -> Vec<usize> {
        let n = self.edges.len();
        const UNSEEN: usize = usize::MAX;
        let mut index = vec![UNSEEN; n];
        let mut low = vec![0usize; n];
        let mut on_stack = vec![false; n];
        let mut stack = Vec::new();
        let mut comp = vec![UNSEEN; n];
        let mut next_index = 0;
        let mut next_comp = 0;

        for root in 0..n {
            if index[root] != UNSEEN {
                continue;
            }
            // (edge, position in its successor list)
            let mut call: Vec<(usize, usize)> = vec![(root, 0)];
            index[root] = next_index;
            low[root] = next_index;
            next_index += 1;
            stack.push(root);
            on_stack[root] = true;

            while let Some(&mut (v, ref mut pos)) = call.last_mut() {
                let succ = &self.outgoing[self.edge_to[v].index()];
                if *pos < succ.len() {
                    let w = succ[*pos].index();
                    *pos += 1;
                    if index[w] == UNSEEN {
                        index[w] = next_index;
                        low[w] = next_index;
                        next_index += 1;
                        stack.push(w);
                        on_stack[w] = true;
                        call.push((w, 0));
                    } else if on_stack[w] {
                        low[v] = low[v].min(index[w]);
                    }
                } else {
                    call.pop();
                    if let Some(&(parent, _)) = call.last() {
                        low[parent] = low[parent].min(low[v]);
                    }
                    if low[v] == index[v] {
                        loop {
                            let w = stack.pop().expect("tarjan stack");
                            on_stack[w] = false;
                            comp[w] = next_comp;
                            if w == v {
                                break;
                            }
                        }
                        next_comp += 1;
                    }
                }
            }
        }
        comp
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn edge(&self, e: EdgeIx) -> &Edge {
        &self.edges[e.index()]
    }

    #[inline]
    pub fn node(&self, n: NodeIx) -> &Node {
        &self.nodes[n.index()]
    }

    #[inline]
    pub fn edge_from(&self, e: EdgeIx) -> NodeIx {
        self.edge_from[e.index()]
    }

    #[inline]
    pub fn edge_to(&self, e: EdgeIx) -> NodeIx {
        self.edge_to[e.index()]
    }

    /// Outgoing edges of a node, in edge-id order.
    #[inline]
    pub fn outgoing(&self, n: NodeIx) -> &[EdgeIx] {
        &self.outgoing[n.index()]
    }

    pub fn edge_ix(&self, id: &str) -> Option<EdgeIx> {
        self.edge_lookup.get(id).copied()
    }

    pub fn node_ix(&self, id: &str) -> Option<NodeIx> {
        self.node_lookup.get(id).copied()
    }

    /// Looks up an edge id, failing with a routing error naming it.
    pub fn require_edge(&self, id: &str) -> Result<EdgeIx> {
        self.edge_ix(id)
            .ok_or_else(|| Error::Routing(format!("unknown edge \"{id}\"")))
    }

    pub fn edge_indices(&self) -> impl ExactSizeIterator<Item = EdgeIx> + '_ {
        (0..self.edges.len() as u32).map(EdgeIx)
    }

    /// Edges long enough to hold a vehicle; trips start and end on these.
    pub fn spawnable_edges(&self, vehicle_length: f64) -> Vec<EdgeIx> {
        self.edge_indices()
            .filter(|&e| self.edge(e).length >= vehicle_length)
            .collect()
    }

    /// Axis-aligned bounding box `(min_x, min_y, max_x, max_y)` of all nodes.
    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        self.nodes.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(a, b, c, d), n| (a.min(n.x), b.min(n.y), c.max(n.x), d.max(n.y)),
        )
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            allow_self_loops: self.allow_self_loops,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("network file: {e}")))?;
        Self::from_file(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_json().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a network JSON file.
pub fn load_network(path: impl AsRef<Path>) -> Result<RoadNetwork> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RoadNetwork::from_json(&text)
}

/// Parameters for a synthetic grid city.
///
/// With `arterial_every = None` and `jitter = 0` this is a plain uniform
/// lattice. Arterials are every k-th row and column (starting at 0) with
/// their own speed and lane count; jitter displaces interior nodes by up to
/// `jitter * edge_length` in each axis so street lengths differ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub edge_length: f64,
    pub max_speed: f64,
    pub lanes: u32,
    #[serde(default)]
    pub arterial_every: Option<usize>,
    #[serde(default)]
    pub arterial_speed: Option<f64>,
    #[serde(default)]
    pub arterial_lanes: Option<u32>,
    #[serde(default)]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
}

impl GridSpec {
    pub fn uniform(rows: usize, cols: usize, edge_length: f64, max_speed: f64, lanes: u32) -> Self {
        GridSpec {
            rows,
            cols,
            edge_length,
            max_speed,
            lanes,
            arterial_every: None,
            arterial_speed: None,
            arterial_lanes: None,
            jitter: 0.0,
            seed: 0,
        }
    }

    fn is_arterial(&self, line: usize) -> bool {
        matches!(self.arterial_every, Some(k) if k > 0 && line.is_multiple_of(k))
    }

    pub fn build(&self) -> Result<RoadNetwork> {
        if self.rows < 2 || self.cols < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2x2 nodes, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.edge_length > 0.0 && self.max_speed > 0.0 && self.lanes > 0) {
            return Err(Error::Config("grid length, speed and lanes must be positive".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return Err(Error::Config(format!("grid jitter {} outside [0, 0.5)", self.jitter)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut nodes = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (mut dx, mut dy) = (0.0, 0.0);
                if self.jitter > 0.0 {
                    let amp = self.jitter * self.edge_length;
                    dx = rng.gen_range(-amp..=amp);
                    dy = rng.gen_range(-amp..=amp);
                }
                nodes.push(Node {
                    id: grid_node_id(r, c),
                    x: c as f64 * self.edge_length + dx,
                    y: r as f64 * self.edge_length + dy,
                });
            }
        }
        let at = |r: usize, c: usize| &nodes[r * self.cols + c];
        let mut edges = Vec::new();
        let mut link = |a: &Node, b: &Node, arterial: bool| {
            let length = if self.jitter > 0.0 {
                ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
            } else {
                self.edge_length
            };
            let (speed, lanes) = if arterial {
                (
                    self.arterial_speed.unwrap_or(self.max_speed),
                    self.arterial_lanes.unwrap_or(self.lanes),
                )
            } else {
                (self.max_speed, self.lanes)
            };
            for (s, t) in [(a, b), (b, a)] {
                edges.push(Edge {
                    id: format!("{}-{}", s.id, t.id),
                    from: s.id.clone(),
                    to: t.id.clone(),
                    length,
                    max_speed: speed,
                    lanes,
                });
            }
        };
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c + 1 < self.cols {
                    link(at(r, c), at(r, c + 1), self.is_arterial(r));
                }
                if r + 1 < self.rows {
                    link(at(r, c), at(r + 1, c), self.is_arterial(c));
                }
            }
        }
        RoadNetwork::new(nodes, edges)
    }
}

fn grid_node_id(r: usize, c: usize) -> String {
    format!("n{r}_{c}")
}

/// Uniform `rows x cols` lattice with bidirectional 4-neighbour streets.
pub fn generate_grid(
    rows: usize,
    cols: usize,
    edge_length: f64,
    max_speed: f64,
    lanes: u32,
) -> Result<RoadNetwork> {
    GridSpec::uniform(rows, cols, edge_length, max_speed, lanes).build()
}

/// Structural statistics over directed edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub node_count: usize,
    pub edge_count: usize,
    pub total_street_length: f64,
    pub avg_street_length: f64,
    pub max_street_length: f64,
    pub min_street_length: f64,
    pub edges_per_length: f64,
    pub nodes_per_length: f64,
}

impl NetworkStats {
    pub const CSV_HEADER: &'static str =
        "nodes,edges,total_length_m,avg_m,max_m,min_m,edges_per_m,nodes_per_m";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.node_count,
            self.edge_count,
            self.total_street_length,
            self.avg_street_length,
            self.max_street_length,
            self.min_street_length,
            self.edges_per_length,
            self.nodes_per_length
        )
    }
}

impl fmt::Display for NetworkStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Self::CSV_HEADER)?;
        writeln!(f, "{}", self.csv_row())
    }
}

pub fn network_stats(net: &RoadNetwork) -> NetworkStats {
    let lengths = net.edges().iter().map(|e| e.length);
    let total: f64 = lengths.clone().sum();
    let max = lengths.clone().fold(f64::NEG_INFINITY, f64::max);
    let min = lengths.fold(f64::INFINITY, f64::min);
    let n_edges = net.edge_count();
    NetworkStats {
        node_count: net.node_count(),
        edge_count: n_edges,
        total_street_length: total,
        avg_street_length: total / n_edges as f64,
        max_street_length: max,
        min_street_length: min,
        edges_per_length: n_edges as f64 / total,
        nodes_per_length: net.node_count() as f64 / total,
    }
}
