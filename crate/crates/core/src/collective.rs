//! Decentralized plan selection over a tree of agents.
//!
//! Each agent owns three candidate plans (sparse utilization vectors with a
//! scalar cost) and picks one. The collective objective for a choice is
//!
//! ```text
//! (1 - alpha - beta) * GC + alpha * U + beta * LC
//! ```
//!
//! with GC the population variance of the summed plan vectors, LC the mean
//! cost of the chosen plans and U the population variance of those costs.
//!
//! The first iteration is constructive: every agent picks against the
//! aggregate of its own subtree only. Each later iteration is a bottom-up
//! pass (leaves first). Every agent first
//! approves the subset of its children's subtree changes that does best
//! against the previous global response (rejected subtrees keep their
//! previous plans), then picks its own candidate against that response
//! corrected by the approved changes. The root then broadcasts the new
//! global response. An iteration whose root-level cost is worse than the
//! previous one is discarded.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plans::{AgentId, AgentPlanSet};
use crate::routing::CostMode;

pub const DEFAULT_MAX_ITERATIONS: usize = 40;
pub const DEFAULT_FANOUT: usize = 2;
/// Consecutive unchanged iterations that end the optimization.
const STABLE_ITERATIONS: usize = 2;
/// Largest fanout accepted; approval enumerates every subset of children.
pub const MAX_FANOUT: usize = 8;

/// Weights of the unfairness (`alpha`) and local cost (`beta`) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
}

impl Weights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let ok = (0.0..=1.0).contains(&alpha)
            && (0.0..=1.0).contains(&beta)
            && alpha + beta <= 1.0 + 1e-12;
        if ok {
            Ok(Weights { alpha, beta })
        } else {
            Err(Error::Config(format!(
                "weights alpha={alpha}, beta={beta} must lie in [0,1] with alpha+beta <= 1"
            )))
        }
    }

    pub fn selfish() -> Self {
        Weights { alpha: 0.0, beta: 1.0 }
    }

    pub fn altruistic() -> Self {
        Weights { alpha: 0.0, beta: 0.0 }
    }

    #[inline]
    pub fn global_weight(&self) -> f64 {
        1.0 - self.alpha - self.beta
    }
}

/// Population variance.
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Variance of the summed utilization vector.
pub fn global_cost(aggregate: &[f64]) -> f64 {
    variance(aggregate)
}

/// Mean cost of the selected plans.
pub fn local_cost(selections: &Selections, plan_sets: &[AgentPlanSet]) -> f64 {
    let costs = selections.selected_costs(plan_sets);
    costs.iter().sum::<f64>() / costs.len() as f64
}

/// Variance of the selected plans' costs.
pub fn unfairness(selections: &Selections, plan_sets: &[AgentPlanSet]) -> f64 {
    variance(&selections.selected_costs(plan_sets))
}

#[inline]
pub fn combined_cost(gc: f64, lc: f64, u: f64, weights: Weights) -> f64 {
    weights.global_weight() * gc + weights.alpha * u + weights.beta * lc
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub global_cost: f64,
    pub local_cost: f64,
    pub unfairness: f64,
    pub combined: f64,
}

impl CostBreakdown {
    pub fn evaluate(selections: &Selections, plan_sets: &[AgentPlanSet], weights: Weights) -> Self {
        let global_cost = global_cost(&selections.aggregate);
        let local_cost = local_cost(selections, plan_sets);
        let unfairness = unfairness(selections, plan_sets);
        CostBreakdown {
            global_cost,
            local_cost,
            unfairness,
            combined: combined_cost(global_cost, local_cost, unfairness, weights),
        }
    }
}

/// Root-level costs, one entry per iteration; entry 0 is the bootstrap
/// (every agent on its preferred plan).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTrace(pub Vec<CostBreakdown>);

impl CostTrace {
    pub fn is_non_increasing(&self) -> bool {
        self.0.windows(2).all(|w| w[1].combined <= w[0].combined)
    }

    pub fn last(&self) -> Option<&CostBreakdown> {
        self.0.last()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iteration", "global_cost", "local_cost", "unfairness", "combined"])?;
        for (i, c) in self.0.iter().enumerate() {
            out.write_record([
                i.to_string(),
                c.global_cost.to_string(),
                c.local_cost.to_string(),
                c.unfairness.to_string(),
                c.combined.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Agent hierarchy over positions `0..n` of the plan-set slice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeTopology {
    pub parent: Vec<Option<usize>>,
    pub children: Vec<Vec<usize>>,
    pub root: usize,
    pub fanout: usize,
}

impl TreeTopology {
    /// Complete `fanout`-ary tree filled breadth-first along `order`.
    pub fn from_order(order: &[usize], fanout: usize) -> Self {
        assert!(!order.is_empty() && fanout > 0);
        let n = order.len();
        let mut parent = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (slot, &agent) in order.iter().enumerate().skip(1) {
            let p = order[(slot - 1) / fanout];
            parent[agent] = Some(p);
            children[p].push(agent);
        }
        TreeTopology {
            parent,
            children,
            root: order[0],
            fanout,
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Children before parents; siblings in child-list order.
    pub fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![(self.root, false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                out.push(node);
            } else {
                stack.push((node, true));
                for &c in self.children[node].iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        (0..self.len())
            .map(|mut a| {
                let mut d = 0;
                while let Some(p) = self.parent[a] {
                    a = p;
                    d += 1;
                }
                d
            })
            .max()
            .unwrap_or(0)
    }
}

/// Balanced tree over a seeded shuffle of the agents.
///
/// Positions are first ordered by agent id, so the topology depends on the
/// set of ids, the seed and the fanout only.
pub fn build_tree(agent_ids: &[AgentId], seed: u64, fanout: usize) -> TreeTopology {
    let mut order: Vec<usize> = (0..agent_ids.len()).collect();
    order.sort_by_key(|&i| (agent_ids[i], i));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    TreeTopology::from_order(&order, fanout)
}

/// One selected plan index per agent position plus the summed vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Selections {
    pub agents: Vec<AgentId>,
    pub selected: Vec<usize>,
    pub aggregate: Vec<f64>,
}

impl Selections {
    pub fn from_choices(plan_sets: &[AgentPlanSet], selected: Vec<usize>) -> Self {
        let dim = plan_sets.first().map_or(0, |s| s.plans[0].utilization.dim);
        let mut aggregate = vec![0.0; dim];
        for (set, &j) in plan_sets.iter().zip(&selected) {
            set.plans[j].utilization.add_to(&mut aggregate);
        }
        Selections {
            agents: plan_sets.iter().map(|s| s.agent).collect(),
            selected,
            aggregate,
        }
    }

    pub fn preferred(plan_sets: &[AgentPlanSet]) -> Self {
        Self::from_choices(plan_sets, plan_sets.iter().map(|s| s.preferred).collect())
    }

    pub fn selected_costs(&self, plan_sets: &[AgentPlanSet]) -> Vec<f64> {
        plan_sets
            .iter()
            .zip(&self.selected)
            .map(|(s, &j)| s.plans[j].cost)
            .collect()
    }

    pub fn routers(&self) -> impl Iterator<Item = CostMode> + '_ {
        self.selected.iter().map(|&j| CostMode::ALL[j])
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    /// `agent,router,plan_cost` rows in agent-position order.
    pub fn write_csv<W: Write>(&self, plan_sets: &[AgentPlanSet], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["agent", "router", "plan_cost"])?;
        for (set, &j) in plan_sets.iter().zip(&self.selected) {
            out.write_record([
                set.agent.to_string(),
                CostMode::ALL[j].to_string(),
                set.plans[j].cost.to_string(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub weights: Weights,
    pub seed: u64,
    pub max_iterations: usize,
    pub fanout: usize,
}

impl OptimizerConfig {
    pub fn new(weights: Weights, seed: u64) -> Self {
        OptimizerConfig {
            weights,
            seed,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            fanout: DEFAULT_FANOUT,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub selections: Selections,
    pub trace: CostTrace,
    /// Iterations run after the bootstrap, reverted ones included.
    pub iterations: usize,
}

/// Builds the agent tree from the config seed and optimizes on it.
pub fn optimize(plan_sets: &[AgentPlanSet], config: &OptimizerConfig) -> Result<OptimizeOutcome> {
    if plan_sets.is_empty() {
        return Err(Error::Config("no agents to optimize".into()));
    }
    let ids: Vec<AgentId> = plan_sets.iter().map(|s| s.agent).collect();
    let tree = build_tree(&ids, config.seed, config.fanout.max(1));
    optimize_on_tree(plan_sets, &tree, config)
}

/// Running sums of a multiset of selected costs.
#[derive(Debug, Clone, Copy, Default)]
struct CostStats {
    n: f64,
    sum: f64,
    sumsq: f64,
}

impl CostStats {
    fn with(self, c: f64) -> Self {
        CostStats {
            n: self.n + 1.0,
            sum: self.sum + c,
            sumsq: self.sumsq + c * c,
        }
    }

    fn merge(self, o: Self) -> Self {
        CostStats {
            n: self.n + o.n,
            sum: self.sum + o.sum,
            sumsq: self.sumsq + o.sumsq,
        }
    }

    fn variance(&self) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        let mean = self.sum / self.n;
        (self.sumsq / self.n - mean * mean).max(0.0)
    }
}

type Delta = Vec<(u32, f64)>;

/// Sorted sparse sum `a + sign * b`.
fn merge_delta(a: &[(u32, f64)], b: &[(u32, f64)], sign: f64) -> Delta {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j == b.len() || (i < a.len() && a[i].0 < b[j].0);
        let take_b = i == a.len() || (j < b.len() && b[j].0 < a[i].0);
        if take_a {
            out.push(a[i]);
            i += 1;
        } else if take_b {
            out.push((b[j].0, sign * b[j].1));
            j += 1;
        } else {
            let v = a[i].1 + sign * b[j].1;
            if v != 0.0 {
                out.push((a[i].0, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

/// Dense working copy of the global response with running Σx and Σx².
struct Workspace {
    base: Vec<f64>,
    work: Vec<f64>,
    sum: f64,
    sumsq: f64,
    touched: Vec<u32>,
}

impl Workspace {
    fn new(global: &[f64]) -> Self {
        let mut ws = Workspace {
            base: global.to_vec(),
            work: global.to_vec(),
            sum: 0.0,
            sumsq: 0.0,
            touched: Vec::new(),
        };
        ws.reset_sums();
        ws
    }

    fn reset_sums(&mut self) {
        self.sum = self.base.iter().sum();
        self.sumsq = self.base.iter().map(|x| x * x).sum();
    }

    fn set_global(&mut self, global: &[f64]) {
        self.base.copy_from_slice(global);
        self.work.copy_from_slice(global);
        self.touched.clear();
        self.reset_sums();
    }

    fn apply(&mut self, entries: &[(u32, f64)], sign: f64) {
        for &(i, x) in entries {
            let w = &mut self.work[i as usize];
            let d = sign * x;
            self.sum += d;
            self.sumsq += d * (2.0 * *w + d);
            *w += d;
            self.touched.push(i);
        }
    }

    /// Variance of `work + candidate` without modifying `work`.
    fn variance_with(&self, candidate: &[(u32, f64)]) -> f64 {
        let (mut s, mut q) = (self.sum, self.sumsq);
        for &(i, x) in candidate {
            let w = self.work[i as usize];
            s += x;
            q += x * (2.0 * w + x);
        }
        let n = self.work.len() as f64;
        let mean = s / n;
        (q / n - mean * mean).max(0.0)
    }

    fn restore(&mut self, saved: (f64, f64)) {
        for &i in &self.touched {
            self.work[i as usize] = self.base[i as usize];
        }
        self.touched.clear();
        (self.sum, self.sumsq) = saved;
    }
}

/// Cost statistics of every agent's subtree under `selected`.
fn subtree_stats(
    tree: &TreeTopology,
    order: &[usize],
    plan_sets: &[AgentPlanSet],
    selected: &[usize],
) -> Vec<CostStats> {
    let mut stats = vec![CostStats::default(); selected.len()];
    for &a in order {
        let mut s = CostStats::default().with(plan_sets[a].plans[selected[a]].cost);
        for &c in &tree.children[a] {
            s = s.merge(stats[c]);
        }
        stats[a] = s;
    }
    stats
}

/// Restores the selections of `root`'s subtree from `from`.
fn reset_subtree(tree: &TreeTopology, root: usize, from: &[usize], into: &mut [usize]) {
    let mut stack = vec![root];
    while let Some(x) = stack.pop() {
        into[x] = from[x];
        stack.extend_from_slice(&tree.children[x]);
    }
}

/// First pass: each agent sees only the aggregate of its own subtree.
fn constructive_pass(
    plan_sets: &[AgentPlanSet],
    tree: &TreeTopology,
    order: &[usize],
    weights: Weights,
    dim: usize,
) -> Vec<usize> {
    let mut ws = Workspace::new(&vec![0.0; dim]);
    let mut aggregates: Vec<Delta> = vec![Vec::new(); plan_sets.len()];
    let mut stats = vec![CostStats::default(); plan_sets.len()];
    let mut selected = vec![0; plan_sets.len()];
    for &a in order {
        let mut agg: Delta = Vec::new();
        let mut sub_stats = CostStats::default();
        for &c in &tree.children[a] {
            agg = merge_delta(&agg, &aggregates[c], 1.0);
            sub_stats = sub_stats.merge(stats[c]);
            aggregates[c] = Vec::new();
        }
        let saved = (ws.sum, ws.sumsq);
        ws.apply(&agg, 1.0);
        let mut choice = (0, f64::INFINITY);
        for (j, plan) in plan_sets[a].plans.iter().enumerate() {
            let gc = ws.variance_with(&plan.utilization.entries);
            let u = sub_stats.with(plan.cost).variance();
            let c = combined_cost(gc, plan.cost, u, weights);
            if c < choice.1 {
                choice = (j, c);
            }
        }
        ws.restore(saved);
        let plan = &plan_sets[a].plans[choice.0];
        selected[a] = choice.0;
        stats[a] = sub_stats.with(plan.cost);
        aggregates[a] = merge_delta(&agg, &plan.utilization.entries, 1.0);
    }
    selected
}

/// Runs the iterative bottom-up / top-down selection on a given tree.
pub fn optimize_on_tree(
    plan_sets: &[AgentPlanSet],
    tree: &TreeTopology,
    config: &OptimizerConfig,
) -> Result<OptimizeOutcome> {
    let n = plan_sets.len();
    if n == 0 {
        return Err(Error::Config("no agents to optimize".into()));
    }
    if tree.len() != n {
        return Err(Error::Config(format!(
            "tree covers {} agents but {n} plan sets were given",
            tree.len()
        )));
    }
    let dim = plan_sets[0].plans[0].utilization.dim;
    for set in plan_sets {
        for plan in &set.plans {
            if plan.utilization.dim != dim {
                return Err(Error::Config(format!(
                    "agent {} has a {}-dimensional plan, expected {dim}",
                    set.agent, plan.utilization.dim
                )));
            }
        }
    }
    if dim == 0 {
        return Err(Error::Config("plans have dimension 0".into()));
    }
    if tree.children.iter().any(|c| c.len() > MAX_FANOUT) {
        return Err(Error::Config(format!("tree fanout exceeds {MAX_FANOUT}")));
    }
    let weights = config.weights;
    let order = tree.post_order();

    let mut current = Selections::preferred(plan_sets);
    let mut best = CostBreakdown::evaluate(&current, plan_sets, weights);
    let mut trace = vec![best];
    let mut ws = Workspace::new(&current.aggregate);
    let mut deltas: Vec<Delta> = vec![Vec::new(); n];
    let mut stats = vec![CostStats::default(); n];
    let mut prev_stats = subtree_stats(tree, &order, plan_sets, &current.selected);
    let mut stable = 0;
    let mut iterations = 0;

    while iterations < config.max_iterations && stable < STABLE_ITERATIONS {
        iterations += 1;
        let mut next = current.selected.clone();
        if iterations == 1 {
            next = constructive_pass(plan_sets, tree, &order, weights, dim);
        }

        for &a in order.iter().filter(|_| iterations > 1) {
            let prev = current.selected[a];
            let plans = &plan_sets[a].plans;
            let kids = &tree.children[a];

            // Approval: keep the subset of the children's subtree changes
            // that does best against the previous response.
            let own = CostStats::default().with(plans[prev].cost);
            let full = (1usize << kids.len()) - 1;
            let mut approved = full;
            if !kids.is_empty() {
                let mut best_cost = f64::INFINITY;
                for mask in (0..=full).rev() {
                    let mut d: Delta = Vec::new();
                    let mut s = own;
                    for (k, &c) in kids.iter().enumerate() {
                        if mask >> k & 1 == 1 {
                            d = merge_delta(&d, &deltas[c], 1.0);
                            s = s.merge(stats[c]);
                        } else {
                            s = s.merge(prev_stats[c]);
                        }
                    }
                    let cost = combined_cost(ws.variance_with(&d), s.sum / s.n, s.variance(), weights);
                    if cost < best_cost {
                        best_cost = cost;
                        approved = mask;
                    }
                }
            }

            let mut delta: Delta = Vec::new();
            let mut sub_stats = CostStats::default();
            for (k, &c) in kids.iter().enumerate() {
                if approved >> k & 1 == 1 {
                    delta = merge_delta(&delta, &deltas[c], 1.0);
                    sub_stats = sub_stats.merge(stats[c]);
                } else {
                    sub_stats = sub_stats.merge(prev_stats[c]);
                    reset_subtree(tree, c, &current.selected, &mut next);
                }
            }


            let saved = (ws.sum, ws.sumsq);
            ws.apply(&delta, 1.0);
            ws.apply(&plans[prev].utilization.entries, -1.0);
            let mut choice = (0, f64::INFINITY);
            for (j, plan) in plans.iter().enumerate() {
                let gc = ws.variance_with(&plan.utilization.entries);
                let u = sub_stats.with(plan.cost).variance();
                let c = combined_cost(gc, plan.cost, u, weights);
                if c < choice.1 {
                    choice = (j, c);
                }
            }
            ws.restore(saved);

            let pick = choice.0;
            next[a] = pick;
            stats[a] = sub_stats.with(plans[pick].cost);
            if pick != prev {
                let swap = merge_delta(
                    &plans[pick].utilization.entries,
                    &plans[prev].utilization.entries,
                    -1.0,
                );
                delta = merge_delta(&delta, &swap, 1.0);
            }
            deltas[a] = delta;
        }

        let candidate = Selections::from_choices(plan_sets, next);
        let cost = CostBreakdown::evaluate(&candidate, plan_sets, weights);
        let changed = candidate.selected != current.selected;
        if cost.combined > best.combined {
            log::debug!(
                "iteration {iterations}: combined {} > {}, reverting",
                cost.combined,
                best.combined
            );
            trace.push(best);
            stable += 1;
        } else {
            trace.push(cost);
            best = cost;
            prev_stats.clone_from(&stats);
            if changed {
                stable = 0;
                ws.set_global(&candidate.aggregate);
                current = candidate;
            } else {
                stable += 1;
            }
        }
    }

    Ok(OptimizeOutcome {
        selections: current,
        trace: CostTrace(trace),
        iterations,
    })
}
