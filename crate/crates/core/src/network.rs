//! The master graph over all nodes and the per-root pricing graphs, with
//! edges that cannot belong to any feasible route filtered out.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::feasibility::earliest_schedule_within;
use crate::model::{Direction, Instance, NodeKind, Time};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NetworkError {
    #[error("instance infeasible: node {0} has no usable {1} edge")]
    Isolated(usize, &'static str),
}

/// Dense adjacency over `0..=4n+1`.
#[derive(Debug, Clone)]
pub struct MasterGraph {
    size: usize,
    adj: Vec<bool>,
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

impl MasterGraph {
    fn from_adj(size: usize, adj: Vec<bool>) -> Self {
        let mut succ = vec![Vec::new(); size];
        let mut pred = vec![Vec::new(); size];
        for u in 0..size {
            for v in 0..size {
                if adj[u * size + v] {
                    succ[u].push(v);
                    pred[v].push(u);
                }
            }
        }
        MasterGraph { size, adj, succ, pred }
    }
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.size && v < self.size && self.adj[u * self.size + v]
    }
    pub fn out(&self, u: usize) -> &[usize] {
        &self.succ[u]
    }
    pub fn inn(&self, v: usize) -> &[usize] {
        &self.pred[v]
    }
    pub fn num_edges(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ.iter().enumerate().flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }

    pub fn to_dot(&self, inst: &Instance) -> String {
        let nd = inst.nodes();
        let mut s = String::from("digraph master {\n");
        for v in 0..self.size {
            let label = match nd.kind(v) {
                NodeKind::Source => "v_s".to_string(),
                NodeKind::Sink => "v_t".to_string(),
                NodeKind::Pickup(_) => format!("P{v}"),
                NodeKind::Dropoff(_) => format!("D{v}"),
            };
            let _ = writeln!(s, "  {v} [label=\"{label}\"];");
        }
        for (u, v) in self.edges() {
            let _ = writeln!(s, "  {u} -> {v};");
        }
        s.push_str("}\n");
        s
    }
}

/// Capacity, commuter order and schedule feasibility of a short node
/// sequence under the given window openings.
pub(crate) fn feasible_with(inst: &Instance, seq: &[usize], earliest: &dyn Fn(usize) -> Time) -> bool {
    let nd = inst.nodes();
    let mut load = 0usize;
    for (k, &v) in seq.iter().enumerate() {
        if nd.is_pickup(v) {
            load += 1;
            if load > inst.capacity() {
                return false;
            }
        } else {
            load = load.saturating_sub(1);
        }
        // Outbound pickup before the same commuter's inbound dropoff.
        if v > 2 * nd.n && v <= 3 * nd.n && seq[k + 1..].contains(&(v - nd.n)) {
            return false;
        }
        if nd.is_dropoff(v) && seq[k + 1..].contains(&nd.pickup_of(v)) {
            return false;
        }
    }
    earliest_schedule_within(inst, seq, earliest).is_ok()
}

pub fn feasible4(inst: &Instance, seq: [usize; 4]) -> bool {
    feasible_with(inst, &seq, &|v| inst.a(v))
}

/// Pairwise-trip edges ruled out by four-node route checks between the
/// pickups `i` and `j`, given window openings.
fn pair_rule_removals(
    inst: &Instance,
    i: usize,
    j: usize,
    earliest: &dyn Fn(usize) -> Time,
    out: &mut Vec<(usize, usize)>,
) {
    let n = inst.n();
    let f = |s: [usize; 4]| feasible_with(inst, &s, earliest);
    let (ni, nj) = (n + i, n + j);
    if !f([j, i, nj, ni]) {
        out.push((i, nj));
    }
    if !f([i, ni, j, nj]) {
        out.push((ni, j));
    }
    if !f([i, j, ni, nj]) && !f([i, j, nj, ni]) {
        out.push((i, j));
    }
    if !f([i, j, ni, nj]) && !f([j, i, ni, nj]) {
        out.push((ni, nj));
    }
}

/// Builds the master graph with the depot, pairing and precedence, time
/// window, ride-duration and pairwise-trip rules applied.
pub fn build_master_graph(inst: &Instance) -> Result<MasterGraph, NetworkError> {
    let nd = inst.nodes();
    let n = nd.n;
    let size = nd.count();
    let (vs, vt) = (nd.source(), nd.sink());
    let mut adj = vec![false; size * size];
    for u in 0..size {
        for v in 0..size {
            adj[u * size + v] = u != v;
        }
    }
    let mut cut = |u: usize, v: usize| adj[u * size + v] = false;

    // Depot: only v_s -> pickup and dropoff -> v_t remain.
    for u in 0..size {
        for v in 0..size {
            let keep = (u == vs && nd.is_pickup(v)) || (v == vt && nd.is_dropoff(u)) || (nd.is_trip(u) && nd.is_trip(v));
            if !keep {
                cut(u, v);
            }
        }
    }
    for i in 1..=n {
        let (p1, d1, p2, d2) = (i, n + i, 2 * n + i, 3 * n + i);
        for (u, v) in [(p1, p2), (p1, d2), (d1, p1), (d1, d2), (p2, p1), (p2, d1), (d2, p1), (d2, d1), (d2, p2)] {
            cut(u, v);
        }
    }
    for u in nd.trip_nodes() {
        for v in nd.trip_nodes() {
            if u != v && inst.a(u) + inst.s(u) + inst.tau(u, v) > inst.b(v) {
                cut(u, v);
            }
        }
    }
    for i in nd.pickups() {
        for j in nd.trip_nodes() {
            if j == i || j == n + i {
                continue;
            }
            if inst.tau(i, j) + inst.s(j) + inst.tau(j, n + i) > inst.ride_limit(i) {
                cut(i, j);
                cut(j, n + i);
            }
        }
    }
    let pickups: Vec<usize> = nd.pickups().collect();
    let removals: Vec<(usize, usize)> = pickups
        .par_iter()
        .flat_map_iter(|&i| {
            let mut out = Vec::new();
            for &j in &pickups {
                if i != j {
                    pair_rule_removals(inst, i, j, &|v| inst.a(v), &mut out);
                }
            }
            out
        })
        .collect();
    for (u, v) in removals {
        cut(u, v);
    }

    let g = MasterGraph::from_adj(size, adj);
    for v in nd.trip_nodes() {
        if g.out(v).is_empty() {
            return Err(NetworkError::Isolated(v, "outgoing"));
        }
        if g.inn(v).is_empty() {
            return Err(NetworkError::Isolated(v, "incoming"));
        }
    }
    for p in nd.pickups() {
        if !(g.has_edge(vs, p) && g.has_edge(p, n + p) && g.has_edge(n + p, vt) && feasible_with(inst, &[p, n + p], &|v| inst.a(v))) {
            return Err(NetworkError::Isolated(p, "direct-trip"));
        }
    }
    Ok(g)
}

/// Search graph for mini routes starting at one pickup. The virtual sink is
/// represented by the global sink index.
#[derive(Debug, Clone)]
pub struct PricingGraph {
    pub root: usize,
    pub direction: Direction,
    pub sink: usize,
    /// Tightened window openings, indexed by global node.
    pub earliest: Vec<Time>,
    succ: Vec<Vec<usize>>,
}

impl PricingGraph {
    pub fn out(&self, u: usize) -> &[usize] {
        &self.succ[u]
    }
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.succ.get(u).is_some_and(|s| s.contains(&v))
    }
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succ.iter().enumerate().flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }
    pub fn num_edges(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }
}

/// Tightened window openings for routes rooted at pickup `root`.
pub fn tightened_earliest(inst: &Instance, root: usize) -> Vec<Time> {
    let nd = inst.nodes();
    let dir = nd.direction(root).expect("root is a trip node");
    let mut a: Vec<Time> = (0..nd.count()).map(|v| inst.a(v)).collect();
    for u in nd.pickups_of(dir) {
        if u != root {
            a[u] = a[u].max(inst.a(root) + inst.s(root) + inst.tau(root, u));
        }
    }
    for u in nd.pickups_of(dir) {
        if u != root {
            let d = u + nd.n;
            a[d] = a[d].max(a[u] + inst.s(u) + inst.tau(u, d));
        }
    }
    a
}

/// Builds the pricing graph of pickup `root`. Topology depends only on the
/// instance; reduced costs are attached during the search.
pub fn build_pricing_graph(inst: &Instance, root: usize) -> PricingGraph {
    let nd = inst.nodes();
    let n = nd.n;
    assert!(nd.is_pickup(root), "pricing root {root} is not a pickup");
    let dir = nd.direction(root).unwrap();
    let sink = nd.sink();
    let a = tightened_earliest(inst, root);
    let pickups: Vec<usize> = nd.pickups_of(dir).collect();
    let dropoffs: Vec<usize> = pickups.iter().map(|&p| p + n).collect();
    let members: Vec<usize> = pickups.iter().chain(&dropoffs).copied().collect();
    let size = nd.count();
    let mut adj = vec![false; size * size];
    for &u in &members {
        for &v in &members {
            if u == v || v == root {
                continue;
            }
            let ok = if nd.is_pickup(u) {
                // From the root only other pickups or its own dropoff.
                nd.is_pickup(v) || u != root || v == root + n
            } else {
                nd.is_dropoff(v)
            };
            adj[u * size + v] = ok;
        }
        if nd.is_dropoff(u) {
            adj[u * size + sink] = true;
        }
    }
    let mut cut = |u: usize, v: usize| adj[u * size + v] = false;
    for &u in &members {
        for &v in &members {
            if u != v && a[u] + inst.s(u) + inst.tau(u, v) > inst.b(v) {
                cut(u, v);
            }
        }
    }
    for &u in &pickups {
        for &v in &members {
            if v == u || v == u + n {
                continue;
            }
            if inst.tau(u, v) + inst.s(v) + inst.tau(v, u + n) > inst.ride_limit(u) {
                cut(u, v);
                cut(v, u + n);
            }
        }
    }
    let mut removals = Vec::new();
    for &u in &pickups {
        for &v in &pickups {
            if u != v {
                pair_rule_removals(inst, u, v, &|x| a[x], &mut removals);
            }
        }
    }
    for (u, v) in removals {
        cut(u, v);
    }
    let mut succ = vec![Vec::new(); size];
    for u in 0..size {
        for v in 0..size {
            if adj[u * size + v] {
                succ[u].push(v);
            }
        }
    }
    PricingGraph { root, direction: dir, sink, earliest: a, succ }
}

/// Pricing graphs for every pickup, built in parallel.
pub fn build_pricing_graphs(inst: &Instance) -> Vec<PricingGraph> {
    let roots: Vec<usize> = inst.nodes().pickups().collect();
    roots.par_iter().map(|&r| build_pricing_graph(inst, r)).collect()
}

/// Outcome of checking the filtering rules against exhaustive enumeration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SoundnessReport {
    pub mini_routes: usize,
    pub chained_pairs: usize,
    /// `(graph, u, v)`: the master graph is `None`, a pricing graph is
    /// `Some(root)`.
    pub violations: Vec<(Option<usize>, usize, usize)>,
}

/// Enumerates every feasible mini route and every feasible chaining of two
/// mini routes and reports filtered edges that such routes use. Intended
/// for small instances (n <= 4).
pub fn filter_soundness_oracle(inst: &Instance) -> Result<SoundnessReport, NetworkError> {
    use crate::enumerate::feasible_mini_routes;
    use crate::feasibility::{feasible_av_route, AvRoute};
    let nd = inst.nodes();
    let master = build_master_graph(inst)?;
    let pricing: Vec<PricingGraph> = build_pricing_graphs(inst);
    let routes = feasible_mini_routes(inst);
    let mut report = SoundnessReport { mini_routes: routes.len(), ..Default::default() };
    let flag = |g: Option<usize>, u: usize, v: usize, rep: &mut SoundnessReport| {
        if !rep.violations.contains(&(g, u, v)) {
            rep.violations.push((g, u, v));
        }
    };
    for r in &routes {
        let mut path = vec![nd.source()];
        path.extend(&r.nodes);
        path.push(nd.sink());
        for w in path.windows(2) {
            if !master.has_edge(w[0], w[1]) {
                flag(None, w[0], w[1], &mut report);
            }
        }
        let g = pricing.iter().find(|g| g.root == r.first()).unwrap();
        let mut p = r.nodes.clone();
        p.push(g.sink);
        for w in p.windows(2) {
            if !g.has_edge(w[0], w[1]) {
                flag(Some(g.root), w[0], w[1], &mut report);
            }
        }
    }
    for r1 in &routes {
        for r2 in &routes {
            if r1.nodes.iter().any(|v| r2.nodes.contains(v)) {
                continue;
            }
            let av = AvRoute { mini_routes: vec![r1.clone(), r2.clone()] };
            if feasible_av_route(inst, &av).is_ok() {
                report.chained_pairs += 1;
                if !master.has_edge(r1.last(), r2.first()) {
                    flag(None, r1.last(), r2.first(), &mut report);
                }
            }
        }
    }
    Ok(report)
}
