//! Least-reduced-cost route search by label setting.
//!
//! Costs are fixed-point integers (`COST_SCALE` units per cost unit) so
//! path costs and dominance comparisons are exact once duals are snapped.
//!
//! A label keeps, besides cost and earliest time, the latest feasible time
//! of its node and for every open rider a pair `(cap, off)`: if service at
//! the current node starts at `x`, that rider can have been picked up no
//! later than `min(cap, x - off)`. This is exact for ride limits under
//! waiting at pickups.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::feasibility::MiniRoute;
use crate::model::{Instance, Time};
use crate::network::PricingGraph;

pub type Cost = i128;

pub const COST_SCALE: f64 = 1e9;

/// Reduced costs below this (in cost units) count as negative.
pub const NEGATIVE_TOL: f64 = 1e-6;

pub fn to_fixed(x: f64) -> Cost {
    (x * COST_SCALE).round() as Cost
}

pub fn from_fixed(c: Cost) -> f64 {
    c as f64 / COST_SCALE
}

pub fn negative_threshold() -> Cost {
    -to_fixed(NEGATIVE_TOL)
}

/// Dual values of the cover rows (by pickup node) and edge-selection rows.
/// Missing edges have dual zero.
#[derive(Debug, Clone, Default)]
pub struct Duals {
    pub pi: Vec<Cost>,
    pub mu: HashMap<(usize, usize), Cost>,
}

impl Duals {
    pub fn zero(inst: &Instance) -> Self {
        Duals { pi: vec![0; inst.nodes().count()], mu: HashMap::new() }
    }
    pub fn from_f64(pi: &[f64], mu: impl IntoIterator<Item = ((usize, usize), f64)>) -> Self {
        Duals {
            pi: pi.iter().map(|&x| to_fixed(x)).collect(),
            mu: mu.into_iter().map(|(e, x)| (e, to_fixed(x))).filter(|&(_, c)| c != 0).collect(),
        }
    }
    pub fn mu(&self, u: usize, v: usize) -> Cost {
        self.mu.get(&(u, v)).copied().unwrap_or(0)
    }
}

/// Reduced cost of a mini route computed straight from the duals.
pub fn mini_route_reduced_cost(inst: &Instance, route: &[usize], duals: &Duals) -> Cost {
    let nd = inst.nodes();
    let pi: Cost = route.iter().filter(|&&v| nd.is_pickup(v)).map(|&v| duals.pi[v]).sum();
    let mu: Cost = route.windows(2).map(|w| duals.mu(w[0], w[1])).sum();
    -pi - mu
}

/// Adjacency with a cost per edge and the time data used by the search.
#[derive(Debug, Clone)]
pub struct CostedGraph {
    pub succ: Vec<Vec<(usize, Cost)>>,
    pub earliest: Vec<Time>,
    pub sink: usize,
}

impl CostedGraph {
    pub fn cost(&self, u: usize, v: usize) -> Option<Cost> {
        self.succ[u].iter().find(|e| e.0 == v).map(|e| e.1)
    }
    pub fn path_cost(&self, path: &[usize]) -> Option<Cost> {
        path.windows(2).map(|w| self.cost(w[0], w[1])).sum()
    }
}

/// Pricing graph with raw edge reduced costs: `-pi_u - mu_uv` out of a
/// pickup, `-mu_uv` out of a dropoff, zero into the sink.
pub fn costed_pricing_graph(inst: &Instance, g: &PricingGraph, duals: &Duals) -> CostedGraph {
    let nd = inst.nodes();
    let succ = (0..nd.count())
        .map(|u| {
            g.out(u)
                .iter()
                .map(|&v| {
                    let c = if v == g.sink {
                        0
                    } else if nd.is_pickup(u) {
                        -duals.pi[u] - duals.mu(u, v)
                    } else {
                        -duals.mu(u, v)
                    };
                    (v, c)
                })
                .collect()
        })
        .collect();
    CostedGraph { succ, earliest: g.earliest.clone(), sink: g.sink }
}

/// Shifts edge costs so every dropoff `w` satisfies
/// `c(u,v) <= c(u,w) + c(w,v)` for all edges `(u,w), (w,v), (u,v)`.
/// Edges out of pickup `k` gain `lambda_k` and edges out of its dropoff lose
/// it, so any path serving each rider it picks up keeps its cost.
pub fn dti_transform(inst: &Instance, g: &CostedGraph) -> CostedGraph {
    let nd = inst.nodes();
    let size = g.succ.len();
    let mut pred: Vec<Vec<(usize, Cost)>> = vec![Vec::new(); size];
    for (u, out) in g.succ.iter().enumerate() {
        for &(v, c) in out {
            pred[v].push((u, c));
        }
    }
    let mut lambda = vec![0 as Cost; size];
    for w in 0..size {
        if w == g.sink || !nd.is_trip(w) || !nd.is_dropoff(w) {
            continue;
        }
        let mut lam: Cost = 0;
        for &(u, cuw) in &pred[w] {
            for &(v, cwv) in &g.succ[w] {
                if let Some(cuv) = g.cost(u, v) {
                    lam = lam.min(cuw + cwv - cuv);
                }
            }
        }
        lambda[nd.pickup_of(w)] = lam;
        lambda[w] = -lam;
    }
    let succ = g
        .succ
        .iter()
        .enumerate()
        .map(|(u, out)| out.iter().map(|&(v, c)| (v, c + lambda[u])).collect())
        .collect();
    CostedGraph { succ, earliest: g.earliest.clone(), sink: g.sink }
}

/// True when the delivery triangle inequality holds for every dropoff.
pub fn satisfies_dti(inst: &Instance, g: &CostedGraph) -> bool {
    let nd = inst.nodes();
    for (u, out) in g.succ.iter().enumerate() {
        for &(w, cuw) in out {
            if w == g.sink || !nd.is_trip(w) || !nd.is_dropoff(w) {
                continue;
            }
            for &(v, cwv) in &g.succ[w] {
                if let Some(cuv) = g.cost(u, v) {
                    if cuv > cuw + cwv {
                        return false;
                    }
                }
            }
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct SearchOptions {
    /// Maximum number of labels created per search; exceeding it marks the
    /// result truncated.
    pub label_cap: Option<usize>,
    pub dominance: bool,
    /// Collect sink paths with cost strictly below this value.
    pub threshold: Cost,
    /// Keep at most this many collected paths (cheapest first).
    pub max_paths: Option<usize>,
    /// Allow picking up a rider again after dropping them off.
    pub allow_revisits: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            label_cap: None,
            dominance: true,
            threshold: negative_threshold(),
            max_paths: None,
            allow_revisits: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchResult {
    /// Node sequences from the start node to the last node before the sink,
    /// cheapest first.
    pub paths: Vec<(Vec<usize>, Cost)>,
    /// Cheapest sink-reaching cost, if any path reached the sink.
    pub min_cost: Option<Cost>,
    pub truncated: bool,
    pub labels: usize,
}

#[derive(Debug, Clone)]
struct Rider {
    pickup: usize,
    cap: Time,
    off: Time,
}

#[derive(Debug, Clone)]
struct Label {
    node: usize,
    cost: Cost,
    time: Time,
    latest: Time,
    open: Vec<Rider>,
    parent: Option<usize>,
    visited: Vec<usize>,
    alive: bool,
}

impl Label {
    fn dominates(&self, o: &Label) -> bool {
        self.cost <= o.cost
            && self.time <= o.time
            && self.latest >= o.latest
            && self.open.iter().zip(&o.open).all(|(a, b)| a.cap >= b.cap && a.off <= b.off)
    }
}

fn path_of(labels: &[Label], mut k: usize) -> Vec<usize> {
    let mut p = Vec::new();
    loop {
        p.push(labels[k].node);
        match labels[k].parent {
            Some(q) => k = q,
            None => break,
        }
    }
    p.reverse();
    p
}

/// Extends label `l` along `u -> v` with gap `s_u + tau(u,v)`. Returns
/// `None` when the extension violates a window, the capacity, pairing or a
/// ride limit.
fn extend(inst: &Instance, g: &CostedGraph, l: &Label, v: usize, cost: Cost, revisits: bool) -> Option<Label> {
    let nd = inst.nodes();
    let u = l.node;
    let gap = inst.s(u) + inst.tau(u, v);
    let mut open: Vec<Rider> = l
        .open
        .iter()
        .map(|r| Rider { pickup: r.pickup, cap: r.cap.min(l.latest - r.off), off: r.off + gap })
        .collect();
    let arrive = l.time + gap;
    let (time, latest);
    if nd.is_pickup(v) {
        if open.len() >= inst.capacity() || open.iter().any(|r| r.pickup == v) {
            return None;
        }
        if !revisits && l.visited.contains(&v) {
            return None;
        }
        time = arrive.max(g.earliest[v]);
        latest = inst.b(v);
        if time > latest {
            return None;
        }
        let pos = open.partition_point(|r| r.pickup < v);
        open.insert(pos, Rider { pickup: v, cap: latest, off: 0 });
    } else {
        let p = nd.pickup_of(v);
        let k = open.iter().position(|r| r.pickup == p)?;
        let r = open.remove(k);
        let limit = inst.ride_limit(p) + inst.s(p);
        if r.off > limit {
            return None;
        }
        let mut hi = inst.b(v).min(l.latest + gap).min(r.cap + limit);
        let mut lo = arrive;
        if lo < g.earliest[v] {
            // Service at the dropoff cannot start before its opening; the
            // predecessor must start later instead.
            lo = g.earliest[v];
        }
        if lo > hi {
            return None;
        }
        hi = hi.max(lo);
        time = lo;
        latest = hi;
    }
    let mut visited = Vec::new();
    if !revisits {
        visited = l.visited.clone();
        visited.push(v);
    }
    Some(Label { node: v, cost: l.cost + cost, time, latest, open, parent: None, visited, alive: true })
}

/// Label-setting search from `start` to `g.sink`. The start node is a
/// pickup (mini routes) or a depot source with an open window.
pub fn label_search(inst: &Instance, g: &CostedGraph, start: usize, opts: &SearchOptions) -> SearchResult {
    let nd = inst.nodes();
    let mut labels: Vec<Label> = Vec::new();
    let mut buckets: HashMap<(usize, Vec<usize>), Vec<usize>> = HashMap::new();
    let first = if nd.is_trip(start) && nd.is_pickup(start) {
        Label {
            node: start,
            cost: 0,
            time: g.earliest[start],
            latest: inst.b(start),
            open: vec![Rider { pickup: start, cap: inst.b(start), off: 0 }],
            parent: None,
            visited: vec![start],
            alive: true,
        }
    } else {
        Label {
            node: start,
            cost: 0,
            time: g.earliest[start],
            latest: inst.b(start),
            open: Vec::new(),
            parent: None,
            visited: Vec::new(),
            alive: true,
        }
    };
    labels.push(first);
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut found: Vec<(usize, Cost)> = Vec::new();
    let mut min_cost: Option<Cost> = None;
    let mut truncated = false;

    while let Some(k) = queue.pop_front() {
        if !labels[k].alive {
            continue;
        }
        let node = labels[k].node;
        for &(v, c) in &g.succ[node] {
            if v == g.sink {
                if labels[k].open.is_empty() {
                    let total = labels[k].cost + c;
                    min_cost = Some(min_cost.map_or(total, |m| m.min(total)));
                    if total < opts.threshold {
                        found.push((k, total));
                    }
                }
                continue;
            }
            let Some(mut nl) = extend(inst, g, &labels[k], v, c, opts.allow_revisits) else { continue };
            nl.parent = Some(k);
            if opts.label_cap.is_some_and(|cap| labels.len() >= cap) {
                truncated = true;
                break;
            }
            let idx = labels.len();
            if opts.dominance {
                let key = (v, nl.open.iter().map(|r| r.pickup).collect::<Vec<_>>());
                let bucket = buckets.entry(key).or_default();
                if bucket.iter().any(|&o| labels[o].alive && labels[o].dominates(&nl)) {
                    continue;
                }
                for &o in bucket.iter() {
                    if labels[o].alive && nl.dominates(&labels[o]) {
                        labels[o].alive = false;
                    }
                }
                bucket.retain(|&o| labels[o].alive);
                bucket.push(idx);
            }
            labels.push(nl);
            queue.push_back(idx);
        }
        if truncated {
            break;
        }
    }

    found.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut seen = HashSet::new();
    let mut paths = Vec::new();
    for (k, c) in found {
        let p = path_of(&labels, k);
        if seen.insert(p.clone()) {
            paths.push((p, c));
            if opts.max_paths.is_some_and(|m| paths.len() >= m) {
                break;
            }
        }
    }
    SearchResult { paths, min_cost, truncated, labels: labels.len() }
}

#[derive(Debug, Clone)]
pub struct PricingOptions {
    pub search: SearchOptions,
    pub dti: bool,
}

impl Default for PricingOptions {
    fn default() -> Self {
        PricingOptions { search: SearchOptions { max_paths: Some(30), ..Default::default() }, dti: true }
    }
}

#[derive(Debug, Clone)]
pub struct PricedRoute {
    pub route: MiniRoute,
    pub reduced_cost: Cost,
}

#[derive(Debug, Clone, Default)]
pub struct ColumnBatch {
    pub routes: Vec<PricedRoute>,
    /// Least reduced cost over every root, if any route reached a sink.
    pub min_cost: Option<Cost>,
    pub truncated: bool,
    pub labels: usize,
}

/// Least-cost mini routes from one root.
pub fn price_from_root(inst: &Instance, g: &PricingGraph, duals: &Duals, opts: &PricingOptions) -> SearchResult {
    let raw = costed_pricing_graph(inst, g, duals);
    let costed = if opts.dti { dti_transform(inst, &raw) } else { raw };
    label_search(inst, &costed, g.root, &opts.search)
}

/// Prices every root in parallel and merges the negative routes not yet in
/// `existing`.
pub fn price_all_roots(
    inst: &Instance,
    graphs: &[PricingGraph],
    duals: &Duals,
    existing: &HashSet<Vec<usize>>,
    opts: &PricingOptions,
) -> ColumnBatch {
    let results: Vec<SearchResult> = graphs.par_iter().map(|g| price_from_root(inst, g, duals, opts)).collect();
    let mut batch = ColumnBatch::default();
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    for r in results {
        batch.truncated |= r.truncated;
        batch.labels += r.labels;
        if let Some(m) = r.min_cost {
            batch.min_cost = Some(batch.min_cost.map_or(m, |b: Cost| b.min(m)));
        }
        for (p, c) in r.paths {
            if existing.contains(&p) || !seen.insert(p.clone()) {
                continue;
            }
            debug_assert_eq!(c, mini_route_reduced_cost(inst, &p, duals));
            batch.routes.push(PricedRoute { route: MiniRoute { nodes: p }, reduced_cost: c });
        }
    }
    batch.routes.sort_by(|a, b| a.reduced_cost.cmp(&b.reduced_cost).then_with(|| a.route.cmp(&b.route)));
    batch
}
