#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use ctspav_core::feasibility::{earliest_schedule, feasible_av_route, feasible_sequence, sequence_distance, AvRoute, MiniRoute};
use ctspav_core::model::{Instance, Params};
use ctspav_core::network::PricingGraph;
use ctspav_core::pricing::{Cost, Duals, COST_SCALE};
use ctspav_core::scenario::{generate_synthetic, GeneratorConfig};

/// Small instance with homes close together and desired times bunched so
/// that sharing is possible.
pub fn small_instance(seed: u64, n: usize) -> Instance {
    let cfg = GeneratorConfig {
        seed,
        n,
        inner_radius_m: 2_000.0,
        outer_radius_m: 6_000.0,
        arrival_sd: 120,
        departure_sd: 120,
        params: Params { capacity: 4, delta: 600, detour_ratio: 0.5, service: 0 },
        ..GeneratorConfig::default()
    };
    generate_synthetic(&cfg).unwrap()
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn subsets(items: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 1u32..(1 << items.len()) {
        if mask.count_ones() as usize <= max {
            out.push((0..items.len()).filter(|&k| mask >> k & 1 == 1).map(|k| items[k]).collect());
        }
    }
    out
}

/// Every feasible mini route, by brute force over pickup subsets and both
/// orders.
pub fn oracle_mini_routes(inst: &Instance) -> Vec<Vec<usize>> {
    let n = inst.n();
    let mut out = Vec::new();
    for pool in [(1..=n).collect::<Vec<_>>(), (2 * n + 1..=3 * n).collect()] {
        for set in subsets(&pool, inst.capacity()) {
            for ps in permutations(&set) {
                let drops: Vec<usize> = set.iter().map(|p| p + n).collect();
                for ds in permutations(&drops) {
                    let nodes: Vec<usize> = ps.iter().chain(&ds).copied().collect();
                    if MiniRoute::new(inst, nodes.clone()).is_ok() && earliest_schedule(inst, &nodes).is_ok() {
                        out.push(nodes);
                    }
                }
            }
        }
    }
    out.sort();
    out
}

fn mask_of(inst: &Instance, nodes: &[usize]) -> u32 {
    let nd = inst.nodes();
    nodes.iter().filter(|&&v| nd.is_pickup(v)).fold(0, |m, &p| m | 1 << nd.pickup_slot(p))
}

/// Cheapest cover of all trips by disjoint routes, given the cheapest route
/// cost for every covered trip set.
fn partition(full: u32, best: &HashMap<u32, i64>) -> i64 {
    partition_by(full, best, |d| (d, 0)).0
}

/// Partition DP over `(a, b)` route keys compared lexicographically.
fn partition_by(full: u32, best: &HashMap<u32, i64>, key: impl Fn(i64) -> (i64, i64)) -> (i64, i64) {
    const NONE: (i64, i64) = (i64::MAX, i64::MAX);
    let mut dp = vec![NONE; full as usize + 1];
    dp[0] = (0, 0);
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let mut sub = mask;
        while sub > 0 {
            if sub & low != 0 {
                if let Some(&c) = best.get(&sub) {
                    let rest = dp[(mask ^ sub) as usize];
                    if rest != NONE {
                        let k = key(c);
                        let cand = (rest.0 + k.0, rest.1 + k.1);
                        if cand < dp[mask as usize] {
                            dp[mask as usize] = cand;
                        }
                    }
                }
            }
            sub = (sub - 1) & mask;
        }
    }
    dp[full as usize]
}

/// Optimal CTSPAV objective by enumerating every AV route as a chain of
/// disjoint mini routes.
pub fn oracle_ctspav(inst: &Instance, penalty: i64) -> i64 {
    let best: HashMap<u32, i64> = ctspav_route_costs(inst).into_iter().map(|(m, d)| (m, d + penalty)).collect();
    partition((1u32 << (2 * inst.n())) - 1, &best)
}

/// Both lexicographic optima over AV-route covers: `(min vehicles, least
/// distance with that many)` and `(min distance, least vehicles at that
/// distance)`.
pub fn oracle_ctspav_pareto(inst: &Instance) -> ((i64, i64), (i64, i64)) {
    let best = ctspav_route_costs(inst);
    let full = (1u32 << (2 * inst.n())) - 1;
    (partition_by(full, &best, |d| (1, d)), partition_by(full, &best, |d| (d, 1)))
}

/// Shortest AV route distance for every set of trips one vehicle can serve.
fn ctspav_route_costs(inst: &Instance) -> HashMap<u32, i64> {
    let routes: Vec<MiniRoute> = oracle_mini_routes(inst).into_iter().map(|r| MiniRoute { nodes: r }).collect();
    let mut best: HashMap<u32, i64> = HashMap::new();
    fn grow(inst: &Instance, routes: &[MiniRoute], chain: &mut Vec<MiniRoute>, used: u32, best: &mut HashMap<u32, i64>) {
        let nodes: Vec<usize> = chain.iter().flat_map(|r| r.nodes.clone()).collect();
        let cost = sequence_distance(inst, &nodes);
        let e = best.entry(used).or_insert(i64::MAX);
        *e = (*e).min(cost);
        for r in routes {
            let m = mask_of(inst, &r.nodes);
            if m & used != 0 {
                continue;
            }
            chain.push(r.clone());
            if feasible_av_route(inst, &AvRoute { mini_routes: chain.clone() }).is_ok() {
                grow(inst, routes, chain, used | m, best);
            }
            chain.pop();
        }
    }
    for r in &routes {
        let mut chain = vec![r.clone()];
        if feasible_av_route(inst, &AvRoute { mini_routes: chain.clone() }).is_ok() {
            grow(inst, &routes, &mut chain, mask_of(inst, &r.nodes), &mut best);
        }
    }
    best
}

/// Every feasible elementary route that may interleave pickups and
/// dropoffs.
pub fn oracle_darp_routes(inst: &Instance) -> Vec<Vec<usize>> {
    fn grow(inst: &Instance, seq: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let nd = inst.nodes();
        let open = seq.iter().filter(|&&v| nd.is_pickup(v)).count() * 2 != seq.len();
        if !seq.is_empty() && !open && feasible_sequence(inst, seq).is_ok() {
            out.push(seq.clone());
        }
        for v in nd.trip_nodes() {
            if seq.contains(&v) {
                continue;
            }
            if nd.is_dropoff(v) && !seq.contains(&nd.pickup_of(v)) {
                continue;
            }
            let load = seq.iter().filter(|&&u| nd.is_pickup(u)).count() * 2 - seq.len();
            if nd.is_pickup(v) && load >= inst.capacity() {
                continue;
            }
            seq.push(v);
            // Schedule of a prefix ignores rides of open riders' dropoffs not
            // yet visited, so it is a valid pruning test.
            if earliest_schedule(inst, seq).is_ok() {
                grow(inst, seq, out);
            }
            seq.pop();
        }
    }
    let mut out = Vec::new();
    grow(inst, &mut Vec::new(), &mut out);
    out
}

/// Optimal objective over general elementary routes, and the fewest
/// vehicles regardless of distance.
pub fn oracle_darp(inst: &Instance, penalty: i64) -> (i64, usize) {
    let mut best: HashMap<u32, i64> = HashMap::new();
    for r in oracle_darp_routes(inst) {
        let e = best.entry(mask_of(inst, &r)).or_insert(i64::MAX);
        *e = (*e).min(sequence_distance(inst, &r) + penalty);
    }
    let full = (1u32 << (2 * inst.n())) - 1;
    let z = partition(full, &best);
    let unit: HashMap<u32, i64> = best.keys().map(|&m| (m, 1)).collect();
    (z, partition(full, &unit) as usize)
}

/// Duals in thousandths so they are exact in fixed point.
pub fn random_duals(inst: &Instance, graphs: &[PricingGraph], rng: &mut ChaCha8Rng) -> (Duals, Vec<i64>, HashMap<(usize, usize), i64>) {
    let nd = inst.nodes();
    let mut pi = vec![0i64; nd.count()];
    let high = if rng.gen_bool(0.5) { 40_000 } else { 3_000 };
    for p in nd.pickups() {
        pi[p] = rng.gen_range(-5_000..high);
    }
    let mut mu = HashMap::new();
    for g in graphs {
        for (u, v) in g.edges() {
            if nd.is_trip(u) && nd.is_trip(v) && !mu.contains_key(&(u, v)) && rng.gen_bool(0.3) {
                mu.insert((u, v), -rng.gen_range(0..20_000));
            }
        }
    }
    let unit = (COST_SCALE / 1000.0) as Cost;
    let duals = Duals {
        pi: pi.iter().map(|&x| x as Cost * unit).collect(),
        mu: mu.iter().map(|(&e, &x)| (e, x as Cost * unit)).collect(),
    };
    (duals, pi, mu)
}

/// Every root-to-sink path of the graph that delivers each rider it picks up.
pub fn complete_paths(inst: &Instance, g: &PricingGraph) -> Vec<Vec<usize>> {
    fn walk(inst: &Instance, g: &PricingGraph, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let nd = inst.nodes();
        let u = *path.last().unwrap();
        for &v in g.out(u) {
            if v == g.sink {
                let open = path.iter().filter(|&&w| nd.is_pickup(w)).count() * 2 != path.len();
                if !open {
                    let mut p = path.clone();
                    p.push(v);
                    out.push(p);
                }
                continue;
            }
            if path.contains(&v) || (nd.is_dropoff(v) && !path.contains(&nd.pickup_of(v))) {
                continue;
            }
            path.push(v);
            walk(inst, g, path, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    walk(inst, g, &mut vec![g.root], &mut out);
    out
}
