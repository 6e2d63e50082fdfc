//! Schedule feasibility of mini routes, AV routes and general node
//! sequences.
//!
//! Every check reduces to a system of difference constraints over the
//! service start times of a node sequence: windows, travel times between
//! consecutive nodes (no waiting before a dropoff) and ride limits. The
//! least solution of that system is the canonical schedule.

use serde::{Deserialize, Serialize};

use crate::model::{Direction, Instance, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationClass {
    TimeWindow,
    RideDuration,
    Capacity,
    Precedence,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FeasibilityError {
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error("infeasible: {class:?} violated at node {node}")]
    Infeasible { class: ViolationClass, node: usize },
    #[error("mini route {index} is infeasible: {cause}")]
    MiniRoute { index: usize, cause: Box<FeasibilityError> },
    #[error("mini routes {first} and {second} cannot be chained")]
    Incompatible { first: usize, second: usize },
}

/// Service start times along a node sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub nodes: Vec<usize>,
    pub times: Vec<Time>,
}

impl Schedule {
    pub fn time_of(&self, node: usize) -> Option<Time> {
        self.nodes.iter().position(|&v| v == node).map(|k| self.times[k])
    }
}

/// A pickups-then-dropoffs sequence serving trips of one direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MiniRoute {
    pub nodes: Vec<usize>,
}

impl MiniRoute {
    /// Checks the structural requirements: one direction, all pickups
    /// before all dropoffs, each rider picked up and dropped off exactly
    /// once, at most `K` riders.
    pub fn new(inst: &Instance, nodes: Vec<usize>) -> Result<MiniRoute, FeasibilityError> {
        let nd = inst.nodes();
        let invalid = |m: String| Err(FeasibilityError::InvalidRoute(m));
        if nodes.is_empty() {
            return invalid("empty mini route".into());
        }
        if let Some(&v) = nodes.iter().find(|&&v| !nd.is_trip(v)) {
            return invalid(format!("node {v} is not a trip node"));
        }
        let dir = nd.direction(nodes[0]);
        if nodes.iter().any(|&v| nd.direction(v) != dir) {
            return invalid("mixes inbound and outbound trips".into());
        }
        let k = nodes.iter().take_while(|&&v| nd.is_pickup(v)).count();
        if k == 0 || nodes[k..].iter().any(|&v| nd.is_pickup(v)) {
            return invalid("pickups must precede all dropoffs".into());
        }
        if nodes.len() != 2 * k {
            return invalid("every rider needs exactly one pickup and one dropoff".into());
        }
        let mut seen = std::collections::HashSet::new();
        if !nodes.iter().all(|v| seen.insert(*v)) {
            return invalid("repeated node".into());
        }
        if nodes[..k].iter().any(|&p| !seen.contains(&(p + nd.n))) {
            return invalid("a rider is not dropped off".into());
        }
        if k > inst.capacity() {
            return Err(FeasibilityError::Infeasible { class: ViolationClass::Capacity, node: nodes[k - 1] });
        }
        Ok(MiniRoute { nodes })
    }

    pub fn direct(inst: &Instance, pickup: usize) -> MiniRoute {
        MiniRoute::new(inst, vec![pickup, pickup + inst.n()]).expect("direct trip is structurally valid")
    }

    pub fn first(&self) -> usize {
        self.nodes[0]
    }
    pub fn last(&self) -> usize {
        *self.nodes.last().unwrap()
    }
    pub fn pickups(&self) -> &[usize] {
        &self.nodes[..self.nodes.len() / 2]
    }
    pub fn direction(&self, inst: &Instance) -> Direction {
        inst.nodes().direction(self.nodes[0]).unwrap()
    }
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }
    /// Internal distance from first pickup to last dropoff.
    pub fn distance(&self, inst: &Instance) -> i64 {
        self.edges().map(|(u, v)| inst.sigma(u, v)).sum()
    }
}

/// Depot-to-depot sequence of mini routes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvRoute {
    pub mini_routes: Vec<MiniRoute>,
}

impl AvRoute {
    pub fn nodes(&self) -> Vec<usize> {
        self.mini_routes.iter().flat_map(|r| r.nodes.iter().copied()).collect()
    }
    /// Distance including the depot legs.
    pub fn distance(&self, inst: &Instance) -> i64 {
        sequence_distance(inst, &self.nodes())
    }
}

/// Distance of `v_s -> nodes -> v_t`.
pub fn sequence_distance(inst: &Instance, nodes: &[usize]) -> i64 {
    let nd = inst.nodes();
    if nodes.is_empty() {
        return 0;
    }
    let inner: i64 = nodes.windows(2).map(|w| inst.sigma(w[0], w[1])).sum();
    inst.sigma(nd.source(), nodes[0]) + inner + inst.sigma(*nodes.last().unwrap(), nd.sink())
}

/// Feasible schedule of an AV route including the depot times.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteSchedule {
    pub depot_departure: Time,
    pub depot_return: Time,
    pub stops: Schedule,
}

/// Least schedule for `nodes` under the instance windows, or the first
/// violated constraint class. Ride limits apply to every rider whose pickup
/// and dropoff both appear.
pub fn earliest_schedule(inst: &Instance, nodes: &[usize]) -> Result<Schedule, FeasibilityError> {
    earliest_schedule_within(inst, nodes, &|v| inst.a(v))
}

/// As [`earliest_schedule`] with the window openings replaced by
/// `earliest`.
pub fn earliest_schedule_within(
    inst: &Instance,
    nodes: &[usize],
    earliest: &dyn Fn(usize) -> Time,
) -> Result<Schedule, FeasibilityError> {
    let nd = inst.nodes();
    let m = nodes.len();
    if m == 0 {
        return Ok(Schedule { nodes: Vec::new(), times: Vec::new() });
    }
    let gap: Vec<Time> =
        (0..m).map(|k| if k == 0 { 0 } else { inst.s(nodes[k - 1]) + inst.tau(nodes[k - 1], nodes[k]) }).collect();
    let fixed: Vec<bool> = (0..m).map(|k| k > 0 && nd.is_dropoff(nodes[k])).collect();
    let mut rides: Vec<(usize, usize, Time)> = Vec::new();
    for (p, &u) in nodes.iter().enumerate() {
        if nd.is_pickup(u) {
            if let Some(d) = nodes[p + 1..].iter().position(|&v| v == u + nd.n) {
                rides.push((p, p + 1 + d, inst.ride_limit(u) + inst.s(u)));
            }
        }
    }

    let mut t: Vec<Time> = nodes.iter().map(|&v| earliest(v)).collect();
    let first_late = |t: &[Time]| (0..m).find(|&k| t[k] > inst.b(nodes[k]));

    relax(&mut t, &gap, &fixed, &[], m);
    if let Some(k) = first_late(&t) {
        return Err(FeasibilityError::Infeasible { class: ViolationClass::TimeWindow, node: nodes[k] });
    }
    if !rides.is_empty() {
        let converged = relax(&mut t, &gap, &fixed, &rides, m + 1);
        if !converged || first_late(&t).is_some() {
            let p = rides
                .iter()
                .find(|&&(p, d, lim)| t[d] - t[p] >= lim)
                .map_or(rides[0].0, |r| r.0);
            return Err(FeasibilityError::Infeasible { class: ViolationClass::RideDuration, node: nodes[p] });
        }
    }
    Ok(Schedule { nodes: nodes.to_vec(), times: t })
}

/// Raises `t` to the least solution of the difference constraints. Returns
/// false when it has not stabilised after `max_passes` sweeps, which
/// signals a positive cycle.
fn relax(t: &mut [Time], gap: &[Time], fixed: &[bool], rides: &[(usize, usize, Time)], max_passes: usize) -> bool {
    let m = t.len();
    for _ in 0..max_passes.max(1) {
        let mut changed = false;
        for k in 1..m {
            let lo = t[k - 1] + gap[k];
            if t[k] < lo {
                t[k] = lo;
                changed = true;
            }
        }
        for k in (1..m).rev() {
            if fixed[k] {
                let lo = t[k] - gap[k];
                if t[k - 1] < lo {
                    t[k - 1] = lo;
                    changed = true;
                }
            }
        }
        for &(p, d, lim) in rides {
            let lo = t[d] - lim;
            if t[p] < lo {
                t[p] = lo;
                changed = true;
            }
        }
        if !changed {
            return true;
        }
    }
    rides.is_empty()
}

pub fn feasible_mini_route(inst: &Instance, r: &MiniRoute) -> Result<Schedule, FeasibilityError> {
    MiniRoute::new(inst, r.nodes.clone())?;
    earliest_schedule(inst, &r.nodes)
}

fn depot_times(inst: &Instance, s: &Schedule) -> (Time, Time) {
    let nd = inst.nodes();
    let first = s.nodes[0];
    let last = *s.nodes.last().unwrap();
    let dep = s.times[0] - inst.tau(nd.source(), first);
    let ret = *s.times.last().unwrap() + inst.s(last) + inst.tau(last, nd.sink());
    (dep, ret)
}

/// Joint schedule of the mini routes chained in order, with depot departure
/// and return times.
pub fn feasible_av_route(inst: &Instance, route: &AvRoute) -> Result<RouteSchedule, FeasibilityError> {
    if route.mini_routes.is_empty() {
        return Err(FeasibilityError::InvalidRoute("AV route without mini routes".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for (index, r) in route.mini_routes.iter().enumerate() {
        feasible_mini_route(inst, r).map_err(|cause| FeasibilityError::MiniRoute { index, cause: Box::new(cause) })?;
        if !r.nodes.iter().all(|v| seen.insert(*v)) {
            return Err(FeasibilityError::InvalidRoute(format!("mini route {index} repeats a node")));
        }
    }
    let all = route.nodes();
    check_commuter_order(inst, &all)?;
    let mut end = route.mini_routes[0].nodes.len();
    for k in 1..route.mini_routes.len() {
        end += route.mini_routes[k].nodes.len();
        if earliest_schedule(inst, &all[..end]).is_err() {
            return Err(FeasibilityError::Incompatible { first: k - 1, second: k });
        }
    }
    let stops = earliest_schedule(inst, &all)?;
    let (depot_departure, depot_return) = depot_times(inst, &stops);
    Ok(RouteSchedule { depot_departure, depot_return, stops })
}

/// Inbound trip of a commuter must be completed before the outbound one.
fn check_commuter_order(inst: &Instance, nodes: &[usize]) -> Result<(), FeasibilityError> {
    let n = inst.n();
    let pos: std::collections::HashMap<usize, usize> = nodes.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    for &v in nodes {
        if v > 2 * n && v <= 3 * n {
            if let Some(&q) = pos.get(&(v - n)) {
                if q > pos[&v] {
                    return Err(FeasibilityError::Infeasible { class: ViolationClass::Precedence, node: v });
                }
            }
        }
    }
    Ok(())
}

/// Feasibility of an arbitrary depot-to-depot node sequence: pairing,
/// precedence, capacity, windows and ride limits. Used for routes that
/// interleave pickups and dropoffs.
pub fn feasible_sequence(inst: &Instance, nodes: &[usize]) -> Result<RouteSchedule, FeasibilityError> {
    let nd = inst.nodes();
    if nodes.is_empty() {
        return Err(FeasibilityError::InvalidRoute("empty route".into()));
    }
    let mut seen = std::collections::HashSet::new();
    let mut load = 0usize;
    for &v in nodes {
        if !nd.is_trip(v) {
            return Err(FeasibilityError::InvalidRoute(format!("node {v} is not a trip node")));
        }
        if !seen.insert(v) {
            return Err(FeasibilityError::InvalidRoute(format!("node {v} repeated")));
        }
        if nd.is_pickup(v) {
            load += 1;
            if load > inst.capacity() {
                return Err(FeasibilityError::Infeasible { class: ViolationClass::Capacity, node: v });
            }
        } else {
            if !seen.contains(&nd.pickup_of(v)) {
                return Err(FeasibilityError::Infeasible { class: ViolationClass::Precedence, node: v });
            }
            load -= 1;
        }
    }
    if load != 0 {
        return Err(FeasibilityError::InvalidRoute("a rider is never dropped off".into()));
    }
    check_commuter_order(inst, nodes)?;
    let stops = earliest_schedule(inst, nodes)?;
    let (depot_departure, depot_return) = depot_times(inst, &stops);
    Ok(RouteSchedule { depot_departure, depot_return, stops })
}
