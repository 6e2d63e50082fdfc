//! Instance data, canonical node indexing and time-window derivation.
//!
//! Nodes are numbered `0` (depot source), `1..=4n` (trip nodes) and `4n+1`
//! (depot sink). For commuter `i` the inbound pickup is `i`, the inbound
//! dropoff `n+i`, the outbound pickup `2n+i` and the outbound dropoff `3n+i`.

use serde::{Deserialize, Serialize};

use crate::scenario::{self, Metric};

/// Seconds since midnight.
pub type Time = i64;

pub const DAY_END: Time = 86_400;

/// Window used for the depot nodes, which are unconstrained in time.
pub const OPEN_EARLIEST: Time = -1_000_000_000;
pub const OPEN_LATEST: Time = 1_000_000_000;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("node {0} is not a pickup node")]
    NotPickup(usize),
    #[error("node {0} is not an inbound pickup node")]
    NotInboundPickup(usize),
    #[error("invalid instance: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Inbound,
    Outbound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Source,
    Sink,
    Pickup(Direction),
    Dropoff(Direction),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub origin: usize,
    pub destination: usize,
    pub desired_departure: Option<Time>,
    pub desired_arrival: Option<Time>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Commuter {
    /// 1-based commuter index.
    pub id: usize,
    pub home: usize,
    pub inbound: Trip,
    pub outbound: Trip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub node: usize,
    pub earliest: Time,
    pub latest: Time,
    pub service: Time,
    /// Maximum ride duration, pickups only.
    pub ride_limit: Option<Time>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub capacity: usize,
    #[serde(rename = "delta_s")]
    pub delta: Time,
    pub detour_ratio: f64,
    #[serde(rename = "service_s", default)]
    pub service: Time,
}

impl Default for Params {
    fn default() -> Self {
        Params { capacity: 4, delta: 600, detour_ratio: 0.5, service: 0 }
    }
}

/// Index arithmetic for an instance with `n` commuters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nodes {
    pub n: usize,
}

impl Nodes {
    pub fn new(n: usize) -> Self {
        Nodes { n }
    }
    pub fn source(&self) -> usize {
        0
    }
    pub fn sink(&self) -> usize {
        4 * self.n + 1
    }
    pub fn count(&self) -> usize {
        4 * self.n + 2
    }
    pub fn trip_nodes(&self) -> std::ops::RangeInclusive<usize> {
        1..=4 * self.n
    }
    pub fn kind(&self, i: usize) -> NodeKind {
        let n = self.n;
        match i {
            0 => NodeKind::Source,
            _ if i == 4 * n + 1 => NodeKind::Sink,
            _ if i <= n => NodeKind::Pickup(Direction::Inbound),
            _ if i <= 2 * n => NodeKind::Dropoff(Direction::Inbound),
            _ if i <= 3 * n => NodeKind::Pickup(Direction::Outbound),
            _ if i <= 4 * n => NodeKind::Dropoff(Direction::Outbound),
            _ => panic!("node {i} out of range for n={n}"),
        }
    }
    pub fn is_pickup(&self, i: usize) -> bool {
        matches!(self.kind(i), NodeKind::Pickup(_))
    }
    pub fn is_dropoff(&self, i: usize) -> bool {
        matches!(self.kind(i), NodeKind::Dropoff(_))
    }
    pub fn is_trip(&self, i: usize) -> bool {
        i >= 1 && i <= 4 * self.n
    }
    pub fn direction(&self, i: usize) -> Option<Direction> {
        match self.kind(i) {
            NodeKind::Pickup(d) | NodeKind::Dropoff(d) => Some(d),
            _ => None,
        }
    }
    /// 1-based commuter owning a trip node.
    pub fn commuter(&self, i: usize) -> usize {
        (i - 1) % self.n + 1
    }
    /// Pickup node served by dropoff `d`.
    pub fn pickup_of(&self, d: usize) -> usize {
        debug_assert!(self.is_dropoff(d));
        d - self.n
    }
    pub fn partner(&self, i: usize) -> Result<usize, ModelError> {
        node_partner(self.n, i)
    }
    /// Pickup nodes, inbound first.
    pub fn pickups(&self) -> impl Iterator<Item = usize> {
        let n = self.n;
        (1..=n).chain(2 * n + 1..=3 * n)
    }
    pub fn pickups_of(&self, dir: Direction) -> std::ops::RangeInclusive<usize> {
        match dir {
            Direction::Inbound => 1..=self.n,
            Direction::Outbound => 2 * self.n + 1..=3 * self.n,
        }
    }
    /// Position of a pickup within `pickups()`; `0..2n`.
    pub fn pickup_slot(&self, p: usize) -> usize {
        if p <= self.n {
            p - 1
        } else {
            p - self.n - 1
        }
    }
}

/// Dropoff node paired with pickup `i` of an instance with `n` commuters.
pub fn node_partner(n: usize, i: usize) -> Result<usize, ModelError> {
    let nodes = Nodes::new(n);
    if i == 0 || i > 4 * n || !nodes.is_pickup(i) {
        return Err(ModelError::NotPickup(i));
    }
    Ok(n + i)
}

/// Mandatory visit order of commuter `i`'s four nodes.
pub fn precedence_chain(n: usize, i: usize) -> Result<[usize; 4], ModelError> {
    if i == 0 || i > n {
        return Err(ModelError::NotInboundPickup(i));
    }
    Ok([i, n + i, 2 * n + i, 3 * n + i])
}

fn ride_limit(tau: Time, detour_ratio: f64) -> Time {
    ((1.0 + detour_ratio) * tau as f64 + 1e-7).floor() as Time
}

/// Derives windows, service durations and ride limits for every node
/// (`0..=4n+1`) from the commuters' desired inbound arrival and outbound
/// departure times.
pub fn build_requests(
    commuters: &[Commuter],
    travel_time: impl Fn(usize, usize) -> Time,
    params: &Params,
) -> Result<Vec<Request>, ModelError> {
    let n = commuters.len();
    let nodes = Nodes::new(n);
    let delta = params.delta;
    let s = params.service;
    if delta < 0 || params.detour_ratio < 0.0 || s < 0 {
        return Err(ModelError::Invalid("delta, detour ratio and service must be non-negative".into()));
    }
    let open = |node| Request { node, earliest: OPEN_EARLIEST, latest: OPEN_LATEST, service: 0, ride_limit: None };
    let mut req: Vec<Request> = (0..nodes.count()).map(open).collect();
    let clamp = |node: usize, a: Time| -> Time {
        if a < 0 {
            log::warn!("earliest time of node {node} clamped from {a} to 0");
            0
        } else {
            a
        }
    };
    for (k, c) in commuters.iter().enumerate() {
        let i = k + 1;
        let at = c.inbound.desired_arrival.ok_or_else(|| {
            ModelError::Invalid(format!("commuter {} lacks a desired inbound arrival", c.id))
        })?;
        let dt = c.outbound.desired_departure.ok_or_else(|| {
            ModelError::Invalid(format!("commuter {} lacks a desired outbound departure", c.id))
        })?;
        let tau_in = travel_time(c.inbound.origin, c.inbound.destination);
        let tau_out = travel_time(c.outbound.origin, c.outbound.destination);
        let l_in = ride_limit(tau_in, params.detour_ratio);
        let l_out = ride_limit(tau_out, params.detour_ratio);

        let b_d_in = at + delta;
        let b_p_in = b_d_in - s - l_in;
        let a_p_in = clamp(i, b_p_in - 2 * delta);
        let a_d_in = a_p_in + s + tau_in;

        let a_p_out = clamp(2 * n + i, dt - delta);
        let b_p_out = dt + delta;
        let b_d_out = b_p_out + s + l_out;
        let a_d_out = a_p_out + s + tau_out;

        let entries = [
            (i, a_p_in, b_p_in, Some(l_in)),
            (n + i, a_d_in, b_d_in, None),
            (2 * n + i, a_p_out, b_p_out, Some(l_out)),
            (3 * n + i, a_d_out, b_d_out, None),
        ];
        for (node, a, b, l) in entries {
            if b < 0 {
                return Err(ModelError::Invalid(format!("window of node {node} ends before midnight ({b})")));
            }
            if b > DAY_END {
                return Err(ModelError::Invalid(format!("window of node {node} crosses midnight ({b})")));
            }
            if a > b {
                return Err(ModelError::Invalid(format!("empty window at node {node}: [{a}, {b}]")));
            }
            req[node] = Request { node, earliest: a, latest: b, service: s, ride_limit: l };
        }
    }
    Ok(req)
}

/// Serialized instance description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    pub locations: Vec<Point>,
    pub workplace: usize,
    pub depot: usize,
    pub commuters: Vec<CommuterSpec>,
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub travel_time: Option<Vec<Vec<Time>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub travel_dist: Option<Vec<Vec<i64>>>,
}

fn default_speed() -> f64 {
    scenario::DEFAULT_SPEED_MPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommuterSpec {
    pub home: usize,
    pub desired_arrival: Time,
    pub desired_departure: Time,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub metric: Metric,
    pub speed_mps: f64,
    pub locations: Vec<Point>,
    pub workplace: usize,
    pub depot: usize,
    pub commuters: Vec<Commuter>,
    pub params: Params,
    nloc: usize,
    travel_time: Vec<Time>,
    travel_dist: Vec<i64>,
    explicit_matrices: bool,
    requests: Vec<Request>,
    node_loc: Vec<usize>,
}

impl Instance {
    pub fn from_file(f: InstanceFile) -> Result<Instance, ModelError> {
        let nloc = f.locations.len();
        let check = |what: &str, idx: usize| {
            if idx >= nloc {
                Err(ModelError::Invalid(format!("{what} refers to unknown location {idx}")))
            } else {
                Ok(())
            }
        };
        check("workplace", f.workplace)?;
        check("depot", f.depot)?;
        for c in &f.commuters {
            check("commuter home", c.home)?;
            if c.home == f.workplace {
                return Err(ModelError::Invalid("a home coincides with the workplace".into()));
            }
        }
        let explicit = f.travel_time.is_some() || f.travel_dist.is_some();
        let (tt, td) = match (f.travel_time, f.travel_dist) {
            (Some(t), Some(d)) => (flatten(&t, nloc, "travel_time")?, flatten(&d, nloc, "travel_dist")?),
            (None, None) => {
                let (t, d) = scenario::matrices(&f.locations, f.metric, f.speed_mps);
                (t, d)
            }
            _ => return Err(ModelError::Invalid("travel_time and travel_dist must be given together".into())),
        };
        let commuters: Vec<Commuter> = f
            .commuters
            .iter()
            .enumerate()
            .map(|(k, c)| Commuter {
                id: k + 1,
                home: c.home,
                inbound: Trip {
                    origin: c.home,
                    destination: f.workplace,
                    desired_departure: None,
                    desired_arrival: Some(c.desired_arrival),
                },
                outbound: Trip {
                    origin: f.workplace,
                    destination: c.home,
                    desired_departure: Some(c.desired_departure),
                    desired_arrival: None,
                },
            })
            .collect();
        Instance::assemble(
            f.name,
            f.metric,
            f.speed_mps,
            f.locations,
            f.workplace,
            f.depot,
            commuters,
            f.params,
            nloc,
            tt,
            td,
            explicit,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        name: String,
        metric: Metric,
        speed_mps: f64,
        locations: Vec<Point>,
        workplace: usize,
        depot: usize,
        commuters: Vec<Commuter>,
        params: Params,
        nloc: usize,
        travel_time: Vec<Time>,
        travel_dist: Vec<i64>,
        explicit_matrices: bool,
    ) -> Result<Instance, ModelError> {
        let n = commuters.len();
        if n == 0 {
            return Err(ModelError::Invalid("no commuters".into()));
        }
        if params.capacity == 0 {
            return Err(ModelError::Invalid("vehicle capacity must be positive".into()));
        }
        let mut node_loc = vec![depot; 4 * n + 2];
        for (k, c) in commuters.iter().enumerate() {
            let i = k + 1;
            node_loc[i] = c.home;
            node_loc[n + i] = workplace;
            node_loc[2 * n + i] = workplace;
            node_loc[3 * n + i] = c.home;
        }
        let tt = |a: usize, b: usize| travel_time[a * nloc + b];
        let requests = build_requests(&commuters, tt, &params)?;
        let inst = Instance {
            name,
            metric,
            speed_mps,
            locations,
            workplace,
            depot,
            commuters,
            params,
            nloc,
            travel_time,
            travel_dist,
            explicit_matrices,
            requests,
            node_loc,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_file(&self) -> InstanceFile {
        let unflat = |m: &[i64]| -> Vec<Vec<i64>> { m.chunks(self.nloc).map(|r| r.to_vec()).collect() };
        InstanceFile {
            name: self.name.clone(),
            metric: self.metric,
            speed_mps: self.speed_mps,
            locations: self.locations.clone(),
            workplace: self.workplace,
            depot: self.depot,
            commuters: self
                .commuters
                .iter()
                .map(|c| CommuterSpec {
                    home: c.home,
                    desired_arrival: c.inbound.desired_arrival.unwrap_or_default(),
                    desired_departure: c.outbound.desired_departure.unwrap_or_default(),
                })
                .collect(),
            params: self.params,
            travel_time: self.explicit_matrices.then(|| unflat(&self.travel_time)),
            travel_dist: self.explicit_matrices.then(|| unflat(&self.travel_dist)),
        }
    }

    /// Same commuters and geometry with different service parameters.
    pub fn with_params(&self, params: Params) -> Result<Instance, ModelError> {
        Instance::assemble(
            self.name.clone(),
            self.metric,
            self.speed_mps,
            self.locations.clone(),
            self.workplace,
            self.depot,
            self.commuters.clone(),
            params,
            self.nloc,
            self.travel_time.clone(),
            self.travel_dist.clone(),
            self.explicit_matrices,
        )
    }

    /// Same instance served from another depot location.
    pub fn with_depot(&self, depot: usize) -> Result<Instance, ModelError> {
        if depot >= self.nloc {
            return Err(ModelError::Invalid(format!("unknown depot location {depot}")));
        }
        let mut inst = self.clone();
        inst.depot = depot;
        inst.node_loc[0] = depot;
        let last = inst.node_loc.len() - 1;
        inst.node_loc[last] = depot;
        Ok(inst)
    }

    /// Sub-instance restricted to the given 1-based commuter ids.
    pub fn subset(&self, ids: &[usize], depot: usize) -> Result<Instance, ModelError> {
        let commuters: Vec<Commuter> = ids
            .iter()
            .enumerate()
            .map(|(k, &id)| Commuter { id: k + 1, ..self.commuters[id - 1].clone() })
            .collect();
        Instance::assemble(
            format!("{}[{}]", self.name, ids.len()),
            self.metric,
            self.speed_mps,
            self.locations.clone(),
            self.workplace,
            depot,
            commuters,
            self.params,
            self.nloc,
            self.travel_time.clone(),
            self.travel_dist.clone(),
            self.explicit_matrices,
        )
    }

    fn validate(&self) -> Result<(), ModelError> {
        let l = self.nloc;
        for a in 0..l {
            if self.travel_time[a * l + a] != 0 || self.travel_dist[a * l + a] != 0 {
                return Err(ModelError::Invalid(format!("non-zero diagonal at location {a}")));
            }
            for b in 0..l {
                if self.travel_time[a * l + b] < 0 || self.travel_dist[a * l + b] < 0 {
                    return Err(ModelError::Invalid(format!("negative travel value {a}->{b}")));
                }
            }
        }
        if let Some((a, b, c)) = triangle_violation(&self.travel_time, l) {
            return Err(ModelError::Invalid(format!("travel times violate the triangle inequality on {a},{b},{c}")));
        }
        if let Some((a, b, c)) = triangle_violation(&self.travel_dist, l) {
            return Err(ModelError::Invalid(format!("distances violate the triangle inequality on {a},{b},{c}")));
        }
        let n = self.n();
        for c in &self.commuters {
            if self.travel_time[c.home * l + self.workplace] <= 0 || self.travel_time[self.workplace * l + c.home] <= 0 {
                return Err(ModelError::Invalid(format!("commuter {} lives at zero travel time from work", c.id)));
            }
            let i = c.id;
            // The inbound trip must be complete before the outbound one can start.
            if self.requests[2 * n + i].earliest < self.requests[n + i].latest {
                return Err(ModelError::Invalid(format!(
                    "commuter {i}: outbound pickup window opens before the inbound arrival deadline"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.commuters.len()
    }
    pub fn nodes(&self) -> Nodes {
        Nodes::new(self.n())
    }
    pub fn capacity(&self) -> usize {
        self.params.capacity
    }
    pub fn num_locations(&self) -> usize {
        self.nloc
    }
    pub fn loc(&self, node: usize) -> usize {
        self.node_loc[node]
    }
    pub fn requests(&self) -> &[Request] {
        &self.requests
    }
    pub fn request(&self, node: usize) -> &Request {
        &self.requests[node]
    }
    pub fn a(&self, node: usize) -> Time {
        self.requests[node].earliest
    }
    pub fn b(&self, node: usize) -> Time {
        self.requests[node].latest
    }
    pub fn s(&self, node: usize) -> Time {
        self.requests[node].service
    }
    /// Ride limit of the rider picked up at `pickup`.
    pub fn ride_limit(&self, pickup: usize) -> Time {
        self.requests[pickup].ride_limit.expect("ride limit requested for a non-pickup node")
    }
    /// Travel time between nodes.
    pub fn tau(&self, u: usize, v: usize) -> Time {
        self.travel_time[self.node_loc[u] * self.nloc + self.node_loc[v]]
    }
    /// Distance between nodes in meters.
    pub fn sigma(&self, u: usize, v: usize) -> i64 {
        self.travel_dist[self.node_loc[u] * self.nloc + self.node_loc[v]]
    }
    pub fn loc_time(&self, a: usize, b: usize) -> Time {
        self.travel_time[a * self.nloc + b]
    }
    pub fn loc_dist(&self, a: usize, b: usize) -> i64 {
        self.travel_dist[a * self.nloc + b]
    }
}

fn flatten(m: &[Vec<i64>], nloc: usize, what: &str) -> Result<Vec<i64>, ModelError> {
    if m.len() != nloc || m.iter().any(|r| r.len() != nloc) {
        return Err(ModelError::Invalid(format!("{what} must be a {nloc}x{nloc} matrix")));
    }
    Ok(m.iter().flatten().copied().collect())
}

/// First triple `(a, b, c)` with `m[a][c] > m[a][b] + m[b][c]`, if any.
pub fn triangle_violation(m: &[i64], l: usize) -> Option<(usize, usize, usize)> {
    for a in 0..l {
        for b in 0..l {
            let ab = m[a * l + b];
            for c in 0..l {
                if m[a * l + c] > ab + m[b * l + c] {
                    return Some((a, b, c));
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn commuter(at: Time, dt: Time) -> Commuter {
        Commuter {
            id: 1,
            home: 1,
            inbound: Trip { origin: 1, destination: 0, desired_departure: None, desired_arrival: Some(at) },
            outbound: Trip { origin: 0, destination: 1, desired_departure: Some(dt), desired_arrival: None },
        }
    }

    #[test]
    fn inbound_windows_from_desired_arrival() {
        let p = Params { capacity: 4, delta: 600, detour_ratio: 0.5, service: 0 };
        let r = build_requests(&[commuter(8 * 3600 + 600, 17 * 3600)], |_, _| 600, &p).unwrap();
        assert_eq!(r[2].latest, 8 * 3600 + 1200);
        assert_eq!(r[1].ride_limit, Some(900));
        assert_eq!((r[1].earliest, r[1].latest), (7 * 3600 + 2700, 8 * 3600 + 300));
        assert_eq!((r[3].earliest, r[3].latest), (17 * 3600 - 600, 17 * 3600 + 600));
        assert_eq!(r[4].latest, 17 * 3600 + 600 + 900);
    }

    #[test]
    fn zero_slack_collapses_pickup_window() {
        let p = Params { capacity: 4, delta: 0, detour_ratio: 0.0, service: 0 };
        let r = build_requests(&[commuter(30000, 60000)], |_, _| 600, &p).unwrap();
        assert_eq!(r[1].earliest, r[1].latest);
        assert_eq!(r[1].latest, r[2].latest - 600);
    }

    #[test]
    fn negative_earliest_is_clamped() {
        let p = Params { capacity: 4, delta: 600, detour_ratio: 0.5, service: 0 };
        let r = build_requests(&[commuter(1000, 60000)], |_, _| 600, &p).unwrap();
        assert_eq!(r[1].earliest, 0);
    }

    #[test]
    fn midnight_crossing_is_rejected() {
        let p = Params { capacity: 4, delta: 600, detour_ratio: 0.5, service: 0 };
        assert!(build_requests(&[commuter(30000, 86_000)], |_, _| 600, &p).is_err());
    }

    #[test]
    fn partner_and_chain() {
        assert_eq!(node_partner(3, 2), Ok(5));
        assert_eq!(node_partner(3, 4), Err(ModelError::NotPickup(4)));
        assert_eq!(node_partner(10, 22), Ok(32));
        assert_eq!(node_partner(10, 12), Err(ModelError::NotPickup(12)));
        assert!(node_partner(3, 0).is_err());
        assert_eq!(precedence_chain(2, 1), Ok([1, 3, 5, 7]));
        assert_eq!(precedence_chain(2, 2), Ok([2, 4, 6, 8]));
        assert_eq!(precedence_chain(100, 7), Ok([7, 107, 207, 307]));
        assert!(precedence_chain(2, 3).is_err());
    }

    #[test]
    fn node_kinds_partition_indices() {
        let nodes = Nodes::new(3);
        let kinds: Vec<_> = (0..nodes.count()).map(|i| nodes.kind(i)).collect();
        assert_eq!(kinds[0], NodeKind::Source);
        assert_eq!(kinds[13], NodeKind::Sink);
        assert_eq!(kinds[3], NodeKind::Pickup(Direction::Inbound));
        assert_eq!(kinds[4], NodeKind::Dropoff(Direction::Inbound));
        assert_eq!(kinds[7], NodeKind::Pickup(Direction::Outbound));
        assert_eq!(kinds[12], NodeKind::Dropoff(Direction::Outbound));
        assert_eq!(nodes.pickups().collect::<Vec<_>>(), vec![1, 2, 3, 7, 8, 9]);
        assert_eq!(nodes.commuter(9), 3);
    }
}
