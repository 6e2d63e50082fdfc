//! Solution plans shared by both procedures, their validation and the
//! per-iteration trace records.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytics::PlanMetrics;
use crate::feasibility::{feasible_sequence, FeasibilityError, MiniRoute};
use crate::model::{Instance, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Procedure {
    Ctspav,
    Darp,
}

impl FromStr for Procedure {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ctspav" => Ok(Procedure::Ctspav),
            "darp" => Ok(Procedure::Darp),
            _ => Err(format!("unknown procedure `{s}` (expected ctspav or darp)")),
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Procedure::Ctspav => "ctspav",
            Procedure::Darp => "darp",
        })
    }
}

/// Lexicographic minimises vehicles first and distance second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "lex")]
    Lexicographic,
    #[serde(rename = "dist")]
    Distance,
}

impl FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lex" | "lexicographic" => Ok(Objective::Lexicographic),
            "dist" | "distance" => Ok(Objective::Distance),
            _ => Err(format!("unknown objective `{s}` (expected lex or dist)")),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Lexicographic => "lex",
            Objective::Distance => "dist",
        })
    }
}

/// Wall-clock budget split between column generation and the final MIP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub total_s: f64,
    pub colgen_share: f64,
}

impl Budget {
    pub fn new(total_s: f64, colgen_share: f64) -> Self {
        Budget { total_s, colgen_share: colgen_share.clamp(0.0, 1.0) }
    }
    pub fn colgen_s(&self) -> f64 {
        self.total_s * self.colgen_share
    }
}

/// One column-generation iteration, written as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub procedure: Procedure,
    pub phase: String,
    pub iteration: usize,
    pub z_rmp: f64,
    pub z_lb: Option<f64>,
    pub min_reduced_cost: Option<f64>,
    pub columns_added: usize,
    pub columns_total: usize,
    pub wall_s: f64,
}

/// A depot-to-depot route with its earliest schedule. `segments` splits the
/// stops wherever the vehicle becomes empty; for CTSPAV these are exactly
/// the mini routes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRoute {
    pub nodes: Vec<usize>,
    pub segments: Vec<Vec<usize>>,
    pub times: Vec<Time>,
    pub depot_departure: Time,
    pub depot_return: Time,
    pub distance: i64,
}

impl PlanRoute {
    pub fn from_nodes(inst: &Instance, nodes: Vec<usize>) -> Result<PlanRoute, FeasibilityError> {
        let s = feasible_sequence(inst, &nodes)?;
        Ok(PlanRoute {
            segments: split_when_empty(inst, &nodes),
            distance: crate::feasibility::sequence_distance(inst, &nodes),
            times: s.stops.times,
            depot_departure: s.depot_departure,
            depot_return: s.depot_return,
            nodes,
        })
    }
}

pub fn split_when_empty(inst: &Instance, nodes: &[usize]) -> Vec<Vec<usize>> {
    let nd = inst.nodes();
    let mut out = Vec::new();
    let mut cur = Vec::new();
    let mut load = 0i64;
    for &v in nodes {
        cur.push(v);
        load += if nd.is_pickup(v) { 1 } else { -1 };
        if load == 0 {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// Vehicles above the proven vehicle lower bound.
    pub absolute_vc: Option<i64>,
    /// `(z_mip - bound) / z_mip`.
    pub optimality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvePlan {
    pub instance: String,
    pub n: usize,
    pub procedure: Procedure,
    pub objective: Objective,
    pub backend: String,
    pub vehicle_count: usize,
    pub total_distance: i64,
    pub objective_value: f64,
    pub lp_value: Option<f64>,
    pub lower_bound: Option<f64>,
    pub vc_lower_bound: Option<usize>,
    pub gap: Gap,
    pub converged: bool,
    pub proven_optimal: bool,
    pub iterations: usize,
    pub columns: usize,
    pub routes: Vec<PlanRoute>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<PlanMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

impl SolvePlan {
    /// Routes sorted by depot departure, then by node sequence.
    pub fn canonicalize(&mut self) {
        self.routes.sort_by(|a, b| (a.depot_departure, &a.nodes).cmp(&(b.depot_departure, &b.nodes)));
        self.vehicle_count = self.routes.len();
        self.total_distance = self.routes.iter().map(|r| r.distance).sum();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes") + "\n"
    }
}

/// Re-checks a plan against an instance. Returns every problem found.
pub fn validate_plan(inst: &Instance, plan: &SolvePlan) -> Vec<String> {
    let nd = inst.nodes();
    let mut problems = Vec::new();
    if plan.n != inst.n() {
        problems.push(format!("plan is for n={} but the instance has n={}", plan.n, inst.n()));
        return problems;
    }
    let mut count = vec![0usize; nd.count()];
    for (k, r) in plan.routes.iter().enumerate() {
        for &v in &r.nodes {
            if v < count.len() {
                count[v] += 1;
            }
        }
        match PlanRoute::from_nodes(inst, r.nodes.clone()) {
            Ok(fresh) => {
                if fresh.distance != r.distance {
                    problems.push(format!("route {k}: distance {} recorded, {} recomputed", r.distance, fresh.distance));
                }
                if fresh.segments != r.segments {
                    problems.push(format!("route {k}: segments do not match the node sequence"));
                }
            }
            Err(e) => problems.push(format!("route {k}: {e}")),
        }
        if plan.procedure == Procedure::Ctspav {
            for (j, seg) in r.segments.iter().enumerate() {
                if let Err(e) = MiniRoute::new(inst, seg.clone()) {
                    problems.push(format!("route {k} segment {j}: {e}"));
                }
            }
        }
    }
    for v in nd.trip_nodes() {
        if count[v] != 1 {
            problems.push(format!("node {v} visited {} times", count[v]));
        }
    }
    if plan.vehicle_count != plan.routes.len() {
        problems.push(format!("vehicle count {} but {} routes", plan.vehicle_count, plan.routes.len()));
    }
    let dist: i64 = plan.routes.iter().map(|r| r.distance).sum();
    if dist != plan.total_distance {
        problems.push(format!("total distance {} but routes sum to {dist}", plan.total_distance));
    }
    problems
}

#[derive(Debug, thiserror::Error)]
pub enum SolveError {
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Backend(#[from] ctspav_lp::LpError),
    #[error("lp-infeasible: the restricted master LP has no solution")]
    LpInfeasible,
    #[error("no-integer-solution-in-budget (best bound {best_bound:?})")]
    NoIntegerSolution { best_bound: Option<f64> },
    #[error("repair-infeasible: {0}")]
    RepairInfeasible(String),
}
