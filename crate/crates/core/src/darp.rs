//! Column generation over whole depot-to-depot routes: a set-covering
//! master, pricing over the master graph with relaxed elementarity, the
//! two-phase lexicographic solve and repair of the integer solution.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use ctspav_lp::{BackendKind, LinearModel, LpSolver, MipOptions, RmpSolution, RowId, Sense, Status, VarId, VarKind};

use crate::ctspav::{lasdon_bound, lasdon_converged, vehicle_penalty};
use crate::feasibility::{feasible_sequence, sequence_distance};
use crate::model::Instance;
use crate::network::{build_master_graph, MasterGraph};
use crate::plan::{Budget, Gap, Objective, PlanRoute, Procedure, SolveError, SolvePlan, TraceRecord};
use crate::pricing::{from_fixed, label_search, to_fixed, Cost, CostedGraph, SearchOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DarpPhase {
    VehicleCount,
    /// Distance, with the vehicle count pinned when `Some`.
    Distance(Option<usize>),
}

/// Route column; the node sequence excludes the depots and may repeat
/// nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DarpColumn {
    pub nodes: Vec<usize>,
    pub distance: i64,
}

impl DarpColumn {
    pub fn new(inst: &Instance, nodes: Vec<usize>) -> Self {
        DarpColumn { distance: sequence_distance(inst, &nodes), nodes }
    }
    /// Number of visits to each pickup.
    pub fn visits(&self, inst: &Instance) -> HashMap<usize, usize> {
        let nd = inst.nodes();
        let mut m = HashMap::new();
        for &v in &self.nodes {
            if nd.is_pickup(v) {
                *m.entry(v).or_insert(0) += 1;
            }
        }
        m
    }
    pub fn cost(&self, phase: DarpPhase) -> f64 {
        match phase {
            DarpPhase::VehicleCount => 1.0,
            DarpPhase::Distance(_) => self.distance as f64,
        }
    }
}

/// Duals of the covering rows (by pickup node) and of the vehicle-count
/// row.
#[derive(Debug, Clone, Default)]
pub struct DarpDuals {
    pub alpha: Vec<f64>,
    pub beta: f64,
}

impl DarpDuals {
    /// Dual objective: every pickup covered once, `count` vehicles.
    pub fn value(&self, count: Option<usize>) -> f64 {
        self.alpha.iter().sum::<f64>() + count.map_or(0.0, |c| self.beta * c as f64)
    }

    pub fn blend(&self, other: &DarpDuals, weight: f64) -> DarpDuals {
        DarpDuals {
            alpha: self.alpha.iter().zip(&other.alpha).map(|(a, b)| (1.0 - weight) * a + weight * b).collect(),
            beta: (1.0 - weight) * self.beta + weight * other.beta,
        }
    }
}

/// Edge reduced costs over the master graph. The count dual is charged on
/// the edges into the sink so that it is paid once per route.
pub fn darp_edge_costs(inst: &Instance, graph: &MasterGraph, duals: &DarpDuals, phase: DarpPhase) -> CostedGraph {
    let nd = inst.nodes();
    let alpha: Vec<Cost> = duals.alpha.iter().map(|&a| to_fixed(a)).collect();
    let beta = to_fixed(duals.beta);
    let succ = (0..nd.count())
        .map(|u| {
            graph
                .out(u)
                .iter()
                .map(|&v| {
                    let base: Cost = match phase {
                        DarpPhase::VehicleCount => Cost::from(u == nd.source()),
                        DarpPhase::Distance(_) => to_fixed(inst.sigma(u, v) as f64),
                    };
                    let dual = if nd.is_pickup(u) { alpha[u] } else { 0 };
                    let count = if v == nd.sink() && matches!(phase, DarpPhase::Distance(Some(_))) { beta } else { 0 };
                    (v, base - dual - count)
                })
                .collect()
        })
        .collect();
    CostedGraph { succ, earliest: (0..nd.count()).map(|v| inst.a(v)).collect(), sink: nd.sink() }
}

pub struct DarpBatch {
    pub columns: Vec<(DarpColumn, Cost)>,
    pub min_cost: Option<Cost>,
    pub truncated: bool,
}

/// Negative routes from the source, non-dominated, cheapest first.
pub fn darp_price(inst: &Instance, costed: &CostedGraph, opts: &SearchOptions) -> DarpBatch {
    let nd = inst.nodes();
    let opts = SearchOptions { allow_revisits: true, ..opts.clone() };
    let r = label_search(inst, costed, nd.source(), &opts);
    DarpBatch {
        columns: r.paths.into_iter().map(|(p, c)| (DarpColumn::new(inst, p[1..].to_vec()), c)).collect(),
        min_cost: r.min_cost,
        truncated: r.truncated,
    }
}

/// Lower bound on the vehicle-count LP from any non-negative duals.
pub fn farley_bound(dual_value: f64, min_reduced_cost: f64) -> f64 {
    dual_value / (1.0 - min_reduced_cost.min(0.0))
}

/// Keeps the first visit of every node.
pub fn elementarize(nodes: &[usize]) -> Vec<usize> {
    let mut seen = HashSet::new();
    nodes.iter().copied().filter(|v| seen.insert(*v)).collect()
}

/// Makes every selected route elementary and every trip covered once: a
/// trip served by several routes stays in the route that leaves the depot
/// first (ties by index) and is removed from the others. Emptied routes
/// are dropped.
pub fn repair_integer_solution(inst: &Instance, routes: &[Vec<usize>]) -> Result<Vec<Vec<usize>>, SolveError> {
    let nd = inst.nodes();
    let mut routes: Vec<Vec<usize>> = routes.iter().map(|r| elementarize(r)).collect();
    let departure = |r: &Vec<usize>| feasible_sequence(inst, r).map(|s| s.depot_departure).unwrap_or(i64::MAX);
    let mut order: Vec<(i64, usize)> = routes.iter().enumerate().map(|(k, r)| (departure(r), k)).collect();
    order.sort();
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for &(_, k) in &order {
        for &v in &routes[k] {
            if nd.is_pickup(v) {
                owner.entry(v).or_insert(k);
            }
        }
    }
    for (k, r) in routes.iter_mut().enumerate() {
        r.retain(|&v| {
            let p = if nd.is_pickup(v) { v } else { nd.pickup_of(v) };
            owner.get(&p) == Some(&k)
        });
    }
    routes.retain(|r| !r.is_empty());
    for r in &routes {
        feasible_sequence(inst, r).map_err(|e| SolveError::RepairInfeasible(format!("{r:?}: {e}")))?;
    }
    Ok(routes)
}

#[derive(Debug, Clone)]
pub struct DarpOptions {
    pub objective: Objective,
    pub budget: Budget,
    pub backend: BackendKind,
    pub search: SearchOptions,
    /// Weight of the interior dual point; 0 disables stabilization.
    pub stabilization: f64,
    pub max_iterations: usize,
}

impl Default for DarpOptions {
    fn default() -> Self {
        DarpOptions {
            objective: Objective::Lexicographic,
            budget: Budget::new(600.0, 0.75),
            backend: BackendKind::Highs,
            search: SearchOptions { label_cap: Some(2_000_000), max_paths: Some(200), ..SearchOptions::default() },
            stabilization: 0.5,
            max_iterations: usize::MAX,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DarpOutcome {
    pub plan: SolvePlan,
    pub trace: Vec<TraceRecord>,
    /// Best Farley bound of the vehicle-count phase.
    pub farley: Option<f64>,
    /// Vehicle-count LP value at the end of phase one.
    pub count_lp: Option<f64>,
    /// Every Farley bound computed, for validity checks.
    pub farley_history: Vec<f64>,
    pub pinned_count: Option<usize>,
    pub z_rmp: f64,
    pub z_lb: Option<f64>,
    /// Distance of the selected columns before repair.
    pub unrepaired_distance: Option<i64>,
}

struct Master {
    model: LinearModel,
    cover: HashMap<usize, RowId>,
    count_row: Option<RowId>,
    columns: Vec<DarpColumn>,
    vars: Vec<VarId>,
    known: HashSet<Vec<usize>>,
}

impl Master {
    fn new(inst: &Instance, phase: DarpPhase) -> Master {
        let mut model = LinearModel::new(Sense::Minimize);
        let cover = inst
            .nodes()
            .pickups()
            .map(|p| (p, model.add_row(format!("cover_{p}"), 1.0, f64::INFINITY, &[]).expect("fresh row")))
            .collect();
        let mut m = Master { model, cover, count_row: None, columns: Vec::new(), vars: Vec::new(), known: HashSet::new() };
        for p in inst.nodes().pickups() {
            m.add(inst, DarpColumn::new(inst, vec![p, inst.nodes().partner(p).unwrap()]), phase);
        }
        m
    }

    fn add(&mut self, inst: &Instance, col: DarpColumn, phase: DarpPhase) -> bool {
        if !self.known.insert(col.nodes.clone()) {
            return false;
        }
        let mut entries: Vec<(RowId, f64)> =
            col.visits(inst).into_iter().map(|(p, k)| (self.cover[&p], k as f64)).collect();
        entries.sort_by_key(|e| e.0);
        if let Some(r) = self.count_row {
            entries.push((r, 1.0));
        }
        let name = format!("r{}", self.columns.len());
        let id = self.model.add_column(&name, 0.0, f64::INFINITY, col.cost(phase), VarKind::Continuous, &entries).expect("fresh column");
        self.columns.push(col);
        self.vars.push(id);
        true
    }

    fn set_phase(&mut self, phase: DarpPhase) {
        for (c, &v) in self.columns.iter().zip(&self.vars) {
            self.model.set_cost(v, c.cost(phase));
        }
        if let DarpPhase::Distance(Some(count)) = phase {
            let entries: Vec<(VarId, f64)> = self.vars.iter().map(|&v| (v, 1.0)).collect();
            let k = count as f64;
            self.count_row = Some(self.model.add_row("count", k, k, &entries).expect("fresh row"));
        }
    }

    fn duals(&self, inst: &Instance, sol: &RmpSolution) -> DarpDuals {
        let mut alpha = vec![0.0; inst.nodes().count()];
        for (&p, &r) in &self.cover {
            alpha[p] = sol.dual(r).max(0.0);
        }
        DarpDuals { alpha, beta: self.count_row.map_or(0.0, |r| sol.dual(r)) }
    }
}

struct PhaseResult {
    converged: bool,
    z_rmp: f64,
    best_lb: Option<f64>,
    bounds: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn column_generation(
    inst: &Instance,
    graph: &MasterGraph,
    master: &mut Master,
    solver: &mut dyn LpSolver,
    phase: DarpPhase,
    opts: &DarpOptions,
    deadline: f64,
    start: Instant,
    trace: &mut Vec<TraceRecord>,
) -> Result<PhaseResult, SolveError> {
    let n = inst.n();
    let mut best_lb: Option<f64> = None;
    let mut bounds = Vec::new();
    let label = match phase {
        DarpPhase::VehicleCount => "count",
        DarpPhase::Distance(_) => "distance",
    };
    let mut iteration = 0;
    loop {
        iteration += 1;
        let lp = solver.solve_lp(&master.model)?;
        match lp.status {
            Status::Optimal => {}
            Status::Infeasible => return Err(SolveError::LpInfeasible),
            s => return Err(SolveError::Backend(ctspav_lp::LpError::Backend(format!("LP status {s:?}")))),
        }
        let z_rmp = lp.objective;
        let raw = master.duals(inst, &lp);
        let mut candidates = vec![raw.clone()];
        if opts.stabilization > 0.0 {
            if let Some(int) = solver.solve_lp_interior(&master.model)? {
                let interior = master.duals(inst, &int);
                candidates.insert(0, raw.blend(&interior, opts.stabilization));
            }
        }
        let mut outcome = None;
        for duals in &candidates {
            let costed = darp_edge_costs(inst, graph, duals, phase);
            let mut batch = darp_price(inst, &costed, &opts.search);
            batch.columns.retain(|(c, _)| !master.known.contains(&c.nodes));
            let lb = (!batch.truncated).then(|| {
                let c = batch.min_cost.map_or(0.0, from_fixed);
                match phase {
                    DarpPhase::VehicleCount => farley_bound(duals.value(None), c),
                    DarpPhase::Distance(Some(k)) => lasdon_bound(duals.value(Some(k)), c, k),
                    DarpPhase::Distance(None) => lasdon_bound(duals.value(None), c, 2 * n),
                }
            });
            let empty = batch.columns.is_empty();
            outcome = Some((batch, lb));
            if !empty {
                break;
            }
        }
        let (batch, lb) = outcome.expect("at least the raw duals are priced");
        if let Some(b) = lb {
            bounds.push(b);
            best_lb = Some(best_lb.map_or(b, |x: f64| x.max(b)));
        }
        let done = best_lb.is_some_and(|b| lasdon_converged(z_rmp, b)) || (batch.columns.is_empty() && !batch.truncated);
        let mut added = 0;
        if !done {
            for (col, _) in batch.columns {
                if master.add(inst, col, phase) {
                    added += 1;
                }
            }
        }
        trace.push(TraceRecord {
            procedure: Procedure::Darp,
            phase: label.into(),
            iteration,
            z_rmp,
            z_lb: lb,
            min_reduced_cost: batch.min_cost.map(from_fixed),
            columns_added: added,
            columns_total: master.columns.len(),
            wall_s: start.elapsed().as_secs_f64(),
        });
        log::debug!("darp {label} {iteration}: z_rmp {z_rmp:.3} lb {lb:?} added {added}");
        if done || added == 0 || iteration >= opts.max_iterations || start.elapsed().as_secs_f64() >= deadline {
            return Ok(PhaseResult { converged: done, z_rmp, best_lb, bounds });
        }
    }
}

fn plan_objective(inst: &Instance, routes: &[PlanRoute], objective: Objective) -> i64 {
    let dist: i64 = routes.iter().map(|r| r.distance).sum();
    match objective {
        Objective::Lexicographic => dist + vehicle_penalty(inst) * routes.len() as i64,
        Objective::Distance => dist,
    }
}

/// Set-covering MIP over the elementary versions of the columns.
fn solve_cover_mip(
    inst: &Instance,
    solver: &mut dyn LpSolver,
    columns: &[DarpColumn],
    count: Option<usize>,
    lexicographic_costs: bool,
    time_limit: f64,
) -> Result<(RmpSolution, Vec<Vec<usize>>), SolveError> {
    let mut seqs: Vec<Vec<usize>> = Vec::new();
    let mut seen = HashSet::new();
    for c in columns {
        let e = elementarize(&c.nodes);
        if feasible_sequence(inst, &e).is_ok() && seen.insert(e.clone()) {
            seqs.push(e);
        }
    }
    let nd = inst.nodes();
    let penalty = vehicle_penalty(inst) as f64;
    let mut model = LinearModel::new(Sense::Minimize);
    let cover: HashMap<usize, RowId> =
        nd.pickups().map(|p| (p, model.add_row(format!("cover_{p}"), 1.0, f64::INFINITY, &[]).expect("fresh row"))).collect();
    let count_row = count.map(|k| model.add_row("count", k as f64, k as f64, &[]).expect("fresh row"));
    let scale = if lexicographic_costs { crate::ctspav::objective_scale(penalty as i64 * 2) } else { 1.0 };
    for (k, s) in seqs.iter().enumerate() {
        let mut entries: Vec<(RowId, f64)> = s.iter().filter(|&&v| nd.is_pickup(v)).map(|p| (cover[p], 1.0)).collect();
        entries.sort_by_key(|e| e.0);
        if let Some(r) = count_row {
            entries.push((r, 1.0));
        }
        let mut cost = sequence_distance(inst, s) as f64;
        if lexicographic_costs {
            cost += penalty;
        }
        model.add_column(format!("r{k}"), 0.0, 1.0, cost * scale, VarKind::Integer, &entries).expect("fresh column");
    }
    let opts = MipOptions { time_limit: time_limit.max(1.0), warm_start: None, abs_gap: 0.5 * scale, integral_objective: scale == 1.0 };
    let sol = solver.solve_mip(&model, &opts)?;
    let chosen = if sol.has_solution() {
        seqs.iter().enumerate().filter(|(k, _)| sol.primal[*k] > 0.5).map(|(_, s)| s.clone()).collect()
    } else {
        Vec::new()
    };
    Ok((sol, chosen))
}

pub fn run_darp(inst: &Instance, opts: &DarpOptions) -> Result<DarpOutcome, SolveError> {
    let start = Instant::now();
    let graph = build_master_graph(inst)?;
    let mut solver: Box<dyn LpSolver> = opts.backend.create();
    let mut trace = Vec::new();
    let colgen_deadline = opts.budget.colgen_s();
    let first = match opts.objective {
        Objective::Lexicographic => DarpPhase::VehicleCount,
        Objective::Distance => DarpPhase::Distance(None),
    };
    let mut master = Master::new(inst, first);
    let mut res = column_generation(inst, &graph, &mut master, solver.as_mut(), first, opts, colgen_deadline, start, &mut trace)?;
    let mut farley = None;
    let mut farley_history = Vec::new();
    let mut count_lp = None;
    let mut pinned = None;
    let mut converged = res.converged;
    if opts.objective == Objective::Lexicographic {
        farley = res.best_lb;
        farley_history = res.bounds.clone();
        count_lp = Some(res.z_rmp);
        if res.converged {
            let k = (res.z_rmp - 1e-6).ceil().max(1.0) as usize;
            pinned = Some(k);
            let phase = DarpPhase::Distance(Some(k));
            master.set_phase(phase);
            res = column_generation(inst, &graph, &mut master, solver.as_mut(), phase, opts, colgen_deadline, start, &mut trace)?;
            converged = res.converged;
        }
    }

    let remaining = |start: &Instant| opts.budget.total_s - start.elapsed().as_secs_f64();
    let fallback_lex = opts.objective == Objective::Lexicographic;
    let (mut sol, mut chosen) = solve_cover_mip(inst, solver.as_mut(), &master.columns, pinned, pinned.is_none() && fallback_lex, remaining(&start))?;
    if let (false, Some(k)) = (sol.has_solution(), pinned) {
        log::warn!("no integer solution with {k} vehicles; solving without the count row");
        (sol, chosen) = solve_cover_mip(inst, solver.as_mut(), &master.columns, None, fallback_lex, remaining(&start))?;
    }
    if !sol.has_solution() {
        return Err(SolveError::NoIntegerSolution { best_bound: sol.best_bound });
    }
    let unrepaired: i64 = chosen.iter().map(|s| sequence_distance(inst, s)).sum();
    let repaired = repair_integer_solution(inst, &chosen)?;
    let routes: Vec<PlanRoute> = repaired
        .into_iter()
        .map(|s| PlanRoute::from_nodes(inst, s).map_err(|e| SolveError::RepairInfeasible(e.to_string())))
        .collect::<Result<_, _>>()?;
    let objective_value = plan_objective(inst, &routes, opts.objective) as f64;
    let vc_lb = farley.map(|f| (f - 1e-6).ceil().max(0.0) as usize);
    let distance: i64 = routes.iter().map(|r| r.distance).sum();
    let phase_bound = if converged { Some(res.z_rmp) } else { res.best_lb };
    // Count-phase bounds are in vehicles, distance-phase bounds in meters.
    let (compare, bound) = match (opts.objective, pinned) {
        (Objective::Lexicographic, None) => (routes.len() as f64, farley),
        _ => (distance as f64, phase_bound),
    };
    let mut plan = SolvePlan {
        instance: inst.name.clone(),
        n: inst.n(),
        procedure: Procedure::Darp,
        objective: opts.objective,
        backend: solver.name().to_string(),
        vehicle_count: routes.len(),
        total_distance: distance,
        objective_value,
        lp_value: Some(res.z_rmp),
        lower_bound: res.best_lb,
        vc_lower_bound: vc_lb,
        gap: Gap {
            absolute_vc: vc_lb.map(|b| routes.len() as i64 - b as i64),
            optimality: bound.map_or(1.0, |b| if compare > 0.0 { ((compare - b) / compare).max(0.0) } else { 0.0 }),
        },
        converged,
        proven_optimal: false,
        iterations: trace.len(),
        columns: master.columns.len(),
        routes,
        metrics: None,
        trace: None,
    };
    plan.canonicalize();
    Ok(DarpOutcome {
        plan,
        trace,
        farley,
        count_lp,
        farley_history,
        pinned_count: pinned,
        z_rmp: res.z_rmp,
        z_lb: res.best_lb,
        unrepaired_distance: Some(unrepaired),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn farley_examples() {
        assert_eq!(farley_bound(4.0, -1.0), 2.0);
        assert_eq!(farley_bound(4.0, 0.0), 4.0);
    }

    #[test]
    fn elementarize_keeps_first_visits() {
        assert_eq!(elementarize(&[1, 3, 2, 1, 4, 3]), vec![1, 3, 2, 4]);
    }

    #[test]
    fn blend_weights() {
        let a = DarpDuals { alpha: vec![0.0, 2.0], beta: 1.0 };
        let b = DarpDuals { alpha: vec![0.0, 4.0], beta: 3.0 };
        assert_eq!(a.blend(&b, 0.0).alpha, a.alpha);
        assert_eq!(a.blend(&b, 1.0).alpha, b.alpha);
        assert_eq!(a.blend(&b, 0.5).beta, 2.0);
    }
}
