//! Column generation over mini routes: the restricted master LP with edge
//! and time variables, per-root pricing, the Lasdon termination test and
//! the final restricted MIP.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use ctspav_lp::{BackendKind, LinearModel, LpSolver, MipOptions, RmpSolution, RowId, Sense, Status, VarId, VarKind};

use crate::feasibility::{earliest_schedule, feasible_av_route, AvRoute, MiniRoute};
use crate::model::{Instance, Time};
use crate::network::{build_master_graph, build_pricing_graphs, MasterGraph, PricingGraph};
use crate::plan::{Budget, Gap, Objective, PlanRoute, Procedure, SolveError, SolvePlan, TraceRecord};
use crate::pricing::{from_fixed, price_all_roots, to_fixed, Duals, PricingOptions, SearchOptions};

/// Big-M constants of the time-linking rows of edge `(i, j)`.
pub fn big_m(inst: &Instance, i: usize, j: usize) -> (Time, Time) {
    let gap = inst.s(i) + inst.tau(i, j);
    let m = (inst.b(i) + gap - inst.a(j)).max(0);
    let m_bar = (inst.b(j) - inst.a(i) - gap).max(0);
    (m, m_bar)
}

/// Overestimate of the longest route distance: every node entered by its
/// longest incoming edge, plus the longest depot legs.
pub fn route_length_bound(inst: &Instance) -> i64 {
    let nd = inst.nodes();
    let (vs, vt) = (nd.source(), nd.sink());
    let mut total = 0;
    for v in nd.trip_nodes() {
        total += (0..nd.count()).filter(|&u| u != v && u != vt).map(|u| inst.sigma(u, v)).max().unwrap_or(0);
    }
    total += nd.pickups().map(|p| inst.sigma(vs, p)).max().unwrap_or(0);
    total += nd.trip_nodes().map(|d| inst.sigma(d, vt)).max().unwrap_or(0);
    total
}

/// Fixed cost carried by every vehicle in lexicographic mode.
pub fn vehicle_penalty(inst: &Instance) -> i64 {
    100 * route_length_bound(inst)
}

pub fn edge_cost(inst: &Instance, u: usize, v: usize, objective: Objective, penalty: i64) -> i64 {
    let sigma = inst.sigma(u, v);
    match objective {
        Objective::Lexicographic if u == inst.nodes().source() => sigma + penalty,
        _ => sigma,
    }
}

/// Power of ten that brings the largest cost to at most 1e4. Simplex codes
/// lose accuracy when a fixed vehicle cost dwarfs the distances.
pub fn objective_scale(max_cost: i64) -> f64 {
    let mut k = 0;
    while max_cost as f64 > 1e4 * 10f64.powi(k) {
        k += 1;
    }
    10f64.powi(-k)
}

pub fn lasdon_bound(z_rmp: f64, min_reduced_cost: f64, kappa: usize) -> f64 {
    z_rmp + kappa as f64 * min_reduced_cost.min(0.0)
}

/// Column generation stops once the integral objective cannot improve on
/// the bound.
pub fn lasdon_converged(z_rmp: f64, z_lb: f64) -> bool {
    (z_rmp - 1e-6 - 1e-11 * z_rmp.abs()).ceil() - z_lb < 1.0
}

#[derive(Debug, Clone)]
pub struct EnrichOptions {
    pub max_n: usize,
    pub label_cap: usize,
    pub max_columns: usize,
}

impl Default for EnrichOptions {
    fn default() -> Self {
        EnrichOptions { max_n: 8, label_cap: 100_000, max_columns: 20_000 }
    }
}

#[derive(Debug, Clone)]
pub struct CtspavOptions {
    pub objective: Objective,
    pub budget: Budget,
    pub backend: BackendKind,
    pub pricing: PricingOptions,
    pub max_iterations: usize,
    pub max_columns_per_iteration: usize,
    /// After the first MIP, add every column that could belong to a better
    /// integer solution and re-solve.
    pub enrich: Option<EnrichOptions>,
}

impl Default for CtspavOptions {
    fn default() -> Self {
        CtspavOptions {
            objective: Objective::Lexicographic,
            budget: Budget::new(600.0, 0.5),
            backend: BackendKind::Highs,
            pricing: PricingOptions::default(),
            max_iterations: usize::MAX,
            max_columns_per_iteration: 3000,
            enrich: Some(EnrichOptions::default()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CtspavOutcome {
    pub plan: SolvePlan,
    pub trace: Vec<TraceRecord>,
    /// Last restricted master LP value.
    pub z_rmp: f64,
    /// Best Lasdon bound over all iterations.
    pub z_lb: Option<f64>,
}

/// The restricted master problem over the current columns.
pub struct Rmp<'a> {
    inst: &'a Instance,
    pub model: LinearModel,
    cover: HashMap<usize, RowId>,
    edge_var: HashMap<(usize, usize), VarId>,
    edge_row: HashMap<(usize, usize), RowId>,
    time_var: HashMap<usize, VarId>,
    pub columns: Vec<MiniRoute>,
    col_var: Vec<VarId>,
    known: HashSet<Vec<usize>>,
    edge_ids: Vec<(usize, usize)>,
    /// Objective coefficients are multiplied by this factor before solving.
    scale: f64,
}

impl<'a> Rmp<'a> {
    pub fn new(inst: &'a Instance, graph: &MasterGraph, objective: Objective) -> Rmp<'a> {
        let nd = inst.nodes();
        let penalty = vehicle_penalty(inst);
        let mut model = LinearModel::new(Sense::Minimize);
        let max_cost = graph.edges().map(|(u, v)| edge_cost(inst, u, v, objective, penalty)).max().unwrap_or(1);
        let scale = objective_scale(max_cost);
        let mut edge_var = HashMap::new();
        let mut edge_ids = Vec::new();
        for (u, v) in graph.edges() {
            let c = edge_cost(inst, u, v, objective, penalty) as f64 * scale;
            let id = model.add_var(format!("y_{u}_{v}"), 0.0, 1.0, c, VarKind::Continuous).expect("fresh name");
            edge_var.insert((u, v), id);
            edge_ids.push((u, v));
        }
        let mut time_var = HashMap::new();
        for v in nd.trip_nodes() {
            let id = model
                .add_var(format!("t_{v}"), inst.a(v) as f64, inst.b(v) as f64, 0.0, VarKind::Continuous)
                .expect("fresh name");
            time_var.insert(v, id);
        }
        let mut cover = HashMap::new();
        for p in nd.pickups() {
            cover.insert(p, model.add_row(format!("cover_{p}"), 1.0, 1.0, &[]).expect("fresh row"));
        }
        for v in nd.trip_nodes() {
            let out: Vec<(VarId, f64)> = graph.out(v).iter().map(|&w| (edge_var[&(v, w)], 1.0)).collect();
            model.add_row(format!("out_{v}"), 1.0, 1.0, &out).expect("fresh row");
            let inn: Vec<(VarId, f64)> = graph.inn(v).iter().map(|&u| (edge_var[&(u, v)], 1.0)).collect();
            model.add_row(format!("in_{v}"), 1.0, 1.0, &inn).expect("fresh row");
        }
        for (u, v) in graph.edges() {
            if !(nd.is_trip(u) && nd.is_trip(v)) {
                continue;
            }
            let (m, m_bar) = big_m(inst, u, v);
            let gap = (inst.s(u) + inst.tau(u, v)) as f64;
            let (tu, tv, y) = (time_var[&u], time_var[&v], edge_var[&(u, v)]);
            if m > 0 {
                let m = m as f64;
                model
                    .add_row(format!("early_{u}_{v}"), gap - m, f64::INFINITY, &[(tv, 1.0), (tu, -1.0), (y, -m)])
                    .expect("fresh row");
            }
            if m_bar > 0 && nd.is_dropoff(v) {
                let mb = m_bar as f64;
                model
                    .add_row(format!("late_{u}_{v}"), f64::NEG_INFINITY, gap + mb, &[(tv, 1.0), (tu, -1.0), (y, mb)])
                    .expect("fresh row");
            }
        }
        for p in nd.pickups() {
            let d = nd.partner(p).expect("pickup");
            let lim = (inst.ride_limit(p) + inst.s(p)) as f64;
            model
                .add_row(format!("ride_{p}"), f64::NEG_INFINITY, lim, &[(time_var[&d], 1.0), (time_var[&p], -1.0)])
                .expect("fresh row");
        }
        let mut rmp = Rmp {
            inst,
            model,
            cover,
            edge_var,
            edge_row: HashMap::new(),
            time_var,
            columns: Vec::new(),
            col_var: Vec::new(),
            known: HashSet::new(),
            edge_ids,
            scale,
        };
        for p in nd.pickups() {
            rmp.add_column(&MiniRoute::direct(inst, p));
        }
        rmp
    }

    pub fn contains(&self, nodes: &[usize]) -> bool {
        self.known.contains(nodes)
    }

    pub fn known(&self) -> &HashSet<Vec<usize>> {
        &self.known
    }

    /// Adds a column; returns false when it is already present or uses an
    /// edge outside the master graph.
    pub fn add_column(&mut self, r: &MiniRoute) -> bool {
        if self.known.contains(&r.nodes) {
            return false;
        }
        if let Some((u, v)) = r.edges().find(|e| !self.edge_var.contains_key(e)) {
            log::warn!("column {:?} uses edge ({u},{v}) outside the master graph", r.nodes);
            return false;
        }
        let nd = self.inst.nodes();
        let mut entries: Vec<(RowId, f64)> = r.pickups().iter().map(|p| (self.cover[p], 1.0)).collect();
        for e in r.edges() {
            let row = match self.edge_row.get(&e) {
                Some(&row) => row,
                None => {
                    let y = self.edge_var[&e];
                    let row = self
                        .model
                        .add_row(format!("sel_{}_{}", e.0, e.1), f64::NEG_INFINITY, 0.0, &[(y, -1.0)])
                        .expect("fresh row");
                    self.edge_row.insert(e, row);
                    row
                }
            };
            entries.push((row, 1.0));
        }
        debug_assert!(r.pickups().iter().all(|&p| nd.is_pickup(p)));
        let name = format!("x_{}", r.nodes.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("_"));
        let id = self.model.add_column(&name, 0.0, 1.0, 0.0, VarKind::Continuous, &entries).expect("fresh column");
        self.columns.push(r.clone());
        self.col_var.push(id);
        self.known.insert(r.nodes.clone());
        true
    }

    /// Objective value in cost units.
    pub fn objective(&self, sol: &RmpSolution) -> f64 {
        sol.objective / self.scale
    }

    pub fn duals(&self, sol: &RmpSolution) -> Duals {
        let nd = self.inst.nodes();
        let mut pi = vec![0.0; nd.count()];
        for (&p, &row) in &self.cover {
            pi[p] = sol.dual(row) / self.scale;
        }
        Duals::from_f64(&pi, self.edge_row.iter().map(|(&e, &row)| (e, sol.dual(row) / self.scale)))
    }

    pub fn column_value(&self, sol: &RmpSolution, k: usize) -> f64 {
        sol.value(self.col_var[k])
    }

    fn mip_model(&self) -> LinearModel {
        let mut m = self.model.clone();
        for &v in self.col_var.iter().chain(self.edge_var.values()) {
            m.set_kind(v, VarKind::Integer);
        }
        m
    }

    /// Primal point of the MIP for a set of vehicles given as mini-route
    /// chains.
    fn point_for(&self, vehicles: &[Vec<MiniRoute>]) -> Option<Vec<f64>> {
        let nd = self.inst.nodes();
        let mut x = vec![0.0; self.model.num_vars()];
        for (v, &id) in &self.time_var {
            x[id.0] = self.inst.a(*v) as f64;
        }
        let col_index: HashMap<&Vec<usize>, usize> =
            self.columns.iter().enumerate().map(|(k, c)| (&c.nodes, k)).collect();
        for chain in vehicles {
            let nodes: Vec<usize> = chain.iter().flat_map(|r| r.nodes.iter().copied()).collect();
            let s = earliest_schedule(self.inst, &nodes).ok()?;
            for (&v, &t) in s.nodes.iter().zip(&s.times) {
                x[self.time_var[&v].0] = t as f64;
            }
            for r in chain {
                x[self.col_var[*col_index.get(&r.nodes)?].0] = 1.0;
            }
            let mut path = vec![nd.source()];
            path.extend(nodes);
            path.push(nd.sink());
            for w in path.windows(2) {
                x[self.edge_var.get(&(w[0], w[1]))?.0] = 1.0;
            }
        }
        let (viol, _) = self.model.check_point(&x, 1e-9);
        (viol <= 1e-6).then_some(x)
    }

    /// Vehicles traced along the selected edges from the source.
    fn extract(&self, x: &[f64]) -> Option<Vec<Vec<usize>>> {
        let nd = self.inst.nodes();
        let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(u, v) in &self.edge_ids {
            if x[self.edge_var[&(u, v)].0] > 0.5 {
                next.entry(u).or_default().push(v);
            }
        }
        let mut routes = Vec::new();
        for &first in next.get(&nd.source()).map(Vec::as_slice).unwrap_or(&[]) {
            let mut nodes = Vec::new();
            let mut cur = first;
            while cur != nd.sink() {
                if nodes.len() > nd.count() {
                    return None;
                }
                nodes.push(cur);
                match next.get(&cur).map(Vec::as_slice) {
                    Some([v]) => cur = *v,
                    _ => return None,
                }
            }
            routes.push(nodes);
        }
        Some(routes)
    }
}

/// Greedy integer plan: disjoint columns by decreasing LP weight, then
/// chaining by start time onto the vehicle with the cheapest connection.
fn greedy_vehicles(inst: &Instance, graph: &MasterGraph, rmp: &Rmp, weights: &[f64], objective: Objective) -> Vec<Vec<MiniRoute>> {
    let nd = inst.nodes();
    let mut order: Vec<usize> = (0..rmp.columns.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(rmp.columns[b].nodes.len().cmp(&rmp.columns[a].nodes.len()))
            .then(rmp.columns[a].cmp(&rmp.columns[b]))
    });
    let mut used = vec![false; nd.count()];
    let mut chosen: Vec<(Time, MiniRoute)> = Vec::new();
    for k in order {
        let r = &rmp.columns[k];
        if r.nodes.iter().any(|&v| used[v]) {
            continue;
        }
        let Ok(s) = earliest_schedule(inst, &r.nodes) else { continue };
        for &v in &r.nodes {
            used[v] = true;
        }
        chosen.push((s.times[0], r.clone()));
    }
    chosen.sort();
    let mut vehicles: Vec<Vec<MiniRoute>> = Vec::new();
    for (_, r) in chosen {
        let mut best: Option<(i64, usize)> = None;
        for (k, chain) in vehicles.iter().enumerate() {
            let last = chain.last().unwrap().last();
            if !graph.has_edge(last, r.first()) {
                continue;
            }
            let delta = inst.sigma(last, r.first()) - inst.sigma(last, nd.sink());
            if best.is_some_and(|(d, _)| d <= delta) {
                continue;
            }
            let mut trial = chain.clone();
            trial.push(r.clone());
            if feasible_av_route(inst, &AvRoute { mini_routes: trial }).is_ok() {
                best = Some((delta, k));
            }
        }
        let fresh = inst.sigma(nd.source(), r.first());
        match best {
            Some((d, k)) if objective == Objective::Lexicographic || d <= fresh => vehicles[k].push(r),
            _ => vehicles.push(vec![r]),
        }
    }
    vehicles
}

fn plan_cost(inst: &Instance, routes: &[PlanRoute], objective: Objective) -> i64 {
    let dist: i64 = routes.iter().map(|r| r.distance).sum();
    match objective {
        Objective::Lexicographic => dist + vehicle_penalty(inst) * routes.len() as i64,
        Objective::Distance => dist,
    }
}

fn to_routes(inst: &Instance, seqs: Vec<Vec<usize>>) -> Option<Vec<PlanRoute>> {
    seqs.into_iter().map(|s| PlanRoute::from_nodes(inst, s).ok()).collect()
}

struct PricingRound {
    z_rmp: f64,
    duals: Duals,
    min_cost: f64,
    exact: bool,
}

pub fn run_ctspav(inst: &Instance, opts: &CtspavOptions) -> Result<CtspavOutcome, SolveError> {
    let start = Instant::now();
    let n = inst.n();
    let graph = build_master_graph(inst)?;
    let pricing_graphs: Vec<PricingGraph> = build_pricing_graphs(inst);
    let mut solver: Box<dyn LpSolver> = opts.backend.create();
    let mut rmp = Rmp::new(inst, &graph, opts.objective);
    let mut trace = Vec::new();
    let mut best_lb: Option<f64> = None;
    let mut last_round: PricingRound;
    let mut converged = false;
    let mut iteration = 0;
    let mut lp: RmpSolution;
    let colgen_s = opts.budget.colgen_s();
    log::info!("master graph: {} edges, {} pricing roots", graph.num_edges(), pricing_graphs.len());

    loop {
        iteration += 1;
        lp = solver.solve_lp(&rmp.model)?;
        match lp.status {
            Status::Optimal => {}
            Status::Infeasible => return Err(SolveError::LpInfeasible),
            s => return Err(SolveError::Backend(ctspav_lp::LpError::Backend(format!("LP status {s:?}")))),
        }
        let z_rmp = rmp.objective(&lp);
        let duals = rmp.duals(&lp);
        let batch = price_all_roots(inst, &pricing_graphs, &duals, rmp.known(), &opts.pricing);
        let min_cost = batch.min_cost.map_or(0.0, from_fixed);
        let z_lb = (!batch.truncated).then(|| lasdon_bound(z_rmp, min_cost, 2 * n));
        if let Some(lb) = z_lb {
            best_lb = Some(best_lb.map_or(lb, |b: f64| b.max(lb)));
        }
        last_round = PricingRound { z_rmp, duals, min_cost, exact: !batch.truncated };
        let done = best_lb.is_some_and(|lb| lasdon_converged(z_rmp, lb)) || (batch.routes.is_empty() && !batch.truncated);
        let mut added = 0;
        if !done {
            for pr in batch.routes.iter().take(opts.max_columns_per_iteration) {
                if rmp.add_column(&pr.route) {
                    added += 1;
                }
            }
        }
        trace.push(TraceRecord {
            procedure: Procedure::Ctspav,
            phase: opts.objective.to_string(),
            iteration,
            z_rmp,
            z_lb,
            min_reduced_cost: batch.min_cost.map(from_fixed),
            columns_added: added,
            columns_total: rmp.columns.len(),
            wall_s: start.elapsed().as_secs_f64(),
        });
        log::debug!("iteration {iteration}: z_rmp {z_rmp:.3} z_lb {z_lb:?} added {added}");
        if done {
            converged = true;
            break;
        }
        if added == 0 || iteration >= opts.max_iterations || start.elapsed().as_secs_f64() >= colgen_s {
            break;
        }
    }
    let z_rmp = last_round.z_rmp;

    // Final restricted MIP.
    let weights: Vec<f64> =
        (0..rmp.columns.len()).map(|k| if rmp.col_var[k].0 < lp.primal.len() { rmp.column_value(&lp, k) } else { 0.0 }).collect();
    let greedy = greedy_vehicles(inst, &graph, &rmp, &weights, opts.objective);
    let greedy_routes = to_routes(inst, greedy.iter().map(|c| c.iter().flat_map(|r| r.nodes.clone()).collect()).collect())
        .expect("greedy vehicles are feasible");
    let deadline = opts.budget.total_s;
    let rmp_scale = rmp.scale;
    let mip_opts = |warm: Option<Vec<f64>>| MipOptions {
        time_limit: (deadline - start.elapsed().as_secs_f64()).max(1.0),
        warm_start: warm,
        abs_gap: 0.5 * rmp_scale,
        integral_objective: rmp_scale == 1.0,
    };
    let mut mip = rmp.mip_model();
    let mut sol = solver.solve_mip(&mip, &mip_opts(rmp.point_for(&greedy)))?;
    let mut best_routes = greedy_routes;
    let mut mip_optimal = false;
    let consider = |sol: &RmpSolution, rmp: &Rmp, best: &mut Vec<PlanRoute>| -> bool {
        if !sol.has_solution() {
            return false;
        }
        match rmp.extract(&sol.primal).and_then(|s| to_routes(inst, s)) {
            Some(routes) if plan_cost(inst, &routes, opts.objective) <= plan_cost(inst, best, opts.objective) => {
                *best = routes;
            }
            Some(_) => {}
            None => log::warn!("MIP solution could not be traced into feasible routes"),
        }
        sol.status == Status::Optimal
    };
    mip_optimal |= consider(&sol, &rmp, &mut best_routes);

    let mut complete = false;
    let ub = plan_cost(inst, &best_routes, opts.objective) as f64;
    let lb_proof = best_lb.is_some_and(|lb| (lb - 1e-6).ceil() >= ub);
    if let Some(en) = &opts.enrich {
        let round = &last_round;
        if !lb_proof && round.exact && n <= en.max_n {
            let slack = 1e-6 + 1e-9 * round.z_rmp.abs();
            let threshold = ub - 1.0 - round.z_rmp - (2 * n - 1) as f64 * round.min_cost.min(0.0) + slack;
            {
                let duals = &round.duals;
                let popts = PricingOptions {
                    search: SearchOptions {
                        label_cap: Some(en.label_cap),
                        dominance: false,
                        threshold: to_fixed(threshold) + 1,
                        max_paths: None,
                        allow_revisits: false,
                    },
                    dti: false,
                };
                let batch = price_all_roots(inst, &pricing_graphs, duals, rmp.known(), &popts);
                let mut added = 0;
                for pr in batch.routes.iter().take(en.max_columns) {
                    if rmp.add_column(&pr.route) {
                        added += 1;
                    }
                }
                complete = !batch.truncated && batch.routes.len() <= en.max_columns;
                log::info!("enrichment added {added} columns (complete: {complete})");
                if added > 0 {
                    let warm = rmp.extract(&sol.primal).is_some().then(|| {
                        let mut w = sol.primal.clone();
                        w.resize(rmp.model.num_vars(), 0.0);
                        w
                    });
                    mip = rmp.mip_model();
                    sol = solver.solve_mip(&mip, &mip_opts(warm.or_else(|| rmp.point_for(&greedy))))?;
                    mip_optimal = consider(&sol, &rmp, &mut best_routes);
                }
            }
        }
    }

    let routes = best_routes;
    let objective_value = plan_cost(inst, &routes, opts.objective) as f64;
    let proven_optimal = lb_proof || (mip_optimal && complete);
    let bound = if converged { Some(z_rmp) } else { best_lb };
    let penalty = vehicle_penalty(inst) as f64;
    let vc_lb = match opts.objective {
        Objective::Lexicographic => {
            best_lb.map(|lb| ((lb - 1e-6) / (penalty + route_length_bound(inst) as f64)).ceil().max(0.0) as usize)
        }
        Objective::Distance => None,
    };
    let mut plan = SolvePlan {
        instance: inst.name.clone(),
        n,
        procedure: Procedure::Ctspav,
        objective: opts.objective,
        backend: solver.name().to_string(),
        vehicle_count: routes.len(),
        total_distance: 0,
        objective_value,
        lp_value: Some(z_rmp),
        lower_bound: best_lb,
        vc_lower_bound: vc_lb,
        gap: Gap {
            absolute_vc: vc_lb.map(|b| routes.len() as i64 - b as i64),
            optimality: bound.map_or(1.0, |b| if objective_value > 0.0 { ((objective_value - b) / objective_value).max(0.0) } else { 0.0 }),
        },
        converged,
        proven_optimal,
        iterations: iteration,
        columns: rmp.columns.len(),
        routes,
        metrics: None,
        trace: None,
    };
    plan.canonicalize();
    Ok(CtspavOutcome { plan, trace, z_rmp, z_lb: best_lb })
}
