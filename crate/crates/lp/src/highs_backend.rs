use highs::{Col, ColProblem, HighsModelStatus, HighsSolutionStatus, Model, Row, Sense as HSense};

use crate::model::{LinearModel, Sense, VarKind};
use crate::{LpError, LpSolver, MipOptions, RmpSolution, Status};

struct Cache {
    model_id: u64,
    revision: u64,
    model: Option<Model>,
    rows: Vec<Row>,
    cols: Vec<Col>,
}

/// Adapter over the HiGHS solver. Continuous solves reuse the previous
/// HiGHS instance when the model has only grown by appended rows and
/// columns, so the last basis warm-starts the next solve.
#[derive(Default)]
pub struct HighsSolver {
    cache: Option<Cache>,
}

impl std::fmt::Debug for HighsSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HighsSolver").finish_non_exhaustive()
    }
}

fn sense_of(model: &LinearModel) -> HSense {
    match model.sense() {
        Sense::Minimize => HSense::Minimise,
        Sense::Maximize => HSense::Maximise,
    }
}

fn build(model: &LinearModel, integer: bool) -> Model {
    let mut pb = ColProblem::default();
    let rows: Vec<Row> = model.rows().iter().map(|r| pb.add_row(r.lower..=r.upper)).collect();
    for v in model.vars() {
        let factors: Vec<(Row, f64)> = v.entries.iter().map(|&(r, c)| (rows[r.0], c)).collect();
        let is_int = integer && v.kind == VarKind::Integer;
        pb.add_column_with_integrality(v.cost, v.lower..=v.upper, factors, is_int);
    }
    let mut m = pb.optimise(sense_of(model));
    configure(&mut m);
    m
}

/// Builds an incrementally extensible instance and keeps the row and
/// column handles.
fn build_incremental(model: &LinearModel) -> (Model, Vec<Row>, Vec<Col>) {
    let mut m = ColProblem::default().optimise(sense_of(model));
    configure(&mut m);
    let rows: Vec<Row> = model
        .rows()
        .iter()
        .map(|r| m.add_row(r.lower..=r.upper, std::iter::empty()))
        .collect();
    let cols: Vec<Col> = model
        .vars()
        .iter()
        .map(|v| {
            let factors: Vec<(Row, f64)> = v.entries.iter().map(|&(r, c)| (rows[r.0], c)).collect();
            m.add_col(v.cost, v.lower..=v.upper, factors)
        })
        .collect();
    (m, rows, cols)
}

fn configure(m: &mut Model) {
    m.make_quiet();
    m.set_option("random_seed", 0);
}

fn lp_result(solved: &highs::SolvedModel, nvars: usize, nrows: usize) -> RmpSolution {
    match solved.status() {
        HighsModelStatus::Optimal => {
            let sol = solved.get_solution();
            RmpSolution {
                status: Status::Optimal,
                objective: solved.objective_value(),
                primal: sol.columns().to_vec(),
                duals: Some(sol.dual_rows().to_vec()),
                best_bound: None,
            }
        }
        HighsModelStatus::ModelEmpty => RmpSolution {
            status: Status::Optimal,
            objective: 0.0,
            primal: vec![0.0; nvars],
            duals: Some(vec![0.0; nrows]),
            best_bound: None,
        },
        HighsModelStatus::Infeasible => RmpSolution::without_solution(Status::Infeasible, None),
        HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
            RmpSolution::without_solution(Status::Unbounded, None)
        }
        _ => RmpSolution::without_solution(Status::BudgetExhausted, None),
    }
}

impl HighsSolver {
    pub fn new() -> Self {
        HighsSolver { cache: None }
    }

    fn sync(&mut self, model: &LinearModel) {
        let reusable = self.cache.as_ref().is_some_and(|c| {
            c.model_id == model.id()
                && c.revision == model.revision()
                && c.rows.len() <= model.num_rows()
                && c.cols.len() <= model.num_vars()
                && c.model.is_some()
        });
        if !reusable {
            let (m, rows, cols) = build_incremental(model);
            self.cache = Some(Cache {
                model_id: model.id(),
                revision: model.revision(),
                model: Some(m),
                rows,
                cols,
            });
            return;
        }
        let cache = self.cache.as_mut().unwrap();
        let hm = cache.model.as_mut().unwrap();
        let c0 = cache.cols.len();
        for r in &model.rows()[cache.rows.len()..] {
            let factors: Vec<(Col, f64)> =
                r.entries.iter().filter(|(v, _)| v.0 < c0).map(|&(v, c)| (cache.cols[v.0], c)).collect();
            cache.rows.push(hm.add_row(r.lower..=r.upper, factors));
        }
        for v in &model.vars()[c0..] {
            let factors: Vec<(Row, f64)> = v.entries.iter().map(|&(r, c)| (cache.rows[r.0], c)).collect();
            cache.cols.push(hm.add_col(v.cost, v.lower..=v.upper, factors));
        }
    }
}

impl LpSolver for HighsSolver {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve_lp(&mut self, model: &LinearModel) -> Result<RmpSolution, LpError> {
        self.sync(model);
        let hm = self.cache.as_mut().unwrap().model.take().unwrap();
        let solved = match hm.try_solve() {
            Ok(s) => s,
            Err(e) => {
                self.cache = None;
                return Err(LpError::Backend(format!("HiGHS run failed: {e:?}")));
            }
        };
        let out = lp_result(&solved, model.num_vars(), model.num_rows());
        self.cache.as_mut().unwrap().model = Some(Model::from(solved));
        Ok(out)
    }

    fn solve_mip(&mut self, model: &LinearModel, opts: &MipOptions) -> Result<RmpSolution, LpError> {
        if !model.has_integers() {
            return self.solve_lp(model);
        }
        let mut hm = build(model, true);
        if opts.time_limit.is_finite() {
            hm.set_option("time_limit", opts.time_limit.max(0.0));
        }
        hm.set_option("mip_rel_gap", 0.0);
        hm.set_option("mip_abs_gap", opts.abs_gap.max(1e-9));
        if let Some(ws) = &opts.warm_start {
            if ws.len() == model.num_vars() {
                if let Err(e) = hm.try_set_solution(Some(ws), None, None, None) {
                    log::warn!("HiGHS rejected the warm start: {e:?}");
                }
            }
        }
        let solved = hm.try_solve().map_err(|e| LpError::Backend(format!("HiGHS MIP run failed: {e:?}")))?;
        let bound = solved.double_info_value(c"mip_dual_bound").ok().filter(|b| b.is_finite());
        let has_primal = solved.primal_solution_status() == HighsSolutionStatus::Feasible;
        let status = solved.status();
        let out = match status {
            HighsModelStatus::Optimal if has_primal => RmpSolution {
                status: Status::Optimal,
                objective: solved.objective_value(),
                primal: solved.get_solution().columns().to_vec(),
                duals: None,
                best_bound: bound.or(Some(solved.objective_value())),
            },
            HighsModelStatus::Infeasible => RmpSolution::without_solution(Status::Infeasible, None),
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                RmpSolution::without_solution(Status::Unbounded, None)
            }
            _ if has_primal => RmpSolution {
                status: Status::Feasible,
                objective: solved.objective_value(),
                primal: solved.get_solution().columns().to_vec(),
                duals: None,
                best_bound: bound,
            },
            _ => RmpSolution::without_solution(Status::BudgetExhausted, bound),
        };
        Ok(out)
    }

    fn solve_lp_interior(&mut self, model: &LinearModel) -> Result<Option<RmpSolution>, LpError> {
        let mut hm = build(model, false);
        hm.set_option("solver", "ipm");
        hm.set_option("run_crossover", "off");
        let solved = hm.try_solve().map_err(|e| LpError::Backend(format!("HiGHS IPM failed: {e:?}")))?;
        let out = lp_result(&solved, model.num_vars(), model.num_rows());
        Ok(out.has_solution().then_some(out))
    }
}
