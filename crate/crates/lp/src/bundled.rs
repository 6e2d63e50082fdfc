use num_rational::BigRational;

use crate::bnb::branch_and_bound;
use crate::model::LinearModel;
use crate::scalar::Scalar;
use crate::simplex::{solve_dense, DenseStatus};
use crate::{LpError, LpSolver, MipOptions, RmpSolution, Status};

fn lp_with<S: Scalar>(model: &LinearModel) -> RmpSolution {
    let out = solve_dense::<S>(model, None, None);
    match out.status {
        DenseStatus::Optimal => RmpSolution {
            status: Status::Optimal,
            objective: out.objective.to_f64(),
            primal: out.x.iter().map(|v| v.to_f64()).collect(),
            duals: Some(out.duals.iter().map(|v| v.to_f64()).collect()),
            best_bound: None,
        },
        DenseStatus::Infeasible => RmpSolution::without_solution(Status::Infeasible, None),
        DenseStatus::Unbounded => RmpSolution::without_solution(Status::Unbounded, None),
        DenseStatus::Interrupted => RmpSolution::without_solution(Status::BudgetExhausted, None),
    }
}

/// Bundled dense simplex in double precision.
#[derive(Debug, Default)]
pub struct DenseSolver;

impl DenseSolver {
    pub fn new() -> Self {
        DenseSolver
    }
}

impl LpSolver for DenseSolver {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn solve_lp(&mut self, model: &LinearModel) -> Result<RmpSolution, LpError> {
        Ok(lp_with::<f64>(model))
    }

    fn solve_mip(&mut self, model: &LinearModel, opts: &MipOptions) -> Result<RmpSolution, LpError> {
        if !model.has_integers() {
            return self.solve_lp(model);
        }
        Ok(branch_and_bound::<f64>(model, opts))
    }
}

/// Bundled dense simplex in exact rational arithmetic. Meant for small
/// verification models; cost grows quickly with model size.
#[derive(Debug, Default)]
pub struct ExactSolver;

impl ExactSolver {
    pub fn new() -> Self {
        ExactSolver
    }
}

impl LpSolver for ExactSolver {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn solve_lp(&mut self, model: &LinearModel) -> Result<RmpSolution, LpError> {
        Ok(lp_with::<BigRational>(model))
    }

    fn solve_mip(&mut self, model: &LinearModel, opts: &MipOptions) -> Result<RmpSolution, LpError> {
        if !model.has_integers() {
            return self.solve_lp(model);
        }
        Ok(branch_and_bound::<BigRational>(model, opts))
    }
}
