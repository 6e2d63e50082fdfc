//! Linear and mixed-integer model container with interchangeable solver
//! backends: an adapter over HiGHS and a bundled dense simplex that runs
//! either in floating point or in exact rational arithmetic.

mod bnb;
mod bundled;
mod highs_backend;
mod model;
pub mod scalar;
mod simplex;

use std::fmt;
use std::str::FromStr;

pub use bundled::{DenseSolver, ExactSolver};
pub use highs_backend::HighsSolver;
pub use model::{Constraint, LinearModel, RowId, Sense, VarId, VarKind, Variable};
pub use simplex::{solve_dense, DenseOutcome};

#[derive(Debug, thiserror::Error)]
pub enum LpError {
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("duplicate row `{0}`")]
    DuplicateRow(String),
    #[error("unknown row index {0}")]
    UnknownRow(usize),
    #[error("unknown variable index {0}")]
    UnknownVariable(usize),
    #[error("lower bound above upper bound for `{0}`")]
    InvalidBounds(String),
    #[error("backend failure: {0}")]
    Backend(String),
    #[error("unknown backend `{0}` (expected highs, dense or exact)")]
    UnknownBackend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    /// An integer-feasible incumbent exists but optimality was not proven.
    Feasible,
    Infeasible,
    Unbounded,
    /// The budget ran out before any incumbent was found.
    BudgetExhausted,
}

/// Result of an LP or MIP solve. Duals are present only for an optimal LP.
#[derive(Debug, Clone)]
pub struct RmpSolution {
    pub status: Status,
    pub objective: f64,
    pub primal: Vec<f64>,
    pub duals: Option<Vec<f64>>,
    pub best_bound: Option<f64>,
}

impl RmpSolution {
    pub fn has_solution(&self) -> bool {
        matches!(self.status, Status::Optimal | Status::Feasible)
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.primal[v.0]
    }

    pub fn dual(&self, r: RowId) -> f64 {
        self.duals.as_ref().map_or(0.0, |d| d[r.0])
    }

    pub(crate) fn without_solution(status: Status, best_bound: Option<f64>) -> Self {
        RmpSolution { status, objective: f64::NAN, primal: Vec::new(), duals: None, best_bound }
    }

    /// Reduced cost `c_j - y^T A_j` of a variable under the stored duals.
    pub fn reduced_cost(&self, model: &LinearModel, v: VarId) -> f64 {
        let var = model.var(v);
        var.cost - var.entries.iter().map(|&(r, a)| a * self.dual(r)).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct MipOptions {
    /// Wall-clock limit in seconds.
    pub time_limit: f64,
    /// Optional starting point with one value per variable.
    pub warm_start: Option<Vec<f64>>,
    /// Stop once incumbent minus bound is at most this value.
    pub abs_gap: f64,
    /// Every feasible objective value is an integer.
    pub integral_objective: bool,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions { time_limit: f64::INFINITY, warm_start: None, abs_gap: 1e-6, integral_objective: false }
    }
}

pub trait LpSolver {
    fn name(&self) -> &'static str;

    /// Solves the continuous relaxation of `model`.
    fn solve_lp(&mut self, model: &LinearModel) -> Result<RmpSolution, LpError>;

    fn solve_mip(&mut self, model: &LinearModel, opts: &MipOptions) -> Result<RmpSolution, LpError>;

    /// Optimal duals from an interior point of the optimal face, when the
    /// backend can produce one.
    fn solve_lp_interior(&mut self, _model: &LinearModel) -> Result<Option<RmpSolution>, LpError> {
        Ok(None)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BackendKind {
    #[default]
    Highs,
    Dense,
    Exact,
}

impl BackendKind {
    pub const ENV_VAR: &'static str = "CTSPAV_BACKEND";

    /// Reads the backend from `CTSPAV_BACKEND`, defaulting to HiGHS.
    pub fn from_env() -> Result<Self, LpError> {
        match std::env::var(Self::ENV_VAR) {
            Ok(s) if !s.trim().is_empty() => s.parse(),
            _ => Ok(BackendKind::Highs),
        }
    }

    pub fn create(self) -> Box<dyn LpSolver> {
        match self {
            BackendKind::Highs => Box::new(HighsSolver::new()),
            BackendKind::Dense => Box::new(DenseSolver::new()),
            BackendKind::Exact => Box::new(ExactSolver::new()),
        }
    }
}

impl FromStr for BackendKind {
    type Err = LpError;
    fn from_str(s: &str) -> Result<Self, LpError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "highs" => Ok(BackendKind::Highs),
            "dense" => Ok(BackendKind::Dense),
            "exact" | "rational" => Ok(BackendKind::Exact),
            other => Err(LpError::UnknownBackend(other.to_string())),
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Highs => "highs",
            BackendKind::Dense => "dense",
            BackendKind::Exact => "exact",
        })
    }
}
