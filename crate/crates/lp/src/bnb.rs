//! Depth-first branch and bound over the dense simplex.

use std::time::{Duration, Instant};

use crate::model::{LinearModel, Sense, VarKind};
use crate::scalar::Scalar;
use crate::simplex::{solve_dense, DenseStatus};
use crate::{MipOptions, RmpSolution, Status};

const INT_TOL: f64 = 1e-6;

struct Node {
    lower: Vec<f64>,
    upper: Vec<f64>,
    bound: f64,
}

pub(crate) fn branch_and_bound<S: Scalar>(model: &LinearModel, opts: &MipOptions) -> RmpSolution {
    let start = Instant::now();
    let deadline = if opts.time_limit.is_finite() {
        Some(start + Duration::from_secs_f64(opts.time_limit.max(0.0)))
    } else {
        None
    };
    // Work internally as minimisation.
    let sign = if model.sense() == Sense::Maximize { -1.0 } else { 1.0 };
    let ints: Vec<usize> =
        (0..model.num_vars()).filter(|&j| model.var(crate::VarId(j)).kind == VarKind::Integer).collect();

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    if let Some(ws) = &opts.warm_start {
        if ws.len() == model.num_vars() {
            let (viol, integral) = model.check_point(ws, INT_TOL);
            if viol <= 1e-6 && integral {
                incumbent = Some((sign * model.objective_value(ws), ws.clone()));
            }
        }
    }

    let root_lower: Vec<f64> = model
        .vars()
        .iter()
        .map(|v| if v.kind == VarKind::Integer { v.lower.ceil() } else { v.lower })
        .collect();
    let root_upper: Vec<f64> = model
        .vars()
        .iter()
        .map(|v| if v.kind == VarKind::Integer { v.upper.floor() } else { v.upper })
        .collect();

    let prune = |bound: f64, inc: &Option<(f64, Vec<f64>)>| -> bool {
        match inc {
            None => false,
            Some((z, _)) => {
                let b = if opts.integral_objective { (bound - 1e-6).ceil() } else { bound };
                b >= z - opts.abs_gap.max(1e-9)
            }
        }
    };

    let mut stack = vec![Node { lower: root_lower, upper: root_upper, bound: f64::NEG_INFINITY }];
    let mut interrupted = false;
    let mut root_bound: Option<f64> = None;
    while let Some(node) = stack.pop() {
        if let Some(dl) = deadline {
            if Instant::now() >= dl {
                stack.push(node);
                interrupted = true;
                break;
            }
        }
        if prune(node.bound, &incumbent) {
            continue;
        }
        let out = solve_dense::<S>(model, Some((&node.lower, &node.upper)), deadline);
        match out.status {
            DenseStatus::Optimal => {}
            DenseStatus::Infeasible => continue,
            DenseStatus::Unbounded => {
                if incumbent.is_none() && root_bound.is_none() {
                    return RmpSolution::without_solution(Status::Unbounded, None);
                }
                continue;
            }
            DenseStatus::Interrupted => {
                stack.push(node);
                interrupted = true;
                break;
            }
        }
        let z = sign * out.objective.to_f64();
        if root_bound.is_none() {
            root_bound = Some(z);
        }
        if prune(z, &incumbent) {
            continue;
        }
        let x: Vec<f64> = out.x.iter().map(|v| v.to_f64()).collect();
        let mut branch: Option<(usize, f64)> = None;
        let mut best_frac = 0.0;
        for &j in &ints {
            let f = x[j] - x[j].floor();
            let dist = f.min(1.0 - f);
            if dist > INT_TOL && dist > best_frac {
                best_frac = dist;
                branch = Some((j, x[j]));
            }
        }
        match branch {
            None => {
                let mut xr = x;
                for &j in &ints {
                    xr[j] = xr[j].round();
                }
                let better = incumbent.as_ref().is_none_or(|(zi, _)| z < *zi - 1e-9);
                if better {
                    incumbent = Some((z, xr));
                }
            }
            Some((j, v)) => {
                let mut down = Node { lower: node.lower.clone(), upper: node.upper.clone(), bound: z };
                down.upper[j] = v.floor();
                let mut up = Node { lower: node.lower, upper: node.upper, bound: z };
                up.lower[j] = v.ceil();
                // Explore the nearer side first.
                if v - v.floor() < 0.5 {
                    stack.push(up);
                    stack.push(down);
                } else {
                    stack.push(down);
                    stack.push(up);
                }
            }
        }
    }

    let open_bound = stack.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    match incumbent {
        Some((z, x)) => {
            let bound = if interrupted { open_bound.min(z) } else { z };
            RmpSolution {
                status: if interrupted { Status::Feasible } else { Status::Optimal },
                objective: sign * z,
                primal: x,
                duals: None,
                best_bound: Some(sign * bound),
            }
        }
        None => {
            if interrupted {
                let b = match root_bound {
                    Some(_) => open_bound,
                    None => {
                        let lp = solve_dense::<S>(model, None, None);
                        if lp.status == DenseStatus::Optimal {
                            sign * lp.objective.to_f64()
                        } else {
                            f64::NEG_INFINITY
                        }
                    }
                };
                RmpSolution::without_solution(Status::BudgetExhausted, Some(sign * b))
            } else {
                RmpSolution::without_solution(Status::Infeasible, None)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn set_cover() -> LinearModel {
        // A covers {1,2}, B covers {2,3}, C covers {1,3}
        let mut m = LinearModel::default();
        let a = m.add_var("A", 0.0, 1.0, 1.0, VarKind::Integer).unwrap();
        let b = m.add_var("B", 0.0, 1.0, 1.0, VarKind::Integer).unwrap();
        let c = m.add_var("C", 0.0, 1.0, 1.0, VarKind::Integer).unwrap();
        m.add_row("e1", 1.0, f64::INFINITY, &[(a, 1.0), (c, 1.0)]).unwrap();
        m.add_row("e2", 1.0, f64::INFINITY, &[(a, 1.0), (b, 1.0)]).unwrap();
        m.add_row("e3", 1.0, f64::INFINITY, &[(b, 1.0), (c, 1.0)]).unwrap();
        m
    }

    #[test]
    fn triangle_set_cover_needs_two_sets() {
        let m = set_cover();
        let lp = solve_dense::<f64>(&m, None, None);
        assert!((lp.objective - 1.5).abs() < 1e-9);
        let s = branch_and_bound::<f64>(&m, &MipOptions::default());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-9);
        let s = branch_and_bound::<BigRational>(&m, &MipOptions::default());
        assert!((s.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_budget_reports_bound_without_incumbent() {
        let m = set_cover();
        let opts = MipOptions { time_limit: 0.0, ..MipOptions::default() };
        let s = branch_and_bound::<f64>(&m, &opts);
        assert_eq!(s.status, Status::BudgetExhausted);
        assert!(s.best_bound.unwrap() <= 2.0);
    }

    #[test]
    fn warm_start_is_kept_when_optimal() {
        let m = set_cover();
        let opts = MipOptions { warm_start: Some(vec![1.0, 1.0, 0.0]), ..MipOptions::default() };
        let s = branch_and_bound::<f64>(&m, &opts);
        assert_eq!(s.status, Status::Optimal);
        assert_eq!(s.primal, vec![1.0, 1.0, 0.0]);
    }
}
