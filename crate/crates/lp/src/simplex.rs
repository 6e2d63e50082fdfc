//! Dense bounded-variable primal simplex with an artificial-variable phase 1.
//!
//! Every row `l <= a x <= u` becomes `a x - s = 0` with the slack `s`
//! carrying the row bounds, so the tableau is homogeneous and basic values
//! follow from the nonbasic ones.

use std::time::Instant;

use crate::model::{LinearModel, Sense};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenseStatus {
    Optimal,
    Infeasible,
    Unbounded,
    Interrupted,
}

#[derive(Debug, Clone)]
pub struct DenseOutcome<S> {
    pub status: DenseStatus,
    pub objective: S,
    pub x: Vec<S>,
    /// One dual per row, convention `c - y^T A` for reduced costs.
    pub duals: Vec<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pos {
    Basic(usize),
    Lower,
    Upper,
    Free,
}

struct Tableau<S> {
    m: usize,
    ncols: usize,
    t: Vec<S>,
    d: Vec<S>,
    basis: Vec<usize>,
    pos: Vec<Pos>,
    x: Vec<S>,
    lo: Vec<Option<S>>,
    up: Vec<Option<S>>,
    cost: Vec<S>,
}

impl<S: Scalar> Tableau<S> {
    fn at(&self, i: usize, j: usize) -> &S {
        &self.t[i * self.ncols + j]
    }

    fn recompute_reduced_costs(&mut self) {
        let mut d = self.cost.clone();
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]].clone();
            if cb.exactly_zero() {
                continue;
            }
            for (j, dj) in d.iter_mut().enumerate() {
                let a = self.at(i, j);
                if !a.exactly_zero() {
                    *dj = dj.sub(&cb.mul(a));
                }
            }
        }
        self.d = d;
    }

    fn recompute_basics(&mut self) {
        for i in 0..self.m {
            let mut v = S::zero();
            for j in 0..self.ncols {
                if matches!(self.pos[j], Pos::Basic(_)) {
                    continue;
                }
                let a = self.at(i, j);
                if !a.exactly_zero() && !self.x[j].exactly_zero() {
                    v = v.sub(&a.mul(&self.x[j]));
                }
            }
            let b = self.basis[i];
            self.x[b] = v;
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.ncols;
        let p = self.t[r * n + q].clone();
        if p != S::one() {
            for j in 0..n {
                let v = &self.t[r * n + j];
                if !v.exactly_zero() {
                    self.t[r * n + j] = v.div(&p);
                }
            }
        }
        let prow: Vec<(usize, S)> = (0..n)
            .filter_map(|j| {
                let v = &self.t[r * n + j];
                (!v.exactly_zero()).then(|| (j, v.clone()))
            })
            .collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.t[i * n + q].clone();
            if f.exactly_zero() {
                continue;
            }
            for (j, v) in &prow {
                let cell = &mut self.t[i * n + j];
                *cell = cell.sub(&f.mul(v));
            }
            if !S::is_exact() {
                self.t[i * n + q] = S::zero();
            }
        }
        let f = self.d[q].clone();
        if !f.exactly_zero() {
            for (j, v) in &prow {
                self.d[*j] = self.d[*j].sub(&f.mul(v));
            }
            if !S::is_exact() {
                self.d[q] = S::zero();
            }
        }
        let leaving = self.basis[r];
        self.basis[r] = q;
        self.pos[q] = Pos::Basic(r);
        let _ = leaving;
    }

    /// Runs simplex iterations for the current cost vector.
    fn optimize(&mut self, deadline: Option<Instant>, max_iter: usize) -> DenseStatus {
        let mut degenerate_run = 0usize;
        for iter in 0..max_iter {
            if iter % 64 == 63 {
                if let Some(dl) = deadline {
                    if Instant::now() >= dl {
                        return DenseStatus::Interrupted;
                    }
                }
                if !S::is_exact() && iter % 256 == 255 {
                    self.recompute_basics();
                }
            }
            let bland = degenerate_run > 50;
            let mut enter: Option<(usize, i32)> = None;
            let mut best = S::zero();
            for j in 0..self.ncols {
                let dj = &self.d[j];
                let dir = match self.pos[j] {
                    Pos::Basic(_) => continue,
                    Pos::Lower => {
                        if self.lo[j].is_some() && self.lo[j] == self.up[j] {
                            continue;
                        }
                        if dj.is_neg() {
                            1
                        } else {
                            continue;
                        }
                    }
                    Pos::Upper => {
                        if self.lo[j].is_some() && self.lo[j] == self.up[j] {
                            continue;
                        }
                        if dj.is_pos() {
                            -1
                        } else {
                            continue;
                        }
                    }
                    Pos::Free => {
                        if dj.is_neg() {
                            1
                        } else if dj.is_pos() {
                            -1
                        } else {
                            continue;
                        }
                    }
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                let mag = dj.abs();
                if enter.is_none() || mag > best {
                    best = mag;
                    enter = Some((j, dir));
                }
            }
            let Some((q, dir)) = enter else {
                return DenseStatus::Optimal;
            };

            // Ratio test.
            let mut step: Option<S> = match (&self.lo[q], &self.up[q]) {
                (Some(l), Some(u)) => Some(u.sub(l)),
                _ => None,
            };
            let mut leave: Option<(usize, S, bool)> = None;
            for i in 0..self.m {
                let a = self.at(i, q);
                if a.abs() <= S::pivot_tol() || a.exactly_zero() {
                    continue;
                }
                let rate = if dir > 0 { a.neg() } else { a.clone() };
                let b = self.basis[i];
                let (limit, to_upper) = if rate > S::zero() {
                    match &self.up[b] {
                        Some(u) => (u.sub(&self.x[b]).div(&rate), true),
                        None => continue,
                    }
                } else {
                    match &self.lo[b] {
                        Some(l) => (l.sub(&self.x[b]).div(&rate), false),
                        None => continue,
                    }
                };
                let limit = if limit < S::zero() { S::zero() } else { limit };
                let better = match &leave {
                    None => true,
                    Some((li, lv, _)) => {
                        if S::is_exact() {
                            limit < *lv || (limit == *lv && b < self.basis[*li])
                        } else {
                            let diff = limit.sub(lv);
                            if diff.is_neg() {
                                true
                            } else if diff.is_pos() {
                                false
                            } else {
                                a.abs() > self.at(*li, q).abs()
                            }
                        }
                    }
                };
                if better {
                    leave = Some((i, limit, to_upper));
                }
            }
            let flip = match (&step, &leave) {
                (Some(s), Some((_, lv, _))) => *s <= *lv,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (None, None) => return DenseStatus::Unbounded,
            };
            if flip {
                let s = step.take().unwrap();
                self.shift(q, dir, &s);
                self.pos[q] = if dir > 0 { Pos::Upper } else { Pos::Lower };
                self.x[q] = if dir > 0 { self.up[q].clone().unwrap() } else { self.lo[q].clone().unwrap() };
                degenerate_run = 0;
                continue;
            }
            let (r, t, to_upper) = leave.unwrap();
            if t.is_zero() {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.shift(q, dir, &t);
            let b = self.basis[r];
            if to_upper {
                self.x[b] = self.up[b].clone().unwrap();
                self.pos[b] = Pos::Upper;
            } else {
                self.x[b] = self.lo[b].clone().unwrap();
                self.pos[b] = Pos::Lower;
            }
            self.pivot(r, q);
        }
        DenseStatus::Interrupted
    }

    /// Moves entering variable `q` by `t` in direction `dir`, updating basics.
    fn shift(&mut self, q: usize, dir: i32, t: &S) {
        if t.exactly_zero() {
            return;
        }
        let delta = if dir > 0 { t.clone() } else { t.neg() };
        self.x[q] = self.x[q].add(&delta);
        for i in 0..self.m {
            let a = self.at(i, q).clone();
            if a.exactly_zero() {
                continue;
            }
            let b = self.basis[i];
            self.x[b] = self.x[b].sub(&a.mul(&delta));
        }
    }
}

fn conv<S: Scalar>(v: f64) -> Option<S> {
    v.is_finite().then(|| S::from_f64(v))
}

/// Solves the continuous relaxation of `model`, optionally with replaced
/// variable bounds (used by branch and bound).
pub fn solve_dense<S: Scalar>(
    model: &LinearModel,
    bounds: Option<(&[f64], &[f64])>,
    deadline: Option<Instant>,
) -> DenseOutcome<S> {
    let n = model.num_vars();
    let m = model.num_rows();
    let sign = if model.sense() == Sense::Maximize { -1.0 } else { 1.0 };

    let mut lo: Vec<Option<S>> = Vec::with_capacity(n + 2 * m);
    let mut up: Vec<Option<S>> = Vec::with_capacity(n + 2 * m);
    for (j, v) in model.vars().iter().enumerate() {
        let (l, u) = match bounds {
            Some((bl, bu)) => (bl[j], bu[j]),
            None => (v.lower, v.upper),
        };
        if l > u {
            return DenseOutcome {
                status: DenseStatus::Infeasible,
                objective: S::zero(),
                x: vec![],
                duals: vec![],
            };
        }
        lo.push(conv(l));
        up.push(conv(u));
    }
    let mut x: Vec<S> = Vec::with_capacity(n + 2 * m);
    let mut pos: Vec<Pos> = Vec::with_capacity(n + 2 * m);
    for j in 0..n {
        match (&lo[j], &up[j]) {
            (Some(l), _) => {
                x.push(l.clone());
                pos.push(Pos::Lower);
            }
            (None, Some(u)) => {
                x.push(u.clone());
                pos.push(Pos::Upper);
            }
            (None, None) => {
                x.push(S::zero());
                pos.push(Pos::Free);
            }
        }
    }
    // Row activities at the starting point decide which rows need artificials.
    let mut act: Vec<S> = vec![S::zero(); m];
    let a_rows: Vec<Vec<(usize, S)>> = model
        .rows()
        .iter()
        .map(|r| r.entries.iter().map(|&(v, c)| (v.0, S::from_f64(c))).collect())
        .collect();
    for (i, row) in a_rows.iter().enumerate() {
        for (j, c) in row {
            if !x[*j].exactly_zero() {
                act[i] = act[i].add(&c.mul(&x[*j]));
            }
        }
    }
    let mut art_rows: Vec<(usize, S)> = Vec::new();
    let mut slack_state: Vec<(Pos, S)> = Vec::with_capacity(m);
    for (i, row) in model.rows().iter().enumerate() {
        let l: Option<S> = conv(row.lower);
        let u: Option<S> = conv(row.upper);
        let r = act[i].clone();
        let below = l.as_ref().is_some_and(|l| r < *l);
        let above = u.as_ref().is_some_and(|u| r > *u);
        if below {
            let lv = l.clone().unwrap();
            art_rows.push((i, S::one()));
            slack_state.push((Pos::Lower, lv));
        } else if above {
            let uv = u.clone().unwrap();
            art_rows.push((i, S::one().neg()));
            slack_state.push((Pos::Upper, uv));
        } else {
            slack_state.push((Pos::Basic(i), r));
        }
        lo.push(l);
        up.push(u);
    }
    let na = art_rows.len();
    let ncols = n + m + na;
    let mut t: Vec<S> = vec![S::zero(); m * ncols];
    let mut basis = vec![0usize; m];
    for (i, (p, v)) in slack_state.iter().enumerate() {
        x.push(v.clone());
        pos.push(*p);
        if let Pos::Basic(_) = p {
            // -a x + s = 0
            for (j, c) in &a_rows[i] {
                t[i * ncols + j] = c.neg();
            }
            t[i * ncols + n + i] = S::one();
            basis[i] = n + i;
        }
    }
    for (k, (i, sg)) in art_rows.iter().enumerate() {
        // (a x - s) / sg + art = 0, art = (s - a x) / sg >= 0
        let col = n + m + k;
        for (j, c) in &a_rows[*i] {
            t[i * ncols + j] = c.div(sg);
        }
        t[i * ncols + n + i] = S::one().neg().div(sg);
        t[i * ncols + col] = S::one();
        basis[*i] = col;
        let val = x[n + i].sub(&act[*i]).div(sg);
        x.push(val);
        pos.push(Pos::Basic(*i));
        lo.push(Some(S::zero()));
        up.push(None);
    }
    for (i, b) in basis.iter().enumerate() {
        if let Pos::Basic(_) = pos[*b] {
            pos[*b] = Pos::Basic(i);
        }
    }

    let mut tab = Tableau {
        m,
        ncols,
        t,
        d: vec![],
        basis,
        pos,
        x,
        lo,
        up,
        cost: vec![S::zero(); ncols],
    };
    let max_iter = 100 * (m + ncols) + 10_000;

    if na > 0 {
        for k in 0..na {
            tab.cost[n + m + k] = S::one();
        }
        tab.recompute_reduced_costs();
        let st = tab.optimize(deadline, max_iter);
        if st == DenseStatus::Interrupted {
            return DenseOutcome { status: st, objective: S::zero(), x: vec![], duals: vec![] };
        }
        if !S::is_exact() {
            tab.recompute_basics();
        }
        let mut infeas = S::zero();
        for k in 0..na {
            infeas = infeas.add(&tab.x[n + m + k]);
        }
        let limit = if S::is_exact() { S::zero() } else { S::from_f64(1e-7) };
        if infeas > limit {
            return DenseOutcome {
                status: DenseStatus::Infeasible,
                objective: S::zero(),
                x: vec![],
                duals: vec![],
            };
        }
        for k in 0..na {
            let c = n + m + k;
            tab.up[c] = Some(S::zero());
            tab.cost[c] = S::zero();
            if !matches!(tab.pos[c], Pos::Basic(_)) {
                tab.pos[c] = Pos::Lower;
                tab.x[c] = S::zero();
            }
        }
    }
    for (j, v) in model.vars().iter().enumerate() {
        tab.cost[j] = S::from_f64(sign * v.cost);
    }
    tab.recompute_reduced_costs();
    let st = tab.optimize(deadline, max_iter);
    if st != DenseStatus::Optimal {
        return DenseOutcome { status: st, objective: S::zero(), x: vec![], duals: vec![] };
    }
    if !S::is_exact() {
        tab.recompute_basics();
        tab.recompute_reduced_costs();
    }
    let xs: Vec<S> = tab.x[..n].to_vec();
    let mut obj = S::zero();
    for (j, v) in model.vars().iter().enumerate() {
        if v.cost != 0.0 {
            obj = obj.add(&S::from_f64(v.cost).mul(&xs[j]));
        }
    }
    let duals: Vec<S> = (0..m)
        .map(|i| {
            let y = tab.d[n + i].clone();
            if sign < 0.0 {
                y.neg()
            } else {
                y
            }
        })
        .collect();
    DenseOutcome { status: DenseStatus::Optimal, objective: obj, x: xs, duals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VarKind;
    use num_rational::BigRational;

    fn lp(rows: &[(&[f64], f64, f64)], costs: &[f64], ub: f64) -> LinearModel {
        let mut m = LinearModel::default();
        let vars: Vec<_> = costs
            .iter()
            .enumerate()
            .map(|(j, &c)| m.add_var(format!("x{j}"), 0.0, ub, c, VarKind::Continuous).unwrap())
            .collect();
        for (i, (coef, l, u)) in rows.iter().enumerate() {
            let e: Vec<_> = coef.iter().enumerate().map(|(j, &c)| (vars[j], c)).collect();
            m.add_row(format!("r{i}"), *l, *u, &e).unwrap();
        }
        m
    }

    #[test]
    fn textbook_minimum_with_dual() {
        let m = lp(&[(&[1.0], 3.0, f64::INFINITY)], &[1.0], f64::INFINITY);
        let out = solve_dense::<f64>(&m, None, None);
        assert_eq!(out.status, DenseStatus::Optimal);
        assert!((out.objective - 3.0).abs() < 1e-9);
        assert!((out.duals[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn maximisation_with_two_constraints() {
        // max 3x + 2y, x + y <= 4, x + 3y <= 6, x <= 3
        let mut m = lp(
            &[(&[1.0, 1.0], f64::NEG_INFINITY, 4.0), (&[1.0, 3.0], f64::NEG_INFINITY, 6.0)],
            &[3.0, 2.0],
            f64::INFINITY,
        );
        m.set_var_bounds(crate::VarId(0), 0.0, 3.0);
        m.set_sense(Sense::Maximize);
        let out = solve_dense::<BigRational>(&m, None, None);
        assert_eq!(out.status, DenseStatus::Optimal);
        assert_eq!(out.objective.to_f64(), 11.0);
        assert_eq!(out.duals[0].to_f64(), 2.0);
    }

    #[test]
    fn infeasible_pair_detected() {
        let m = lp(&[(&[1.0], f64::NEG_INFINITY, 0.0), (&[1.0], 1.0, f64::INFINITY)], &[1.0], f64::INFINITY);
        assert_eq!(solve_dense::<f64>(&m, None, None).status, DenseStatus::Infeasible);
        assert_eq!(solve_dense::<BigRational>(&m, None, None).status, DenseStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let m = lp(&[(&[1.0, -1.0], f64::NEG_INFINITY, 1.0)], &[-1.0, -1.0], f64::INFINITY);
        assert_eq!(solve_dense::<f64>(&m, None, None).status, DenseStatus::Unbounded);
    }

    #[test]
    fn equality_rows_and_free_variables() {
        // min x - y, x + y = 2, x - y free-range, x in [0,5], y free
        let mut m = LinearModel::default();
        let x = m.add_var("x", 0.0, 5.0, 1.0, VarKind::Continuous).unwrap();
        let y = m.add_var("y", f64::NEG_INFINITY, f64::INFINITY, -1.0, VarKind::Continuous).unwrap();
        m.add_row("e", 2.0, 2.0, &[(x, 1.0), (y, 1.0)]).unwrap();
        let out = solve_dense::<BigRational>(&m, None, None);
        assert_eq!(out.status, DenseStatus::Optimal);
        assert_eq!(out.objective.to_f64(), -2.0);
        assert_eq!(out.x[0].to_f64(), 0.0);
    }
}
