use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::LpError;

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
    pub kind: VarKind,
    pub entries: Vec<(RowId, f64)>,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub entries: Vec<(VarId, f64)>,
}

/// Append-only linear model. Rows and variables keep their index for the
/// lifetime of the model so duals and primal values can be attributed.
#[derive(Debug)]
pub struct LinearModel {
    id: u64,
    revision: u64,
    sense: Sense,
    vars: Vec<Variable>,
    rows: Vec<Constraint>,
    var_names: HashMap<String, VarId>,
    row_names: HashMap<String, RowId>,
}

impl Clone for LinearModel {
    fn clone(&self) -> Self {
        LinearModel {
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            revision: 0,
            sense: self.sense,
            vars: self.vars.clone(),
            rows: self.rows.clone(),
            var_names: self.var_names.clone(),
            row_names: self.row_names.clone(),
        }
    }
}

impl Default for LinearModel {
    fn default() -> Self {
        Self::new(Sense::Minimize)
    }
}

impl LinearModel {
    pub fn new(sense: Sense) -> Self {
        LinearModel {
            id: NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed),
            revision: 0,
            sense,
            vars: Vec::new(),
            rows: Vec::new(),
            var_names: HashMap::new(),
            row_names: HashMap::new(),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Bumped on every change that is not a pure append.
    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn sense(&self) -> Sense {
        self.sense
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn var(&self, v: VarId) -> &Variable {
        &self.vars[v.0]
    }

    pub fn row(&self, r: RowId) -> &Constraint {
        &self.rows[r.0]
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.var_names.get(name).copied()
    }

    pub fn row_by_name(&self, name: &str) -> Option<RowId> {
        self.row_names.get(name).copied()
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(|v| v.kind == VarKind::Integer)
    }

    /// Adds a variable with no constraint entries.
    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
        kind: VarKind,
    ) -> Result<VarId, LpError> {
        self.add_column(name, lower, upper, cost, kind, &[])
    }

    /// Adds a variable together with its coefficients in existing rows.
    pub fn add_column(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
        kind: VarKind,
        entries: &[(RowId, f64)],
    ) -> Result<VarId, LpError> {
        let name = name.into();
        if self.var_names.contains_key(&name) {
            return Err(LpError::DuplicateColumn(name));
        }
        if lower > upper {
            return Err(LpError::InvalidBounds(name));
        }
        for &(r, _) in entries {
            if r.0 >= self.rows.len() {
                return Err(LpError::UnknownRow(r.0));
            }
        }
        let id = VarId(self.vars.len());
        let mut merged: Vec<(RowId, f64)> = Vec::with_capacity(entries.len());
        for &(r, c) in entries {
            if c == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(rr, _)| *rr == r) {
                Some(e) => e.1 += c,
                None => merged.push((r, c)),
            }
        }
        for &(r, c) in &merged {
            self.rows[r.0].entries.push((id, c));
        }
        self.var_names.insert(name.clone(), id);
        self.vars.push(Variable { name, lower, upper, cost, kind, entries: merged });
        Ok(id)
    }

    /// Adds `lower <= sum(coef * var) <= upper` over existing variables.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        entries: &[(VarId, f64)],
    ) -> Result<RowId, LpError> {
        let name = name.into();
        if self.row_names.contains_key(&name) {
            return Err(LpError::DuplicateRow(name));
        }
        if lower > upper {
            return Err(LpError::InvalidBounds(name));
        }
        for &(v, _) in entries {
            if v.0 >= self.vars.len() {
                return Err(LpError::UnknownVariable(v.0));
            }
        }
        let id = RowId(self.rows.len());
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(entries.len());
        for &(v, c) in entries {
            if c == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(vv, _)| *vv == v) {
                Some(e) => e.1 += c,
                None => merged.push((v, c)),
            }
        }
        for &(v, c) in &merged {
            self.vars[v.0].entries.push((id, c));
        }
        self.row_names.insert(name.clone(), id);
        self.rows.push(Constraint { name, lower, upper, entries: merged });
        Ok(id)
    }

    pub fn set_cost(&mut self, v: VarId, cost: f64) {
        if self.vars[v.0].cost != cost {
            self.vars[v.0].cost = cost;
            self.revision += 1;
        }
    }

    pub fn set_var_bounds(&mut self, v: VarId, lower: f64, upper: f64) {
        let var = &mut self.vars[v.0];
        if var.lower != lower || var.upper != upper {
            var.lower = lower;
            var.upper = upper;
            self.revision += 1;
        }
    }

    pub fn set_row_bounds(&mut self, r: RowId, lower: f64, upper: f64) {
        let row = &mut self.rows[r.0];
        if row.lower != lower || row.upper != upper {
            row.lower = lower;
            row.upper = upper;
            self.revision += 1;
        }
    }

    pub fn set_kind(&mut self, v: VarId, kind: VarKind) {
        if self.vars[v.0].kind != kind {
            self.vars[v.0].kind = kind;
            self.revision += 1;
        }
    }

    pub fn set_sense(&mut self, sense: Sense) {
        if self.sense != sense {
            self.sense = sense;
            self.revision += 1;
        }
    }

    /// Copy of the model with every integer variable relaxed to continuous.
    pub fn relaxed(&self) -> LinearModel {
        let mut m = self.clone();
        for v in &mut m.vars {
            v.kind = VarKind::Continuous;
        }
        m
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, xv)| v.cost * xv).sum()
    }

    pub fn row_activity(&self, r: RowId, x: &[f64]) -> f64 {
        self.rows[r.0].entries.iter().map(|&(v, c)| c * x[v.0]).sum()
    }

    /// Largest bound or row violation of `x`, and whether every integer
    /// variable is within `int_tol` of an integer.
    pub fn check_point(&self, x: &[f64], int_tol: f64) -> (f64, bool) {
        let mut viol: f64 = 0.0;
        let mut integral = true;
        for (v, &xv) in self.vars.iter().zip(x) {
            viol = viol.max(v.lower - xv).max(xv - v.upper);
            if v.kind == VarKind::Integer && (xv - xv.round()).abs() > int_tol {
                integral = false;
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            let act = self.row_activity(RowId(i), x);
            viol = viol.max(row.lower - act).max(act - row.upper);
        }
        (viol, integral)
    }

    /// CPLEX LP text format, for debugging.
    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        let name = |s: &str| -> String {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
                .collect()
        };
        let term = |out: &mut String, first: bool, c: f64, v: &str| {
            if first {
                let _ = write!(out, " {} {}", fmt_num(c), v);
            } else if c < 0.0 {
                let _ = write!(out, " - {} {}", fmt_num(-c), v);
            } else {
                let _ = write!(out, " + {} {}", fmt_num(c), v);
            }
        };
        out.push_str(match self.sense {
            Sense::Minimize => "Minimize\n obj:",
            Sense::Maximize => "Maximize\n obj:",
        });
        let mut first = true;
        for v in &self.vars {
            if v.cost != 0.0 {
                term(&mut out, first, v.cost, &name(&v.name));
                first = false;
            }
        }
        if first {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        for row in &self.rows {
            let mut lhs = String::new();
            let mut first = true;
            for &(v, c) in &row.entries {
                term(&mut lhs, first, c, &name(&self.vars[v.0].name));
                first = false;
            }
            if first {
                lhs.push_str(" 0 dummy");
            }
            let rn = name(&row.name);
            if row.lower == row.upper {
                let _ = writeln!(out, " {rn}:{lhs} = {}", fmt_num(row.lower));
            } else {
                if row.lower.is_finite() {
                    let _ = writeln!(out, " {rn}_lo:{lhs} >= {}", fmt_num(row.lower));
                }
                if row.upper.is_finite() {
                    let _ = writeln!(out, " {rn}_up:{lhs} <= {}", fmt_num(row.upper));
                }
            }
        }
        out.push_str("Bounds\n");
        for v in &self.vars {
            let vn = name(&v.name);
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (true, true) => {
                    let _ = writeln!(out, " {} <= {vn} <= {}", fmt_num(v.lower), fmt_num(v.upper));
                }
                (true, false) => {
                    let _ = writeln!(out, " {vn} >= {}", fmt_num(v.lower));
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {vn} <= {}", fmt_num(v.upper));
                }
                (false, false) => {
                    let _ = writeln!(out, " {vn} free");
                }
            }
        }
        let ints: Vec<String> = self
            .vars
            .iter()
            .filter(|v| v.kind == VarKind::Integer)
            .map(|v| name(&v.name))
            .collect();
        if !ints.is_empty() {
            out.push_str("General\n");
            for n in ints {
                let _ = writeln!(out, " {n}");
            }
        }
        out.push_str("End\n");
        out
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
