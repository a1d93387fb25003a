//! Solver-agnostic representation of a mixed-integer linear program.
//!
//! A [`MilpModel`] always minimizes `c·x + offset` subject to linear rows and
//! simple variable bounds. Row and variable names double as metadata tags and
//! must be unique within a model.

use std::collections::HashSet;
use std::fmt;

use crate::error::ModelError;

/// Index of a variable inside a [`MilpModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub usize);

/// Index of a constraint row inside a [`MilpModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sense::Le => write!(f, "<="),
            Sense::Ge => write!(f, ">="),
            Sense::Eq => write!(f, "="),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(Var, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates this row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            Sense::Le => (act - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - act).max(0.0),
            Sense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// Largest violations of a candidate point, split by kind.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Violation {
    pub row: f64,
    pub bound: f64,
    pub integrality: f64,
}

impl Violation {
    pub fn max(&self) -> f64 {
        self.row.max(self.bound).max(self.integrality)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MilpModel {
    pub name: String,
    vars: Vec<Variable>,
    rows: Vec<Constraint>,
    objective: Vec<f64>,
    offset: f64,
    names: HashSet<String>,
}

impl MilpModel {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
    ) -> Var {
        let name = name.into();
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        debug_assert!(
            self.names.insert(format!("c:{name}")),
            "duplicate variable name {name}"
        );
        self.vars.push(Variable {
            name,
            kind,
            lower,
            upper,
        });
        self.objective.push(0.0);
        Var(self.vars.len() - 1)
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Var {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> Var {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn integer(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> Var {
        self.add_var(name, VarKind::Integer, lower, upper)
    }

    /// Adds a row, merging duplicate variables and dropping exact zeros.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (Var, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> RowId {
        let name = name.into();
        let mut coeffs: Vec<(Var, f64)> = terms.into_iter().collect();
        coeffs.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(Var, f64)> = Vec::with_capacity(coeffs.len());
        for (v, a) in coeffs {
            match merged.last_mut() {
                Some((w, b)) if *w == v => *b += a,
                _ => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        debug_assert!(
            self.names.insert(format!("r:{name}")),
            "duplicate row name {name}"
        );
        self.rows.push(Constraint {
            name,
            coeffs: merged,
            sense,
            rhs,
        });
        RowId(self.rows.len() - 1)
    }

    pub fn set_objective(&mut self, var: Var, coeff: f64) {
        self.objective[var.0] = coeff;
    }

    pub fn add_objective(&mut self, var: Var, coeff: f64) {
        self.objective[var.0] += coeff;
    }

    pub fn set_objective_offset(&mut self, offset: f64) {
        self.offset = offset;
    }

    pub fn objective_offset(&self) -> f64 {
        self.offset
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_mut(&mut self) -> &mut [f64] {
        &mut self.objective
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, v: Var) -> &Variable {
        &self.vars[v.0]
    }

    pub fn rows(&self) -> &[Constraint] {
        &self.rows
    }

    pub fn row(&self, r: RowId) -> &Constraint {
        &self.rows[r.0]
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.coeffs.len()).sum()
    }

    pub fn has_integers(&self) -> bool {
        self.vars.iter().any(|v| v.kind.is_integral())
    }

    pub fn set_bounds(&mut self, var: Var, lower: f64, upper: f64) {
        let v = &mut self.vars[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn set_kind(&mut self, var: Var, kind: VarKind) {
        self.vars[var.0].kind = kind;
    }

    pub fn set_rhs(&mut self, row: RowId, rhs: f64) {
        self.rows[row.0].rhs = rhs;
    }

    pub fn find_var(&self, name: &str) -> Option<Var> {
        self.vars.iter().position(|v| v.name == name).map(Var)
    }

    pub fn find_row(&self, name: &str) -> Option<RowId> {
        self.rows.iter().position(|r| r.name == name).map(RowId)
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.offset
            + self
                .objective
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// Row, bound and integrality violations of `x`.
    pub fn violation(&self, x: &[f64]) -> Violation {
        let mut out = Violation::default();
        for r in &self.rows {
            out.row = out.row.max(r.violation(x));
        }
        for (v, &xv) in self.vars.iter().zip(x) {
            out.bound = out.bound.max((v.lower - xv).max(xv - v.upper).max(0.0));
            if v.kind.is_integral() {
                out.integrality = out.integrality.max((xv - xv.round()).abs());
            }
        }
        out
    }

    /// Copy of the model with every integral variable fixed to the rounded value in `x`
    /// and relaxed to continuous.
    pub fn with_integers_fixed(&self, x: &[f64]) -> MilpModel {
        let mut fixed = self.clone();
        for (j, v) in fixed.vars.iter_mut().enumerate() {
            if v.kind.is_integral() {
                let val = x[j].round().clamp(v.lower, v.upper);
                v.lower = val;
                v.upper = val;
                v.kind = VarKind::Continuous;
            }
        }
        fixed
    }

    /// Copy with all integrality requirements dropped.
    pub fn relaxed(&self) -> MilpModel {
        let mut relaxed = self.clone();
        for v in &mut relaxed.vars {
            v.kind = VarKind::Continuous;
        }
        relaxed
    }

    /// Copies every variable, row and objective term of `other` into `self`,
    /// prefixing names with `prefix`. Returns the new index of each variable of `other`.
    pub fn append(&mut self, other: &MilpModel, prefix: &str) -> Vec<Var> {
        let map: Vec<Var> = other
            .vars
            .iter()
            .map(|v| self.add_var(format!("{prefix}{}", v.name), v.kind, v.lower, v.upper))
            .collect();
        for (j, &c) in other.objective.iter().enumerate() {
            self.objective[map[j].0] += c;
        }
        self.offset += other.offset;
        for r in &other.rows {
            self.add_row(
                format!("{prefix}{}", r.name),
                r.coeffs.iter().map(|&(v, a)| (map[v.0], a)),
                r.sense,
                r.rhs,
            );
        }
        map
    }

    /// Column-major copy of the constraint matrix: for each variable the `(row, coeff)` list.
    pub fn columns(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.vars.len()];
        for (i, r) in self.rows.iter().enumerate() {
            for &(v, a) in &r.coeffs {
                cols[v.0].push((i, a));
            }
        }
        cols
    }

    /// Checks the structural invariants: finite coefficients, consistent bounds,
    /// unique names and no orphaned variables.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut seen = HashSet::with_capacity(self.vars.len());
        let mut referenced = vec![false; self.vars.len()];
        for (j, v) in self.vars.iter().enumerate() {
            if !seen.insert(v.name.as_str()) {
                return Err(ModelError::DuplicateName(v.name.clone()));
            }
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(ModelError::BadBounds(v.name.clone(), v.lower, v.upper));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(ModelError::BadBounds(v.name.clone(), v.lower, v.upper));
            }
            if !self.objective[j].is_finite() {
                return Err(ModelError::NonFinite(format!("objective of {}", v.name)));
            }
            if self.objective[j] != 0.0 {
                referenced[j] = true;
            }
        }
        let mut row_names = HashSet::with_capacity(self.rows.len());
        for r in &self.rows {
            if !row_names.insert(r.name.as_str()) {
                return Err(ModelError::DuplicateName(r.name.clone()));
            }
            if !r.rhs.is_finite() {
                return Err(ModelError::NonFinite(format!("rhs of {}", r.name)));
            }
            for &(v, a) in &r.coeffs {
                if v.0 >= self.vars.len() {
                    return Err(ModelError::UnknownVariable(r.name.clone(), v.0));
                }
                if !a.is_finite() {
                    return Err(ModelError::NonFinite(format!(
                        "{} in {}",
                        self.vars[v.0].name, r.name
                    )));
                }
                referenced[v.0] = true;
            }
        }
        if let Some(j) = referenced.iter().position(|&r| !r) {
            return Err(ModelError::Orphan(self.vars[j].name.clone()));
        }
        Ok(())
    }
}
