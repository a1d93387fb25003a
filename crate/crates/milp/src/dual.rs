//! Mechanical LP duality.
//!
//! For `min c·x + k` subject to rows `a_i·x (<=|>=|=) b_i` and `l <= x <= u`
//! the dual is
//!
//! ```text
//! max  b·y + l·mu - u·nu + k
//! s.t. A^T y + mu - nu = c,   mu, nu >= 0,
//!      y_i <= 0 on <= rows, y_i >= 0 on >= rows, free on = rows
//! ```
//!
//! with `mu_j` present only for finite `l_j` and `nu_j` only for finite `u_j`.
//! The sign convention on `y` matches [`crate::LpSolution::row_duals`]. The dual
//! is returned as a minimization of the negated objective so it can be solved
//! with the same engine.

use crate::model::{MilpModel, RowId, Sense, Var};

#[derive(Clone, Debug)]
pub struct DualMap {
    /// Dual variable of each primal row.
    pub row_vars: Vec<Var>,
    /// Multiplier of each finite primal lower bound.
    pub lower_vars: Vec<Option<Var>>,
    /// Multiplier of each finite primal upper bound.
    pub upper_vars: Vec<Option<Var>>,
    /// Dual constraint row of each primal column.
    pub col_rows: Vec<RowId>,
}

impl DualMap {
    /// The dual objective value from the dual model's (negated) objective.
    pub fn dual_objective(&self, dual_model_objective: f64) -> f64 {
        -dual_model_objective
    }
}

/// Builds the dual LP of `primal`'s continuous relaxation.
pub fn dualize(primal: &MilpModel) -> (MilpModel, DualMap) {
    let mut dual = MilpModel::new(format!("{}_dual", primal.name));
    let mut row_vars = Vec::with_capacity(primal.num_rows());
    for r in primal.rows() {
        let (l, u) = match r.sense {
            Sense::Le => (f64::NEG_INFINITY, 0.0),
            Sense::Ge => (0.0, f64::INFINITY),
            Sense::Eq => (f64::NEG_INFINITY, f64::INFINITY),
        };
        let y = dual.continuous(format!("y[{}]", r.name), l, u);
        dual.set_objective(y, -r.rhs);
        row_vars.push(y);
    }
    let mut lower_vars = Vec::with_capacity(primal.num_vars());
    let mut upper_vars = Vec::with_capacity(primal.num_vars());
    for v in primal.vars() {
        let mu = v.lower.is_finite().then(|| {
            let mu = dual.continuous(format!("mu[{}]", v.name), 0.0, f64::INFINITY);
            dual.set_objective(mu, -v.lower);
            mu
        });
        let nu = v.upper.is_finite().then(|| {
            let nu = dual.continuous(format!("nu[{}]", v.name), 0.0, f64::INFINITY);
            dual.set_objective(nu, v.upper);
            nu
        });
        lower_vars.push(mu);
        upper_vars.push(nu);
    }
    let cols = primal.columns();
    let mut col_rows = Vec::with_capacity(primal.num_vars());
    for (j, v) in primal.vars().iter().enumerate() {
        let mut terms: Vec<(Var, f64)> = cols[j].iter().map(|&(i, a)| (row_vars[i], a)).collect();
        if let Some(mu) = lower_vars[j] {
            terms.push((mu, 1.0));
        }
        if let Some(nu) = upper_vars[j] {
            terms.push((nu, -1.0));
        }
        col_rows.push(dual.add_row(
            format!("dc[{}]", v.name),
            terms,
            Sense::Eq,
            primal.objective()[j],
        ));
    }
    dual.set_objective_offset(-primal.objective_offset());
    (
        dual,
        DualMap {
            row_vars,
            lower_vars,
            upper_vars,
            col_rows,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{solve_lp, LpStatus};

    #[test]
    fn dual_of_small_lp_matches_primal() {
        let mut p = MilpModel::new("p");
        let x = p.continuous("x", 0.0, 4.0);
        let y = p.continuous("y", 1.0, f64::INFINITY);
        p.set_objective(x, -3.0);
        p.set_objective(y, 2.0);
        p.add_row("a", [(x, 1.0), (y, -1.0)], Sense::Le, 2.0);
        p.add_row("b", [(x, 1.0), (y, 1.0)], Sense::Ge, 1.0);
        p.set_objective_offset(7.0);
        let ps = solve_lp(&p);
        let (d, map) = dualize(&p);
        let ds = solve_lp(&d);
        assert_eq!(ps.status, LpStatus::Optimal);
        assert_eq!(ds.status, LpStatus::Optimal);
        assert!((ps.objective - map.dual_objective(ds.objective)).abs() < 1e-9);
        for (i, &yv) in map.row_vars.iter().enumerate() {
            assert!((ds.x[yv.0] - ps.row_duals[i]).abs() < 1e-9);
        }
    }
}
