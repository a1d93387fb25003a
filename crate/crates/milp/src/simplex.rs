//! Bounded primal revised simplex.
//!
//! Rows are turned into equalities `A x - s = 0` with one logical `s_i` per row
//! whose bounds encode the row sense. The solver starts from the all-logical
//! basis (or a caller-provided one), minimizes the sum of infeasibilities with
//! a composite phase 1 and then the true objective. Pricing is Dantzig with a
//! Harris two-pass ratio test; after a run of degenerate pivots it switches to
//! Bland's rule until progress resumes.

use crate::lu::BasisFactor;
use crate::model::{MilpModel, Sense};

const REFACTOR_EVERY: usize = 64;
const BLAND_AFTER: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VarState {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Zero,
}

/// Final basis of a solve, usable as a warm start for a model with the same
/// rows and columns but possibly different bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct Basis {
    pub states: Vec<VarState>,
}

#[derive(Clone, Debug)]
pub struct LpOptions {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    pub max_iterations: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-7,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: 0,
        }
    }
}

/// Row duals follow the sensitivity convention `y_i = d objective / d rhs_i`, so
/// binding `<=` rows carry `y <= 0` and binding `>=` rows carry `y >= 0` in a
/// minimization. Reduced costs are `c_j - y·a_j`.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub basis: Option<Basis>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Objective of the dual read off the final basis: `b·y + Σ d_j x_j + offset`.
    pub fn dual_objective(&self, model: &MilpModel) -> f64 {
        let rows: f64 = model
            .rows()
            .iter()
            .zip(&self.row_duals)
            .map(|(r, y)| r.rhs * y)
            .sum();
        let bounds: f64 = self
            .reduced_costs
            .iter()
            .zip(&self.x)
            .map(|(d, x)| d * x)
            .sum();
        rows + bounds + model.objective_offset()
    }
}

/// Column-oriented copy of a model's LP relaxation.
#[derive(Clone, Debug)]
pub(crate) struct LpData {
    pub m: usize,
    pub n: usize,
    pub cols: Vec<Vec<(usize, f64)>>,
    pub cost: Vec<f64>,
    pub offset: f64,
    /// Bounds of structurals followed by logicals.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpData {
    pub fn from_model(model: &MilpModel) -> Self {
        let m = model.num_rows();
        let n = model.num_vars();
        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        for v in model.vars() {
            lower.push(v.lower);
            upper.push(v.upper);
        }
        for r in model.rows() {
            let (l, u) = match r.sense {
                Sense::Le => (f64::NEG_INFINITY, r.rhs),
                Sense::Ge => (r.rhs, f64::INFINITY),
                Sense::Eq => (r.rhs, r.rhs),
            };
            lower.push(l);
            upper.push(u);
        }
        Self {
            m,
            n,
            cols: model.columns(),
            cost: model.objective().to_vec(),
            offset: model.objective_offset(),
            lower,
            upper,
        }
    }
}

pub fn solve_lp(model: &MilpModel) -> LpSolution {
    solve_lp_with(model, &LpOptions::default(), None)
}

/// Solves the continuous relaxation of `model` (integrality is ignored).
pub fn solve_lp_with(model: &MilpModel, opts: &LpOptions, warm: Option<&Basis>) -> LpSolution {
    let data = LpData::from_model(model);
    solve_data(&data, &data.lower, &data.upper, opts, warm)
}

pub(crate) fn solve_data(
    data: &LpData,
    lower: &[f64],
    upper: &[f64],
    opts: &LpOptions,
    warm: Option<&Basis>,
) -> LpSolution {
    let mut s = Simplex::new(data, lower, upper, opts, warm);
    let status = s.run();
    s.finish(status)
}

struct Simplex<'a> {
    data: &'a LpData,
    lower: &'a [f64],
    upper: &'a [f64],
    opts: &'a LpOptions,
    cost: Vec<f64>,
    scale: f64,
    head: Vec<usize>,
    slot_of: Vec<usize>,
    state: Vec<VarState>,
    x: Vec<f64>,
    factor: BasisFactor,
    iterations: usize,
    y: Vec<f64>,
    alpha: Vec<f64>,
    cb: Vec<f64>,
}

impl<'a> Simplex<'a> {
    fn new(
        data: &'a LpData,
        lower: &'a [f64],
        upper: &'a [f64],
        opts: &'a LpOptions,
        warm: Option<&Basis>,
    ) -> Self {
        let (m, n) = (data.m, data.n);
        let total = n + m;
        let scale = data.cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        let mut cost: Vec<f64> = data.cost.iter().map(|c| c / scale).collect();
        cost.resize(total, 0.0);

        let mut state = vec![VarState::Lower; total];
        let mut head = Vec::with_capacity(m);
        let warm = warm.filter(|b| {
            b.states.len() == total
                && b.states.iter().filter(|&&s| s == VarState::Basic).count() == m
        });
        match warm {
            Some(b) => {
                for (j, &st) in b.states.iter().enumerate() {
                    if st == VarState::Basic {
                        head.push(j);
                        state[j] = VarState::Basic;
                    } else {
                        state[j] = nonbasic_state(st, lower[j], upper[j]);
                    }
                }
            }
            None => {
                for j in 0..n {
                    state[j] = nonbasic_state(VarState::Lower, lower[j], upper[j]);
                }
                for i in 0..m {
                    state[n + i] = VarState::Basic;
                    head.push(n + i);
                }
            }
        }
        let mut slot_of = vec![usize::MAX; total];
        for (s, &j) in head.iter().enumerate() {
            slot_of[j] = s;
        }
        let mut x = vec![0.0; total];
        for j in 0..total {
            x[j] = match state[j] {
                VarState::Lower => lower[j],
                VarState::Upper => upper[j],
                _ => 0.0,
            };
        }
        Self {
            data,
            lower,
            upper,
            opts,
            cost,
            scale,
            head,
            slot_of,
            state,
            x,
            factor: BasisFactor::default(),
            iterations: 0,
            y: vec![0.0; m],
            alpha: vec![0.0; m],
            cb: vec![0.0; m],
        }
    }

    fn column(&self, j: usize) -> ColIter<'_> {
        if j < self.data.n {
            ColIter::Struct(self.data.cols[j].iter())
        } else {
            ColIter::Logical(Some(j - self.data.n))
        }
    }

    fn dot_y(&self, j: usize) -> f64 {
        if j < self.data.n {
            self.data.cols[j].iter().map(|&(i, a)| a * self.y[i]).sum()
        } else {
            -self.y[j - self.data.n]
        }
    }

    fn refactor(&mut self) {
        let m = self.data.m;
        for _attempt in 0..=m {
            let cols: Vec<Vec<(usize, f64)>> = self
                .head
                .iter()
                .map(|&j| self.column(j).collect())
                .collect();
            match BasisFactor::factorize(m, &cols) {
                Ok(f) => {
                    self.factor = f;
                    self.compute_basics();
                    return;
                }
                Err(sing) => {
                    for (&slot, &row) in sing.slots.iter().zip(&sing.rows) {
                        let old = self.head[slot];
                        let logical = self.data.n + row;
                        if self.state[logical] == VarState::Basic {
                            continue;
                        }
                        let (l, u) = (self.lower[old], self.upper[old]);
                        let st = if l.is_finite()
                            && (!u.is_finite()
                                || (self.x[old] - l).abs() <= (u - self.x[old]).abs())
                        {
                            VarState::Lower
                        } else if u.is_finite() {
                            VarState::Upper
                        } else {
                            VarState::Zero
                        };
                        self.set_nonbasic(old, st);
                        self.slot_of[old] = usize::MAX;
                        self.head[slot] = logical;
                        self.state[logical] = VarState::Basic;
                        self.slot_of[logical] = slot;
                    }
                }
            }
        }
        panic!("basis repair did not converge");
    }

    fn set_nonbasic(&mut self, j: usize, st: VarState) {
        self.state[j] = st;
        self.x[j] = match st {
            VarState::Lower => self.lower[j],
            VarState::Upper => self.upper[j],
            _ => 0.0,
        };
    }

    fn compute_basics(&mut self) {
        let m = self.data.m;
        let mut rhs = vec![0.0; m];
        for j in 0..self.data.n + m {
            if self.state[j] != VarState::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (i, a) in self.column(j) {
                    rhs[i] -= a * xj;
                }
            }
        }
        self.factor.ftran(&mut rhs);
        for (s, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[s];
        }
    }

    fn run(&mut self) -> LpStatus {
        let (m, n) = (self.data.m, self.data.n);
        let total = n + m;
        let max_iter = if self.opts.max_iterations > 0 {
            self.opts.max_iterations
        } else {
            50_000 + 50 * total
        };
        let ftol = self.opts.feasibility_tol;
        let dtol = self.opts.optimality_tol;
        self.refactor();
        let mut degenerate = 0usize;
        let mut fresh = true;

        loop {
            if self.iterations >= max_iter {
                return LpStatus::IterationLimit;
            }
            if self.factor.num_updates() >= REFACTOR_EVERY {
                self.refactor();
                fresh = true;
            }

            let mut phase1 = false;
            for (s, &j) in self.head.iter().enumerate() {
                self.cb[s] = if self.x[j] < self.lower[j] - ftol {
                    phase1 = true;
                    -1.0
                } else if self.x[j] > self.upper[j] + ftol {
                    phase1 = true;
                    1.0
                } else {
                    0.0
                };
            }
            if !phase1 {
                for (s, &j) in self.head.iter().enumerate() {
                    self.cb[s] = self.cost[j];
                }
            }
            self.y.copy_from_slice(&self.cb);
            self.factor.btran(&mut self.y);

            let bland = degenerate > BLAND_AFTER;
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..total {
                let st = self.state[j];
                if st == VarState::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let cj = if phase1 { 0.0 } else { self.cost[j] };
                let dj = cj - self.dot_y(j);
                let eligible = match st {
                    VarState::Lower => dj < -dtol,
                    VarState::Upper => dj > dtol,
                    VarState::Zero => dj.abs() > dtol,
                    VarState::Basic => false,
                };
                if !eligible {
                    continue;
                }
                if bland {
                    entering = Some((j, dj));
                    break;
                }
                if entering.map_or(true, |(_, best)| dj.abs() > best.abs()) {
                    entering = Some((j, dj));
                }
            }

            let Some((q, dq)) = entering else {
                if !fresh {
                    self.refactor();
                    fresh = true;
                    continue;
                }
                return if phase1 {
                    LpStatus::Infeasible
                } else {
                    LpStatus::Optimal
                };
            };

            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            self.alpha.iter_mut().for_each(|a| *a = 0.0);
            for (i, a) in self.column(q).collect::<Vec<_>>() {
                self.alpha[i] = a;
            }
            self.factor.ftran(&mut self.alpha);

            let (step, leave) = self.ratio_test(dir, phase1, bland);
            let range = self.upper[q] - self.lower[q];
            let flip = range.is_finite() && step.map_or(true, |t| range <= t);
            let t = if flip {
                range
            } else if let Some(t) = step {
                t
            } else if !fresh {
                self.refactor();
                fresh = true;
                continue;
            } else if phase1 {
                // A ray that reduces infeasibility forever cannot exist; the
                // basis is numerically unusable.
                return LpStatus::IterationLimit;
            } else {
                return LpStatus::Unbounded;
            };
            self.iterations += 1;
            fresh = false;

            if t <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }

            self.x[q] += dir * t;
            for s in 0..m {
                let a = self.alpha[s];
                if a != 0.0 {
                    self.x[self.head[s]] -= dir * t * a;
                }
            }

            if flip {
                self.state[q] = if self.state[q] == VarState::Upper {
                    VarState::Lower
                } else {
                    VarState::Upper
                };
                self.x[q] = if self.state[q] == VarState::Upper {
                    self.upper[q]
                } else {
                    self.lower[q]
                };
                continue;
            }

            let (r, at_upper) = leave.expect("leaving row when step is finite");
            let jl = self.head[r];
            let st = if at_upper && self.lower[jl] != self.upper[jl] {
                VarState::Upper
            } else {
                VarState::Lower
            };
            self.set_nonbasic(jl, st);
            self.slot_of[jl] = usize::MAX;
            self.head[r] = q;
            self.slot_of[q] = r;
            self.state[q] = VarState::Basic;
            let alpha = std::mem::take(&mut self.alpha);
            self.factor.update(r, &alpha);
            self.alpha = alpha;
        }
    }

    /// Returns the step length and the leaving slot with the bound it leaves at.
    fn ratio_test(
        &self,
        dir: f64,
        phase1: bool,
        bland: bool,
    ) -> (Option<f64>, Option<(usize, bool)>) {
        let ftol = self.opts.feasibility_tol;
        let ptol = self.opts.pivot_tol;
        // candidates: (slot, rate magnitude, distance, leaves at upper)
        let mut cands: Vec<(usize, f64, f64, bool)> = Vec::new();
        for s in 0..self.data.m {
            let a = self.alpha[s];
            if a.abs() <= ptol {
                continue;
            }
            let j = self.head[s];
            let rate = -dir * a;
            let (xj, l, u) = (self.x[j], self.lower[j], self.upper[j]);
            if rate > 0.0 {
                if phase1 && xj < l - ftol {
                    cands.push((s, rate, l - xj, false));
                } else if xj > u + ftol || !u.is_finite() {
                    continue;
                } else {
                    cands.push((s, rate, u - xj, true));
                }
            } else if phase1 && xj > u + ftol {
                cands.push((s, -rate, xj - u, true));
            } else if xj < l - ftol || !l.is_finite() {
                continue;
            } else {
                cands.push((s, -rate, xj - l, false));
            }
        }
        if cands.is_empty() {
            return (None, None);
        }
        if bland {
            let mut best: Option<(f64, usize, usize, bool)> = None;
            for &(s, rate, dist, up) in &cands {
                let ratio = dist.max(0.0) / rate;
                let col = self.head[s];
                let better = match best {
                    None => true,
                    Some((br, _, bcol, _)) => {
                        ratio < br - 1e-12 || (ratio <= br + 1e-12 && col < bcol)
                    }
                };
                if better {
                    best = Some((ratio, s, col, up));
                }
            }
            let (ratio, s, _, up) = best.unwrap();
            return (Some(ratio), Some((s, up)));
        }
        let tmax = cands
            .iter()
            .map(|&(_, rate, dist, _)| (dist + ftol) / rate)
            .fold(f64::INFINITY, f64::min);
        let mut best: Option<(f64, usize, f64, bool)> = None;
        for &(s, rate, dist, up) in &cands {
            let ratio = dist / rate;
            if ratio <= tmax && best.map_or(true, |(br, _, _, _)| rate > br) {
                best = Some((rate, s, ratio, up));
            }
        }
        let (_, s, ratio, up) = best.unwrap();
        (Some(ratio.max(0.0)), Some((s, up)))
    }

    fn finish(mut self, status: LpStatus) -> LpSolution {
        let (m, n) = (self.data.m, self.data.n);
        let x: Vec<f64> = self.x[..n].to_vec();
        let objective = self.data.offset
            + self
                .data
                .cost
                .iter()
                .zip(&x)
                .map(|(c, v)| c * v)
                .sum::<f64>();
        let mut row_duals = vec![0.0; m];
        let mut reduced_costs = vec![0.0; n];
        if status == LpStatus::Optimal {
            for (s, &j) in self.head.iter().enumerate() {
                self.cb[s] = self.cost[j];
            }
            self.y.copy_from_slice(&self.cb);
            self.factor.btran(&mut self.y);
            for j in 0..n {
                if self.state[j] != VarState::Basic {
                    reduced_costs[j] = (self.cost[j] - self.dot_y(j)) * self.scale;
                }
            }
            for i in 0..m {
                row_duals[i] = self.y[i] * self.scale;
            }
        }
        let basis = (status != LpStatus::IterationLimit).then(|| Basis {
            states: self.state.clone(),
        });
        LpSolution {
            status,
            x,
            row_duals,
            reduced_costs,
            objective,
            iterations: self.iterations,
            basis,
        }
    }
}

fn nonbasic_state(wanted: VarState, l: f64, u: f64) -> VarState {
    match wanted {
        VarState::Upper if u.is_finite() => VarState::Upper,
        VarState::Lower | VarState::Upper | VarState::Zero | VarState::Basic => {
            if l.is_finite() {
                VarState::Lower
            } else if u.is_finite() {
                VarState::Upper
            } else {
                VarState::Zero
            }
        }
    }
}

enum ColIter<'a> {
    Struct(std::slice::Iter<'a, (usize, f64)>),
    Logical(Option<usize>),
}

impl Iterator for ColIter<'_> {
    type Item = (usize, f64);

    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColIter::Struct(it) => it.next().copied(),
            ColIter::Logical(i) => i.take().map(|i| (i, -1.0)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MilpModel;

    #[test]
    fn single_bound_row_has_unit_dual() {
        let mut m = MilpModel::new("t");
        let x = m.continuous("x", f64::NEG_INFINITY, f64::INFINITY);
        m.set_objective(x, 1.0);
        m.add_row("r", [(x, 1.0)], Sense::Ge, 3.0);
        let sol = solve_lp(&m);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-12);
        assert!((sol.row_duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut m = MilpModel::new("t");
        let x = m.continuous("x", 0.0, 1.0);
        m.add_row("r", [(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&m).status, LpStatus::Infeasible);

        let mut m = MilpModel::new("t");
        let x = m.continuous("x", 0.0, f64::INFINITY);
        let y = m.continuous("y", 0.0, f64::INFINITY);
        m.set_objective(x, -1.0);
        m.add_row("r", [(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        assert_eq!(solve_lp(&m).status, LpStatus::Unbounded);
    }

    #[test]
    fn bounded_variables_flip() {
        // max x + y with x,y in [0,1] and x + y <= 1.5
        let mut m = MilpModel::new("t");
        let x = m.continuous("x", 0.0, 1.0);
        let y = m.continuous("y", 0.0, 1.0);
        m.set_objective(x, -1.0);
        m.set_objective(y, -2.0);
        m.add_row("r", [(x, 1.0), (y, 1.0)], Sense::Le, 1.5);
        let sol = solve_lp(&m);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 2.5).abs() < 1e-12);
        assert!((sol.row_duals[0] + 1.0).abs() < 1e-12);
        assert!((sol.dual_objective(&m) - sol.objective).abs() < 1e-12);
    }
}
