//! Dense two-phase tableau simplex with Bland's rule, used only as a test oracle.
//! Solves `min c·x` subject to `rows` and `x >= 0`.

#![allow(dead_code)]

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Oracle {
    Optimal(f64, Vec<f64>),
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-10;

struct Tableau {
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let prow = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&prow) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[r] = c;
    }

    /// Runs Bland's rule on the last row (reduced costs). Returns false if unbounded.
    fn run(&mut self, allowed: &dyn Fn(usize) -> bool) -> bool {
        let m = self.basis.len();
        loop {
            let obj = &self.t[m];
            let Some(c) = (0..self.width).find(|&j| allowed(j) && obj[j] < -EPS) else {
                return true;
            };
            let mut best: Option<(f64, usize, usize)> = None;
            for i in 0..m {
                let a = self.t[i][c];
                if a > EPS {
                    let ratio = self.t[i][self.width] / a;
                    let better = match best {
                        None => true,
                        Some((br, _, bb)) => {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < bb)
                        }
                    };
                    if better {
                        best = Some((ratio, i, self.basis[i]));
                    }
                }
            }
            match best {
                None => return false,
                Some((_, r, _)) => self.pivot(r, c),
            }
        }
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let m = self.basis.len();
        let mut row = cost.to_vec();
        row.push(0.0);
        for i in 0..m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (v, a) in row.iter_mut().zip(&self.t[i]) {
                    *v -= cb * a;
                }
            }
        }
        self.t[m] = row;
    }
}

pub fn solve(c: &[f64], rows: &[(Vec<f64>, Rel, f64)]) -> Oracle {
    let n = c.len();
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != Rel::Eq).count();
    let n_art = m;
    let width = n + n_slack + n_art;
    let mut t = vec![vec![0.0; width + 1]; m + 1];
    let mut basis = vec![0; m];
    let mut slack = n;
    for (i, (a, rel, b)) in rows.iter().enumerate() {
        let flip = *b < 0.0;
        let s = if flip { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i][j] = s * a[j];
        }
        t[i][width] = s * b;
        if *rel != Rel::Eq {
            t[i][slack] = if *rel == Rel::Le { s } else { -s };
            slack += 1;
        }
        t[i][n + n_slack + i] = 1.0;
        basis[i] = n + n_slack + i;
    }
    let mut tab = Tableau { t, basis, width };
    let mut phase1 = vec![0.0; width];
    for k in 0..n_art {
        phase1[n + n_slack + k] = 1.0;
    }
    tab.set_costs(&phase1);
    tab.run(&|_| true);
    if -tab.t[m][width] > 1e-8 {
        return Oracle::Infeasible;
    }
    let art = n + n_slack;
    for i in 0..m {
        if tab.basis[i] >= art {
            if let Some(j) = (0..art).find(|&j| tab.t[i][j].abs() > 1e-9) {
                tab.pivot(i, j);
            }
        }
    }
    let mut cost = c.to_vec();
    cost.resize(width, 0.0);
    tab.set_costs(&cost);
    if !tab.run(&|j| j < art) {
        return Oracle::Unbounded;
    }
    let mut x = vec![0.0; n];
    for i in 0..m {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.t[i][width];
        }
    }
    let obj = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Oracle::Optimal(obj, x)
}
