//! Sparse LU factorization of simplex bases with product-form updates.
//!
//! The factorization is right-looking Gaussian elimination. Pivots are chosen
//! by the Markowitz criterion `(r - 1)(c - 1)` subject to a threshold test on
//! the pivot magnitude, with column and row singletons taken first. Basis
//! changes after factorization are appended as eta columns.

const DROP_TOL: f64 = 1e-14;
const PIVOT_THRESHOLD: f64 = 0.01;
const SINGULAR_TOL: f64 = 1e-11;

/// Result of a failed factorization: basis slots that could not be pivoted and
/// the rows left without a pivot. The caller replaces those slots with the
/// logical columns of the listed rows.
#[derive(Debug)]
pub struct Singular {
    pub slots: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Clone, Debug)]
struct Eta {
    slot: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, Default)]
pub struct BasisFactor {
    pivot_row: Vec<usize>,
    pivot_slot: Vec<usize>,
    l_cols: Vec<Vec<(usize, f64)>>,
    u_rows: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
    work: Vec<f64>,
}

impl BasisFactor {
    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Factorizes the `m x m` matrix whose slot `s` column is `cols[s]` (as `(row, value)`).
    pub fn factorize(m: usize, cols: &[Vec<(usize, f64)>]) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (s, col) in cols.iter().enumerate() {
            for &(i, v) in col {
                if v.abs() > DROP_TOL {
                    rows[i].push((s, v));
                    col_rows[s].push(i);
                }
            }
        }
        let mut col_count: Vec<usize> = col_rows.iter().map(Vec::len).collect();
        let mut row_active = vec![true; m];
        let mut col_active = vec![true; m];

        let mut f = BasisFactor {
            work: vec![0.0; m],
            ..Default::default()
        };
        let mut col_singletons: Vec<usize> = (0..m).filter(|&s| col_count[s] == 1).collect();
        let mut row_singletons: Vec<usize> = (0..m).filter(|&i| rows[i].len() == 1).collect();
        // position of slot in the row currently being updated
        let mut pos = vec![usize::MAX; m];

        for _step in 0..m {
            let mut choice: Option<(usize, usize)> = None;

            while let Some(s) = col_singletons.pop() {
                if !col_active[s] || col_count[s] != 1 {
                    continue;
                }
                let i = col_rows[s]
                    .iter()
                    .copied()
                    .find(|&i| row_active[i] && rows[i].iter().any(|&(c, _)| c == s));
                if let Some(i) = i {
                    let v = row_value(&rows[i], s);
                    if v.abs() > SINGULAR_TOL {
                        choice = Some((i, s));
                        break;
                    }
                }
            }

            if choice.is_none() {
                while let Some(i) = row_singletons.pop() {
                    if !row_active[i] || rows[i].len() != 1 {
                        continue;
                    }
                    let (s, v) = rows[i][0];
                    let colmax = col_max(&rows, &col_rows[s], &row_active, s);
                    if v.abs() > SINGULAR_TOL && v.abs() >= PIVOT_THRESHOLD * colmax {
                        choice = Some((i, s));
                        break;
                    }
                }
            }

            if choice.is_none() {
                choice = markowitz_search(&rows, &col_rows, &col_count, &row_active, &col_active);
            }

            let Some((p, q)) = choice else {
                let slots = (0..m).filter(|&s| col_active[s]).collect();
                let rows_left = (0..m).filter(|&i| row_active[i]).collect();
                return Err(Singular {
                    slots,
                    rows: rows_left,
                });
            };

            let pivot = row_value(&rows[p], q);
            let prow = std::mem::take(&mut rows[p]);
            row_active[p] = false;
            col_active[q] = false;
            for &(j, _) in &prow {
                col_count[j] -= 1;
                if col_active[j] && col_count[j] == 1 {
                    col_singletons.push(j);
                }
            }

            let mut lcol = Vec::new();
            let targets: Vec<usize> = col_rows[q]
                .iter()
                .copied()
                .filter(|&i| row_active[i])
                .collect();
            for i in targets {
                let Some(k) = rows[i].iter().position(|&(c, _)| c == q) else {
                    continue;
                };
                let a_iq = rows[i][k].1;
                rows[i].swap_remove(k);
                let l = a_iq / pivot;
                lcol.push((i, l));
                for (idx, &(c, _)) in rows[i].iter().enumerate() {
                    pos[c] = idx;
                }
                for &(j, v) in &prow {
                    if j == q {
                        continue;
                    }
                    let delta = -l * v;
                    if pos[j] != usize::MAX {
                        rows[i][pos[j]].1 += delta;
                    } else {
                        pos[j] = rows[i].len();
                        rows[i].push((j, delta));
                        col_rows[j].push(i);
                        col_count[j] += 1;
                    }
                }
                for &(c, _) in rows[i].iter() {
                    pos[c] = usize::MAX;
                }
                let mut dropped = Vec::new();
                rows[i].retain(|&(c, v)| {
                    let keep = v.abs() > DROP_TOL;
                    if !keep {
                        dropped.push(c);
                    }
                    keep
                });
                for c in dropped {
                    col_count[c] -= 1;
                    if col_active[c] && col_count[c] == 1 {
                        col_singletons.push(c);
                    }
                }
                if rows[i].len() == 1 {
                    row_singletons.push(i);
                }
            }

            f.pivot_row.push(p);
            f.pivot_slot.push(q);
            f.l_cols.push(lcol);
            f.u_diag.push(pivot);
            f.u_rows
                .push(prow.into_iter().filter(|&(j, _)| j != q).collect());
        }
        Ok(f)
    }

    /// Solves `B x = b` in place: `b` is indexed by row on entry and by slot on exit.
    pub fn ftran(&mut self, b: &mut [f64]) {
        for k in 0..self.pivot_row.len() {
            let bp = b[self.pivot_row[k]];
            if bp != 0.0 {
                for &(i, l) in &self.l_cols[k] {
                    b[i] -= l * bp;
                }
            }
        }
        let x = &mut self.work;
        for k in (0..self.pivot_row.len()).rev() {
            let mut sum = b[self.pivot_row[k]];
            for &(j, v) in &self.u_rows[k] {
                sum -= v * x[j];
            }
            x[self.pivot_slot[k]] = sum / self.u_diag[k];
        }
        b.copy_from_slice(x);
        for eta in &self.etas {
            let xr = b[eta.slot] / eta.pivot;
            b[eta.slot] = xr;
            if xr != 0.0 {
                for &(i, a) in &eta.entries {
                    b[i] -= a * xr;
                }
            }
        }
    }

    /// Solves `B^T y = c` in place: `c` is indexed by slot on entry and by row on exit.
    pub fn btran(&mut self, c: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut sum = c[eta.slot];
            for &(i, a) in &eta.entries {
                sum -= a * c[i];
            }
            c[eta.slot] = sum / eta.pivot;
        }
        let w = &mut self.work;
        for k in 0..self.pivot_row.len() {
            let wp = c[self.pivot_slot[k]] / self.u_diag[k];
            w[self.pivot_row[k]] = wp;
            if wp != 0.0 {
                for &(j, v) in &self.u_rows[k] {
                    c[j] -= v * wp;
                }
            }
        }
        for k in (0..self.pivot_row.len()).rev() {
            let mut sum = 0.0;
            for &(i, l) in &self.l_cols[k] {
                sum += l * w[i];
            }
            if sum != 0.0 {
                w[self.pivot_row[k]] -= sum;
            }
        }
        c.copy_from_slice(w);
    }

    /// Records the replacement of the column in `slot` by a column whose
    /// representation in the current basis is `alpha` (indexed by slot).
    pub fn update(&mut self, slot: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != slot && a.abs() > DROP_TOL)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            slot,
            pivot: alpha[slot],
            entries,
        });
    }
}

fn row_value(row: &[(usize, f64)], s: usize) -> f64 {
    row.iter().find(|&&(c, _)| c == s).map_or(0.0, |&(_, v)| v)
}

fn col_max(rows: &[Vec<(usize, f64)>], col_rows: &[usize], row_active: &[bool], s: usize) -> f64 {
    col_rows
        .iter()
        .filter(|&&i| row_active[i])
        .map(|&i| row_value(&rows[i], s).abs())
        .fold(0.0, f64::max)
}

fn markowitz_search(
    rows: &[Vec<(usize, f64)>],
    col_rows: &[Vec<usize>],
    col_count: &[usize],
    row_active: &[bool],
    col_active: &[bool],
) -> Option<(usize, usize)> {
    let mut cols: Vec<usize> = (0..col_count.len())
        .filter(|&s| col_active[s] && col_count[s] > 0)
        .collect();
    cols.sort_by_key(|&s| (col_count[s], s));
    let mut best: Option<(usize, usize, usize, f64)> = None;
    let mut examined = 0;
    for &s in &cols {
        let cc = col_count[s];
        if let Some((_, _, cost, _)) = best {
            if cost == 0 || (cc - 1) * (cc - 1) > cost && examined >= 4 {
                break;
            }
        }
        let mut entries: Vec<(usize, f64)> = col_rows[s]
            .iter()
            .filter(|&&i| row_active[i])
            .map(|&i| (i, row_value(&rows[i], s)))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        entries.sort_by_key(|&(i, _)| i);
        entries.dedup_by_key(|e| e.0);
        let cmax = entries.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max);
        if cmax <= SINGULAR_TOL {
            continue;
        }
        examined += 1;
        for (i, v) in entries {
            if v.abs() < PIVOT_THRESHOLD * cmax {
                continue;
            }
            let cost = (rows[i].len() - 1) * (cc - 1);
            let better = match best {
                None => true,
                Some((_, _, bc, bv)) => cost < bc || (cost == bc && v.abs() > bv),
            };
            if better {
                best = Some((i, s, cost, v.abs()));
            }
        }
    }
    best.map(|(i, s, _, _)| (i, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_cols(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m)
            .map(|j| {
                (0..m)
                    .filter(|&i| a[i][j] != 0.0)
                    .map(|i| (i, a[i][j]))
                    .collect()
            })
            .collect()
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|r| r.iter().zip(x).map(|(p, q)| p * q).sum())
            .collect()
    }

    #[test]
    fn solves_small_systems_both_ways() {
        let a = vec![
            vec![2.0, 0.0, 1.0, 0.0],
            vec![0.0, 3.0, 0.0, 1.0],
            vec![4.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 5.0, 2.0],
        ];
        let mut f = BasisFactor::factorize(4, &dense_cols(&a)).unwrap();
        let x_true = [1.0, -2.0, 0.5, 3.0];
        let mut b = matvec(&a, &x_true);
        f.ftran(&mut b);
        for (x, t) in b.iter().zip(&x_true) {
            assert!((x - t).abs() < 1e-12);
        }
        // B^T y = c
        let at: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| a[j][i]).collect()).collect();
        let mut c = matvec(&at, &x_true);
        f.btran(&mut c);
        for (x, t) in c.iter().zip(&x_true) {
            assert!((x - t).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singular_slots() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        let err = BasisFactor::factorize(2, &dense_cols(&a)).unwrap_err();
        assert_eq!(err.slots.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }

    #[test]
    fn eta_updates_track_column_replacement() {
        let mut a = vec![
            vec![1.0, 2.0, 0.0],
            vec![0.0, 1.0, 3.0],
            vec![1.0, 0.0, 1.0],
        ];
        let mut f = BasisFactor::factorize(3, &dense_cols(&a)).unwrap();
        let new_col = [4.0, -1.0, 2.0];
        let mut alpha = new_col.to_vec();
        f.ftran(&mut alpha);
        f.update(1, &alpha);
        for i in 0..3 {
            a[i][1] = new_col[i];
        }
        let x_true = [0.3, -1.0, 2.0];
        let mut b = matvec(&a, &x_true);
        f.ftran(&mut b);
        for (x, t) in b.iter().zip(&x_true) {
            assert!((x - t).abs() < 1e-12, "{b:?}");
        }
        let at: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| a[j][i]).collect()).collect();
        let mut c = matvec(&at, &x_true);
        f.btran(&mut c);
        for (x, t) in c.iter().zip(&x_true) {
            assert!((x - t).abs() < 1e-12);
        }
    }
}
