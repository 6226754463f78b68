//! Sparse LU factorisation of a simplex basis with product-form updates.
//!
//! The basis is addressed by *position* (the slot a basic column occupies)
//! on the column side and by constraint row on the row side. Factorisation
//! eliminates column singletons, then row singletons, then falls back to a
//! Markowitz choice with threshold pivoting. Basis changes are appended as
//! eta columns until the next refactorisation.

const THRESHOLD: f64 = 0.1;
const ABS_PIVOT: f64 = 1e-11;
const ZERO: f64 = 1e-14;
const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Eta {
    r: usize,
    pivot: f64,
    col: Vec<(usize, f64)>,
}

/// Positions that could not be pivoted and rows left without a pivot.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Lu {
    m: usize,
    piv_row: Vec<usize>,
    piv_pos: Vec<usize>,
    l_cols: Vec<Vec<(usize, f64)>>,
    u_rows: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
    etas: Vec<Eta>,
}

impl Lu {
    /// Factorises the `m x m` matrix whose column at position `p` is `cols[p]`
    /// (a list of `(row, value)`).
    pub(crate) fn factor(m: usize, cols: &[Vec<(usize, f64)>]) -> Result<Lu, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut col_vals: Vec<Vec<(usize, f64)>> = cols
            .iter()
            .map(|c| c.iter().copied().filter(|&(_, v)| v.abs() > ZERO).collect())
            .collect();
        let mut row_pos: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut row_count = vec![0usize; m];
        for (p, c) in col_vals.iter().enumerate() {
            for &(i, _) in c {
                row_pos[i].push(p);
                row_count[i] += 1;
            }
        }
        let mut col_active = vec![true; m];
        let mut row_active = vec![true; m];
        let mut loc = vec![NONE; m];
        let mut lu = Lu {
            m,
            piv_row: Vec::with_capacity(m),
            piv_pos: Vec::with_capacity(m),
            l_cols: Vec::with_capacity(m),
            u_rows: Vec::with_capacity(m),
            u_diag: Vec::with_capacity(m),
            etas: Vec::new(),
        };

        for _ in 0..m {
            let Some((pi, pj)) = choose_pivot(&col_vals, &col_active, &row_pos, &row_count, &row_active) else {
                let positions = (0..m).filter(|&p| col_active[p]).collect();
                let rows = (0..m).filter(|&i| row_active[i]).collect();
                return Err(Singular { positions, rows });
            };
            let pv = col_vals[pj].iter().find(|&&(i, _)| i == pi).map(|&(_, v)| v).unwrap_or(0.0);
            let lcol: Vec<(usize, f64)> = col_vals[pj].iter().filter(|&&(i, _)| i != pi).map(|&(i, v)| (i, v / pv)).collect();
            for &(i, _) in &col_vals[pj] {
                row_count[i] -= 1;
            }
            col_active[pj] = false;
            row_active[pi] = false;

            let mut urow = Vec::new();
            let cand = std::mem::take(&mut row_pos[pi]);
            for &q in &cand {
                if !col_active[q] {
                    continue;
                }
                let col = &mut col_vals[q];
                let Some(k) = col.iter().position(|&(i, _)| i == pi) else { continue };
                let (_, u) = col.swap_remove(k);
                urow.push((q, u));
                if lcol.is_empty() {
                    continue;
                }
                for (k, &(i, _)) in col.iter().enumerate() {
                    loc[i] = k;
                }
                for &(i, l) in &lcol {
                    let delta = -l * u;
                    if loc[i] != NONE {
                        col[loc[i]].1 += delta;
                    } else {
                        loc[i] = col.len();
                        col.push((i, delta));
                        row_pos[i].push(q);
                        row_count[i] += 1;
                    }
                }
                for &(i, _) in col.iter() {
                    loc[i] = NONE;
                }
                col.retain(|&(i, v)| {
                    if v.abs() > ZERO {
                        true
                    } else {
                        row_count[i] -= 1;
                        false
                    }
                });
            }
            lu.piv_row.push(pi);
            lu.piv_pos.push(pj);
            lu.l_cols.push(lcol);
            lu.u_rows.push(urow);
            lu.u_diag.push(pv);
        }
        Ok(lu)
    }

    pub(crate) fn num_updates(&self) -> usize {
        self.etas.len()
    }

    /// Records that position `r` now holds the column whose FTRAN is `alpha`.
    pub(crate) fn update(&mut self, r: usize, alpha: &[f64]) {
        let col = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &v)| i != r && v.abs() > ZERO)
            .map(|(i, &v)| (i, v))
            .collect();
        self.etas.push(Eta { r, pivot: alpha[r], col });
    }

    /// Solves `B z = a`. `a` is indexed by row and is consumed; `z` by position.
    pub(crate) fn ftran(&self, a: &mut [f64], z: &mut [f64]) {
        for k in 0..self.m {
            let v = a[self.piv_row[k]];
            if v != 0.0 {
                for &(i, l) in &self.l_cols[k] {
                    a[i] -= l * v;
                }
            }
        }
        for k in (0..self.m).rev() {
            let mut s = a[self.piv_row[k]];
            for &(p, u) in &self.u_rows[k] {
                s -= u * z[p];
            }
            z[self.piv_pos[k]] = s / self.u_diag[k];
        }
        for e in &self.etas {
            let zr = z[e.r] / e.pivot;
            z[e.r] = zr;
            if zr != 0.0 {
                for &(i, a) in &e.col {
                    z[i] -= a * zr;
                }
            }
        }
    }

    /// Solves `y^T B = c^T`. `c` is indexed by position and is consumed; `y` by row.
    pub(crate) fn btran(&self, c: &mut [f64], y: &mut [f64]) {
        for e in self.etas.iter().rev() {
            let mut s = c[e.r];
            for &(i, a) in &e.col {
                s -= a * c[i];
            }
            c[e.r] = s / e.pivot;
        }
        for k in 0..self.m {
            let v = c[self.piv_pos[k]] / self.u_diag[k];
            y[self.piv_row[k]] = v;
            if v != 0.0 {
                for &(p, u) in &self.u_rows[k] {
                    c[p] -= v * u;
                }
            }
        }
        for k in (0..self.m).rev() {
            let mut s = 0.0;
            for &(i, l) in &self.l_cols[k] {
                s += l * y[i];
            }
            y[self.piv_row[k]] -= s;
        }
    }
}

fn choose_pivot(
    col_vals: &[Vec<(usize, f64)>],
    col_active: &[bool],
    row_pos: &[Vec<usize>],
    row_count: &[usize],
    row_active: &[bool],
) -> Option<(usize, usize)> {
    let m = col_vals.len();
    let col_max = |q: usize| col_vals[q].iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));

    // column singletons, shortest columns first
    let mut min_len = usize::MAX;
    for q in 0..m {
        if col_active[q] {
            let len = col_vals[q].len();
            if len == 1 && col_vals[q][0].1.abs() > ABS_PIVOT {
                return Some((col_vals[q][0].0, q));
            }
            min_len = min_len.min(len);
        }
    }
    if min_len == 0 || min_len == usize::MAX {
        return None;
    }

    // row singletons with an acceptable pivot
    for i in 0..m {
        if !row_active[i] || row_count[i] != 1 {
            continue;
        }
        for &q in &row_pos[i] {
            if !col_active[q] {
                continue;
            }
            if let Some(&(_, v)) = col_vals[q].iter().find(|&&(r, _)| r == i) {
                if v.abs() > ABS_PIVOT && v.abs() >= THRESHOLD * col_max(q) {
                    return Some((i, q));
                }
            }
        }
    }

    // Markowitz over a few of the shortest columns
    let mut order: Vec<usize> = (0..m).filter(|&q| col_active[q]).collect();
    order.sort_by_key(|&q| (col_vals[q].len(), q));
    let mut best: Option<(usize, usize)> = None;
    let mut best_cost = usize::MAX;
    let mut best_abs = 0.0;
    let mut searched = 0;
    for &q in &order {
        let cmax = col_max(q);
        if cmax <= ABS_PIVOT {
            continue;
        }
        searched += 1;
        let cl = col_vals[q].len() - 1;
        for &(i, v) in &col_vals[q] {
            if v.abs() < THRESHOLD * cmax {
                continue;
            }
            let cost = (row_count[i] - 1) * cl;
            if cost < best_cost || (cost == best_cost && v.abs() > best_abs) {
                best_cost = cost;
                best_abs = v.abs();
                best = Some((i, q));
            }
        }
        if searched >= 4 && best.is_some() {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_to_cols(a: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m)
            .map(|j| (0..m).filter(|&i| a[i][j] != 0.0).map(|i| (i, a[i][j])).collect())
            .collect()
    }

    fn mul(a: &[Vec<f64>], z: &[f64]) -> Vec<f64> {
        a.iter().map(|r| r.iter().zip(z).map(|(x, y)| x * y).sum()).collect()
    }

    #[test]
    fn solves_and_transposes() {
        let a = vec![
            vec![4.0, 0.0, 1.0, 0.0],
            vec![1.0, 3.0, 0.0, 0.0],
            vec![0.0, 2.0, 5.0, 1.0],
            vec![0.0, 0.0, 1.0, 2.0],
        ];
        let lu = Lu::factor(4, &dense_to_cols(&a)).unwrap();
        let b = vec![1.0, 2.0, 3.0, 4.0];
        let mut rhs = b.clone();
        let mut z = vec![0.0; 4];
        lu.ftran(&mut rhs, &mut z);
        for (x, y) in mul(&a, &z).iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut c = b.clone();
        let mut y = vec![0.0; 4];
        lu.btran(&mut c, &mut y);
        for j in 0..4 {
            let s: f64 = (0..4).map(|i| y[i] * a[i][j]).sum();
            assert!((s - b[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn eta_updates_track_column_replacement() {
        let mut a = vec![vec![2.0, 1.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 3.0]];
        let mut lu = Lu::factor(3, &dense_to_cols(&a)).unwrap();
        let newcol = [1.0, 4.0, 2.0];
        let mut rhs = newcol.to_vec();
        let mut alpha = vec![0.0; 3];
        lu.ftran(&mut rhs, &mut alpha);
        lu.update(1, &alpha);
        for i in 0..3 {
            a[i][1] = newcol[i];
        }
        let b = vec![3.0, -1.0, 2.0];
        let mut rhs = b.clone();
        let mut z = vec![0.0; 3];
        lu.ftran(&mut rhs, &mut z);
        for (x, y) in mul(&a, &z).iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        let mut c = b.clone();
        let mut y = vec![0.0; 3];
        lu.btran(&mut c, &mut y);
        for j in 0..3 {
            let s: f64 = (0..3).map(|i| y[i] * a[i][j]).sum();
            assert!((s - b[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn reports_singular_positions() {
        let a = vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 1.0]];
        let err = Lu::factor(3, &dense_to_cols(&a)).unwrap_err();
        assert_eq!(err.positions.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }
}
