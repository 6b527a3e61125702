//! Sparse LU factorization of the simplex basis with product-form updates.

/// Entries smaller than this are rejected as pivots.
const PIVOT_TOL: f64 = 1e-13;
/// Threshold for partial pivoting: a pivot must be at least this fraction of
/// the largest entry in its column.
const THRESHOLD: f64 = 0.1;
/// Columns examined per Markowitz search.
const SEARCH_COLS: usize = 8;

#[derive(Debug)]
pub(crate) struct Singular;

/// Elementary update `x_r ← x_r / α_r`, `x_i ← x_i − α_i x_r'`.
#[derive(Debug, Clone)]
struct Eta {
    r: usize,
    pivot: f64,
    entries: Vec<(usize, f64)>,
}

/// `B = M₁⁻¹ ⋯ M_K⁻¹ U` where each `M_k` subtracts multiples of row `p_k`,
/// followed by a list of basis-change etas.
#[derive(Debug, Clone)]
pub(crate) struct Factor {
    m: usize,
    /// Pivot row, pivot column and pivot value, in elimination order.
    order: Vec<(usize, usize, f64)>,
    /// Multipliers `(i, l_i)` of each elimination step.
    lower: Vec<Vec<(usize, f64)>>,
    /// Off-pivot entries `(column, value)` of each pivot row of `U`.
    upper: Vec<Vec<(usize, f64)>>,
    etas: Vec<Eta>,
}

impl Factor {
    /// Factors the `m × m` matrix whose column `j` is `cols[j]` (row, value).
    pub(crate) fn new(m: usize, cols: Vec<Vec<(usize, f64)>>) -> Result<Factor, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut cols = cols;
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (j, col) in cols.iter().enumerate() {
            for &(i, _) in col {
                rows[i].push(j);
            }
        }
        let mut row_count: Vec<usize> = rows.iter().map(Vec::len).collect();
        let mut col_done = vec![false; m];
        let mut row_done = vec![false; m];
        let mut pos = vec![usize::MAX; m];
        let mut f = Factor {
            m,
            order: Vec::with_capacity(m),
            lower: Vec::with_capacity(m),
            upper: Vec::with_capacity(m),
            etas: Vec::new(),
        };

        for _ in 0..m {
            let (p, q) = choose_pivot(&cols, &rows, &row_count, &col_done, &row_done).ok_or(Singular)?;
            let col_q = std::mem::take(&mut cols[q]);
            let a_pq = col_q.iter().find(|e| e.0 == p).map(|e| e.1).ok_or(Singular)?;
            let l: Vec<(usize, f64)> = col_q
                .iter()
                .filter(|e| e.0 != p)
                .map(|&(i, v)| (i, v / a_pq))
                .collect();
            for &(i, _) in &col_q {
                row_count[i] -= 1;
            }
            col_done[q] = true;
            row_done[p] = true;

            let mut u = Vec::new();
            let row_p = std::mem::take(&mut rows[p]);
            for &j in &row_p {
                if col_done[j] {
                    continue;
                }
                let col = &mut cols[j];
                let Some(k) = col.iter().position(|e| e.0 == p) else {
                    continue;
                };
                let v = col.swap_remove(k).1;
                u.push((j, v));
                if l.is_empty() {
                    continue;
                }
                for (k, &(i, _)) in col.iter().enumerate() {
                    pos[i] = k;
                }
                for &(i, li) in &l {
                    if pos[i] == usize::MAX {
                        pos[i] = col.len();
                        col.push((i, -li * v));
                        rows[i].push(j);
                        row_count[i] += 1;
                    } else {
                        col[pos[i]].1 -= li * v;
                    }
                }
                for &(i, _) in col.iter() {
                    pos[i] = usize::MAX;
                }
            }
            f.order.push((p, q, a_pq));
            f.lower.push(l);
            f.upper.push(u);
        }
        Ok(f)
    }

    pub(crate) fn num_etas(&self) -> usize {
        self.etas.len()
    }

    /// Overwrites `x` (indexed by row) with `B⁻¹ x` (indexed by basis position).
    pub(crate) fn ftran(&self, x: &mut [f64]) {
        for ((p, _, _), l) in self.order.iter().zip(&self.lower) {
            let xp = x[*p];
            if xp != 0.0 {
                for &(i, li) in l {
                    x[i] -= li * xp;
                }
            }
        }
        let mut sol = vec![0.0; self.m];
        for ((p, q, piv), u) in self.order.iter().zip(&self.upper).rev() {
            let s: f64 = u.iter().map(|&(j, v)| v * sol[j]).sum();
            sol[*q] = (x[*p] - s) / piv;
        }
        for e in &self.etas {
            let xr = sol[e.r];
            if xr == 0.0 {
                continue;
            }
            let xr = xr / e.pivot;
            for &(i, a) in &e.entries {
                sol[i] -= a * xr;
            }
            sol[e.r] = xr;
        }
        x.copy_from_slice(&sol);
    }

    /// Overwrites `c` (indexed by basis position) with `B⁻ᵀ c` (indexed by row).
    pub(crate) fn btran(&self, c: &mut [f64]) {
        for e in self.etas.iter().rev() {
            let s: f64 = e.entries.iter().map(|&(i, a)| a * c[i]).sum();
            c[e.r] = (c[e.r] - s) / e.pivot;
        }
        let mut w = vec![0.0; self.m];
        for ((p, q, piv), u) in self.order.iter().zip(&self.upper) {
            let wp = c[*q] / piv;
            w[*p] = wp;
            if wp != 0.0 {
                for &(j, v) in u {
                    c[j] -= v * wp;
                }
            }
        }
        for ((p, _, _), l) in self.order.iter().zip(&self.lower).rev() {
            let s: f64 = l.iter().map(|&(i, li)| li * w[i]).sum();
            w[*p] -= s;
        }
        c.copy_from_slice(&w);
    }

    /// Records that basis position `r` is replaced by a column whose
    /// transformed vector is `alpha`.
    pub(crate) fn update(&mut self, r: usize, alpha: &[f64]) {
        let entries = alpha
            .iter()
            .enumerate()
            .filter(|&(i, &a)| i != r && a != 0.0)
            .map(|(i, &a)| (i, a))
            .collect();
        self.etas.push(Eta {
            r,
            pivot: alpha[r],
            entries,
        });
    }
}

fn choose_pivot(
    cols: &[Vec<(usize, f64)>],
    rows: &[Vec<usize>],
    row_count: &[usize],
    col_done: &[bool],
    row_done: &[bool],
) -> Option<(usize, usize)> {
    let active = || (0..cols.len()).filter(|&j| !col_done[j]);
    let c_min = active().map(|j| cols[j].len()).min()?;
    if c_min == 0 {
        return None;
    }
    if c_min == 1 {
        let j = active().find(|&j| cols[j].len() == 1)?;
        let (i, v) = cols[j][0];
        if v.abs() > PIVOT_TOL {
            return Some((i, j));
        }
    }
    for i in (0..rows.len()).filter(|&i| !row_done[i] && row_count[i] == 1) {
        let Some(&j) = rows[i].iter().find(|&&j| !col_done[j] && cols[j].iter().any(|e| e.0 == i)) else {
            continue;
        };
        let col_max = cols[j].iter().fold(0.0f64, |a, e| a.max(e.1.abs()));
        let v = cols[j].iter().find(|e| e.0 == i).map_or(0.0, |e| e.1.abs());
        if v > PIVOT_TOL && v >= THRESHOLD * col_max {
            return Some((i, j));
        }
    }
    let mut shortest: Vec<(usize, usize)> = active().map(|j| (cols[j].len(), j)).collect();
    if shortest.len() > SEARCH_COLS {
        shortest.select_nth_unstable(SEARCH_COLS - 1);
        shortest.truncate(SEARCH_COLS);
    }
    let mut best: Option<(usize, f64, usize, usize)> = None;
    for &(count, j) in &shortest {
        let col_max = cols[j].iter().fold(0.0f64, |a, e| a.max(e.1.abs()));
        for &(i, v) in &cols[j] {
            let v = v.abs();
            if v <= PIVOT_TOL || v < THRESHOLD * col_max {
                continue;
            }
            let cost = (row_count[i] - 1) * (count - 1);
            if best.is_none_or(|(bc, bv, _, _)| cost < bc || (cost == bc && v > bv)) {
                best = Some((cost, v, i, j));
            }
        }
    }
    best.map(|(_, _, i, j)| (i, j))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_cols(a: &[&[f64]]) -> Vec<Vec<(usize, f64)>> {
        let m = a.len();
        (0..m)
            .map(|j| (0..m).filter(|&i| a[i][j] != 0.0).map(|i| (i, a[i][j])).collect())
            .collect()
    }

    fn matvec(a: &[&[f64]], x: &[f64]) -> Vec<f64> {
        a.iter().map(|r| r.iter().zip(x).map(|(u, v)| u * v).sum()).collect()
    }

    #[test]
    fn solves_and_transposed_solves() {
        let a: &[&[f64]] = &[
            &[2.0, 0.0, 1.0, 0.0],
            &[1.0, 3.0, 0.0, 0.0],
            &[0.0, 1.0, 4.0, 1.0],
            &[0.0, 0.0, 1.0, 5.0],
        ];
        let mut f = Factor::new(4, dense_cols(a)).unwrap();
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut b = matvec(a, &x);
        f.ftran(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
        let at: Vec<Vec<f64>> = (0..4).map(|j| (0..4).map(|i| a[i][j]).collect()).collect();
        let at_ref: Vec<&[f64]> = at.iter().map(Vec::as_slice).collect();
        let mut c = matvec(&at_ref, &x);
        f.btran(&mut c);
        for (u, v) in c.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }

        // Replace column 1 by (1, 1, 1, 1) and compare with a fresh factor.
        let mut alpha = vec![1.0; 4];
        f.ftran(&mut alpha);
        f.update(1, &alpha);
        let b2: &[&[f64]] = &[
            &[2.0, 1.0, 1.0, 0.0],
            &[1.0, 1.0, 0.0, 0.0],
            &[0.0, 1.0, 4.0, 1.0],
            &[0.0, 1.0, 1.0, 5.0],
        ];
        let mut rhs = matvec(b2, &x);
        f.ftran(&mut rhs);
        for (u, v) in rhs.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
        let b2t: Vec<Vec<f64>> = (0..4).map(|j| (0..4).map(|i| b2[i][j]).collect()).collect();
        let b2t_ref: Vec<&[f64]> = b2t.iter().map(Vec::as_slice).collect();
        let mut c2 = matvec(&b2t_ref, &x);
        f.btran(&mut c2);
        for (u, v) in c2.iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_singular() {
        let a: &[&[f64]] = &[&[1.0, 2.0], &[2.0, 4.0]];
        assert!(Factor::new(2, dense_cols(a)).is_err());
    }
}
