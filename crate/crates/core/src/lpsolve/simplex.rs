//! Two-phase revised simplex over sparse columns with an explicit dense basis
//! inverse. Deterministic for a fixed input: Dantzig pricing with a Bland
//! fallback under stalling, lowest-index tie breaks everywhere.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

/// `maximize objective . x` subject to row constraints and `x >= 0`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    /// Sparse columns: `(row, value)` pairs per variable.
    pub columns: Vec<Vec<(usize, f64)>>,
    pub rows: Vec<(RowKind, f64)>,
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimplexOptions {
    pub pivot_tol: f64,
    pub opt_tol: f64,
    /// Phase-1 residual above which the program is declared infeasible.
    pub feas_tol: f64,
    pub refactor_every: usize,
    /// Consecutive non-improving pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Defaults to `50 * (rows + columns)`.
    pub max_iterations: Option<usize>,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-9,
            opt_tol: 1e-9,
            feas_tol: 1e-7,
            refactor_every: 200,
            bland_after: 50,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexOutcome {
    Optimal {
        x: Vec<f64>,
        objective: f64,
        iterations: usize,
    },
    Infeasible,
    Unbounded,
}

const NONBASIC: usize = usize::MAX;
const SINGULAR_TOL: f64 = 1e-11;

struct Solver<'a> {
    opts: &'a SimplexOptions,
    rows: usize,
    n_struct: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    is_art: Vec<bool>,
    b: Vec<f64>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    /// Column-major basis inverse: `binv[c * rows + r] = B^-1[r][c]`.
    binv: Vec<f64>,
    xb: Vec<f64>,
    y: Vec<f64>,
    alpha: Vec<f64>,
    alpha_nz: Vec<usize>,
    iterations: usize,
    since_refactor: usize,
    max_iterations: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl<'a> Solver<'a> {
    fn new(lp: &LinearProgram, opts: &'a SimplexOptions) -> Result<Self> {
        let rows = lp.rows.len();
        let n_struct = lp.columns.len();
        if lp.objective.len() != n_struct {
            return Err(Error::DimensionMismatch(format!(
                "{} objective entries for {n_struct} columns",
                lp.objective.len()
            )));
        }
        let mut sign = vec![1.0; rows];
        let mut kinds = Vec::with_capacity(rows);
        let mut b = Vec::with_capacity(rows);
        for (r, &(kind, rhs)) in lp.rows.iter().enumerate() {
            if !rhs.is_finite() {
                return Err(Error::NumericalFailure(format!("row {r} has rhs {rhs}")));
            }
            if rhs < 0.0 {
                sign[r] = -1.0;
                kinds.push(match kind {
                    RowKind::Le => RowKind::Ge,
                    RowKind::Ge => RowKind::Le,
                    RowKind::Eq => RowKind::Eq,
                });
                b.push(-rhs);
            } else {
                kinds.push(kind);
                b.push(rhs);
            }
        }

        let mut col_start = vec![0];
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        for (j, col) in lp.columns.iter().enumerate() {
            for &(r, v) in col {
                if r >= rows {
                    return Err(Error::DimensionMismatch(format!(
                        "column {j} references row {r} of {rows}"
                    )));
                }
                if v != 0.0 {
                    row_idx.push(r);
                    vals.push(v * sign[r]);
                }
            }
            col_start.push(row_idx.len());
        }
        let mut is_art = vec![false; n_struct];
        let mut basis = vec![NONBASIC; rows];
        let mut push_unit = |r: usize, v: f64, art: bool, is_art: &mut Vec<bool>| {
            row_idx.push(r);
            vals.push(v);
            col_start.push(row_idx.len());
            is_art.push(art);
            is_art.len() - 1
        };
        for (r, kind) in kinds.iter().enumerate() {
            match kind {
                RowKind::Le => basis[r] = push_unit(r, 1.0, false, &mut is_art),
                RowKind::Ge => {
                    push_unit(r, -1.0, false, &mut is_art);
                }
                RowKind::Eq => {}
            }
        }
        for (r, kind) in kinds.iter().enumerate() {
            if *kind != RowKind::Le {
                basis[r] = push_unit(r, 1.0, true, &mut is_art);
            }
        }
        let ncols = is_art.len();
        let mut pos = vec![NONBASIC; ncols];
        for (r, &j) in basis.iter().enumerate() {
            pos[j] = r;
        }
        let mut binv = vec![0.0; rows * rows];
        for r in 0..rows {
            binv[r * rows + r] = 1.0;
        }
        let max_iterations = opts.max_iterations.unwrap_or(50 * (rows + ncols) + 1000);
        Ok(Self {
            opts,
            rows,
            n_struct,
            col_start,
            row_idx,
            vals,
            is_art,
            xb: b.clone(),
            b,
            basis,
            pos,
            binv,
            y: vec![0.0; rows],
            alpha: vec![0.0; rows],
            alpha_nz: Vec::with_capacity(rows),
            iterations: 0,
            since_refactor: 0,
            max_iterations,
        })
    }

    fn ncols(&self) -> usize {
        self.is_art.len()
    }

    fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.col_start[j], self.col_start[j + 1]);
        (&self.row_idx[s..e], &self.vals[s..e])
    }

    fn compute_y(&mut self, cost: &[f64]) {
        let rows = self.rows;
        for c in 0..rows {
            let col = &self.binv[c * rows..(c + 1) * rows];
            self.y[c] = self
                .basis
                .iter()
                .zip(col)
                .map(|(&j, &v)| cost[j] * v)
                .sum();
        }
    }

    fn compute_alpha(&mut self, q: usize) {
        let rows = self.rows;
        self.alpha.iter_mut().for_each(|a| *a = 0.0);
        let (s, e) = (self.col_start[q], self.col_start[q + 1]);
        for k in s..e {
            let r = self.row_idx[k];
            let a = self.vals[k];
            let col = &self.binv[r * rows..(r + 1) * rows];
            for (dst, &v) in self.alpha.iter_mut().zip(col) {
                *dst += a * v;
            }
        }
        self.alpha_nz.clear();
        for (r, &a) in self.alpha.iter().enumerate() {
            if a.abs() > 1e-14 {
                self.alpha_nz.push(r);
            }
        }
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let (idx, vals) = self.column(j);
        cost[j] - idx.iter().zip(vals).map(|(&r, &v)| self.y[r] * v).sum::<f64>()
    }

    /// Pivots column `q` into row `r`; `alpha` must hold `B^-1 A_q`.
    fn pivot(&mut self, q: usize, r: usize, theta: f64, dq: f64) {
        let rows = self.rows;
        let ar = self.alpha[r];
        for &i in &self.alpha_nz {
            self.xb[i] -= theta * self.alpha[i];
        }
        self.xb[r] = theta;
        for x in self.xb.iter_mut() {
            if *x < 0.0 && *x > -self.opts.pivot_tol {
                *x = 0.0;
            }
        }
        for c in 0..rows {
            let col = &mut self.binv[c * rows..(c + 1) * rows];
            let piv = col[r];
            if piv == 0.0 {
                continue;
            }
            let piv = piv / ar;
            for &i in &self.alpha_nz {
                col[i] -= self.alpha[i] * piv;
            }
            col[r] = piv;
            self.y[c] += dq * piv;
        }
        let leaving = self.basis[r];
        self.pos[leaving] = NONBASIC;
        self.basis[r] = q;
        self.pos[q] = r;
        self.since_refactor += 1;
    }

    /// Recomputes `B^-1` by Gauss-Jordan with partial pivoting, then `x_B` and `y`.
    fn refactor(&mut self, cost: &[f64]) -> Result<()> {
        let rows = self.rows;
        let mut a = vec![0.0; rows * rows];
        for (c, &j) in self.basis.iter().enumerate() {
            let (idx, vals) = self.column(j);
            for (&r, &v) in idx.iter().zip(vals) {
                a[r * rows + c] = v;
            }
        }
        let mut inv = vec![0.0; rows * rows];
        for r in 0..rows {
            inv[r * rows + r] = 1.0;
        }
        for k in 0..rows {
            let mut p = k;
            let mut best = a[k * rows + k].abs();
            for i in k + 1..rows {
                let v = a[i * rows + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best < SINGULAR_TOL {
                return Err(Error::NumericalFailure("singular basis".into()));
            }
            if p != k {
                for c in 0..rows {
                    a.swap(p * rows + c, k * rows + c);
                    inv.swap(p * rows + c, k * rows + c);
                }
            }
            let d = a[k * rows + k];
            for c in 0..rows {
                a[k * rows + c] /= d;
                inv[k * rows + c] /= d;
            }
            let (a_k, inv_k): (Vec<f64>, Vec<f64>) = (
                a[k * rows..(k + 1) * rows].to_vec(),
                inv[k * rows..(k + 1) * rows].to_vec(),
            );
            let a_nz: Vec<usize> = (0..rows).filter(|&c| a_k[c] != 0.0).collect();
            let inv_nz: Vec<usize> = (0..rows).filter(|&c| inv_k[c] != 0.0).collect();
            for i in 0..rows {
                if i == k {
                    continue;
                }
                let f = a[i * rows + k];
                if f == 0.0 {
                    continue;
                }
                for &c in &a_nz {
                    a[i * rows + c] -= f * a_k[c];
                }
                for &c in &inv_nz {
                    inv[i * rows + c] -= f * inv_k[c];
                }
            }
        }
        for r in 0..rows {
            for c in 0..rows {
                self.binv[c * rows + r] = inv[r * rows + c];
            }
        }
        for r in 0..rows {
            self.xb[r] = (0..rows).map(|c| self.binv[c * rows + r] * self.b[c]).sum();
            if self.xb[r] < 0.0 && self.xb[r] > -self.opts.feas_tol {
                self.xb[r] = 0.0;
            }
        }
        self.compute_y(cost);
        self.since_refactor = 0;
        Ok(())
    }

    fn run_phase(&mut self, cost: &[f64], allow_art: bool) -> Result<PhaseEnd> {
        self.compute_y(cost);
        let mut stall = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Err(Error::NumericalFailure(format!(
                    "no convergence within {} iterations",
                    self.max_iterations
                )));
            }
            if self.since_refactor >= self.opts.refactor_every {
                self.refactor(cost)?;
            }
            let bland = stall >= self.opts.bland_after;
            let mut enter = None;
            let mut best = self.opts.opt_tol;
            for j in 0..self.ncols() {
                if self.pos[j] != NONBASIC || (!allow_art && self.is_art[j]) {
                    continue;
                }
                let d = self.reduced_cost(cost, j);
                if d > best {
                    enter = Some((j, d));
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some((q, dq)) = enter else {
                return Ok(PhaseEnd::Optimal);
            };
            self.compute_alpha(q);
            let mut leave: Option<(usize, f64)> = None;
            for &r in &self.alpha_nz {
                let a = self.alpha[r];
                let ratio = if !allow_art && self.is_art[self.basis[r]] && a.abs() > self.opts.pivot_tol {
                    0.0
                } else if a > self.opts.pivot_tol {
                    self.xb[r].max(0.0) / a
                } else {
                    continue;
                };
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lt)) => {
                        if ratio < lt - 1e-12
                            || (ratio <= lt + 1e-12 && self.basis[r] < self.basis[lr])
                        {
                            Some((r, ratio.min(lt)))
                        } else {
                            Some((lr, lt))
                        }
                    }
                };
            }
            let Some((r, theta)) = leave else {
                return Ok(PhaseEnd::Unbounded);
            };
            if theta * dq > 1e-12 {
                stall = 0;
            } else {
                stall += 1;
            }
            self.pivot(q, r, theta, dq);
            self.iterations += 1;
        }
    }

    /// Pivots basic artificials out wherever a non-artificial column can replace them.
    fn expel_artificials(&mut self, cost: &[f64]) {
        let rows = self.rows;
        for r in 0..rows {
            if !self.is_art[self.basis[r]] {
                continue;
            }
            let mut pick = None;
            let mut best = 1e-7;
            for j in 0..self.ncols() {
                if self.pos[j] != NONBASIC || self.is_art[j] {
                    continue;
                }
                let (idx, vals) = self.column(j);
                let v: f64 = idx
                    .iter()
                    .zip(vals)
                    .map(|(&i, &a)| self.binv[i * rows + r] * a)
                    .sum();
                if v.abs() > best {
                    best = v.abs();
                    pick = Some(j);
                }
            }
            if let Some(q) = pick {
                self.compute_alpha(q);
                let dq = self.reduced_cost(cost, q);
                let theta = self.xb[r] / self.alpha[r];
                self.pivot(q, r, theta, dq);
                self.iterations += 1;
            }
        }
    }
}

/// Solves `lp` to optimality or reports infeasibility/unboundedness.
pub fn solve(lp: &LinearProgram, opts: &SimplexOptions) -> Result<SimplexOutcome> {
    let mut s = Solver::new(lp, opts)?;
    let ncols = s.ncols();
    if s.is_art.iter().any(|&a| a) {
        let phase1: Vec<f64> = s.is_art.iter().map(|&a| if a { -1.0 } else { 0.0 }).collect();
        s.run_phase(&phase1, true)?;
        s.refactor(&phase1)?;
        let residual: f64 = s
            .basis
            .iter()
            .zip(&s.xb)
            .filter(|(&j, _)| s.is_art[j])
            .map(|(_, &x)| x.abs())
            .sum();
        if residual > opts.feas_tol {
            return Ok(SimplexOutcome::Infeasible);
        }
        s.expel_artificials(&phase1);
    }
    let mut cost = vec![0.0; ncols];
    cost[..s.n_struct].copy_from_slice(&lp.objective);
    s.refactor(&cost)?;
    if let PhaseEnd::Unbounded = s.run_phase(&cost, false)? {
        return Ok(SimplexOutcome::Unbounded);
    }
    s.refactor(&cost)?;
    let mut x = vec![0.0; s.n_struct];
    for (r, &j) in s.basis.iter().enumerate() {
        if j < s.n_struct {
            x[j] = s.xb[r].max(0.0);
        }
    }
    let objective = x.iter().zip(&lp.objective).map(|(a, c)| a * c).sum();
    Ok(SimplexOutcome::Optimal {
        x,
        objective,
        iterations: s.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(objective: Vec<f64>, dense: Vec<Vec<f64>>, rows: Vec<(RowKind, f64)>) -> LinearProgram {
        let n = objective.len();
        let columns = (0..n)
            .map(|j| {
                dense
                    .iter()
                    .enumerate()
                    .filter(|(_, row)| row[j] != 0.0)
                    .map(|(r, row)| (r, row[j]))
                    .collect()
            })
            .collect();
        LinearProgram {
            objective,
            columns,
            rows,
        }
    }

    fn optimum(out: SimplexOutcome) -> (Vec<f64>, f64) {
        match out {
            SimplexOutcome::Optimal { x, objective, .. } => (x, objective),
            other => panic!("expected optimum, got {other:?}"),
        }
    }

    #[test]
    fn textbook_maximum() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let p = lp(
            vec![3.0, 5.0],
            vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            vec![(RowKind::Le, 4.0), (RowKind::Le, 12.0), (RowKind::Le, 18.0)],
        );
        let (x, obj) = optimum(solve(&p, &SimplexOptions::default()).unwrap());
        assert!((obj - 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max -x - y, x + y = 2, x >= 0.5 -> objective -2
        let p = lp(
            vec![-1.0, -1.0],
            vec![vec![1.0, 1.0], vec![1.0, 0.0]],
            vec![(RowKind::Eq, 2.0), (RowKind::Ge, 0.5)],
        );
        let (x, obj) = optimum(solve(&p, &SimplexOptions::default()).unwrap());
        assert!((obj + 2.0).abs() < 1e-9);
        assert!(x[0] >= 0.5 - 1e-9);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // max x, -x >= -3 -> x = 3
        let p = lp(vec![1.0], vec![vec![-1.0]], vec![(RowKind::Ge, -3.0)]);
        let (_, obj) = optimum(solve(&p, &SimplexOptions::default()).unwrap());
        assert!((obj - 3.0).abs() < 1e-9);
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let p = lp(
            vec![1.0],
            vec![vec![1.0], vec![1.0]],
            vec![(RowKind::Eq, 1.0), (RowKind::Le, 0.0)],
        );
        assert_eq!(solve(&p, &SimplexOptions::default()).unwrap(), SimplexOutcome::Infeasible);
        let p = lp(vec![1.0, 0.0], vec![vec![1.0, -1.0]], vec![(RowKind::Le, 1.0)]);
        assert_eq!(solve(&p, &SimplexOptions::default()).unwrap(), SimplexOutcome::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let p = lp(
            vec![1.0, 2.0],
            vec![vec![1.0, 1.0], vec![2.0, 2.0]],
            vec![(RowKind::Eq, 1.0), (RowKind::Eq, 2.0)],
        );
        let (x, obj) = optimum(solve(&p, &SimplexOptions::default()).unwrap());
        assert!((obj - 2.0).abs() < 1e-9);
        assert!((x[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn frequent_refactoring_matches() {
        let p = lp(
            vec![3.0, 5.0],
            vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            vec![(RowKind::Le, 4.0), (RowKind::Le, 12.0), (RowKind::Le, 18.0)],
        );
        let opts = SimplexOptions {
            refactor_every: 1,
            ..SimplexOptions::default()
        };
        let (_, obj) = optimum(solve(&p, &opts).unwrap());
        assert!((obj - 36.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_budget_is_enforced() {
        let p = lp(
            vec![3.0, 5.0],
            vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            vec![(RowKind::Le, 4.0), (RowKind::Le, 12.0), (RowKind::Le, 18.0)],
        );
        let opts = SimplexOptions {
            max_iterations: Some(0),
            ..SimplexOptions::default()
        };
        assert!(matches!(solve(&p, &opts), Err(Error::NumericalFailure(_))));
    }
}
