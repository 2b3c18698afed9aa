//! The continuous ranking relaxation and an exhaustive integral oracle.

mod oracle;
pub mod simplex;

pub use oracle::{
    brute_force_optimal, enumerate_rankings as oracle_enumerate, realized_violation, OracleMode,
};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::fairspec::LinearConstraint;
use crate::types::{FractionalAssignment, Instance};
use simplex::{LinearProgram, RowKind, SimplexOptions, SimplexOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    /// Present iff `status` is `Optimal`.
    pub assignment: Option<FractionalAssignment>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// The assignment, or `Error::Infeasible`.
    pub fn into_assignment(self) -> Result<FractionalAssignment> {
        self.assignment.ok_or(Error::Infeasible)
    }
}

/// Maximizes `<X, W>` over fractional assignments subject to `constraints`.
pub fn solve_relaxation(inst: &Instance, constraints: &[LinearConstraint]) -> Result<LpSolution> {
    solve_relaxation_with(inst, constraints, &SimplexOptions::default())
}

pub fn solve_relaxation_with(
    inst: &Instance,
    constraints: &[LinearConstraint],
    opts: &SimplexOptions,
) -> Result<LpSolution> {
    let (m, n) = (inst.m(), inst.n());
    let var = |i: usize, j: usize| i * n + j;
    // rows: n slot equalities, m item capacities, then the side constraints
    let mut columns: Vec<Vec<(usize, f64)>> = (0..m * n)
        .map(|v| vec![(v % n, 1.0), (n + v / n, 1.0)])
        .collect();
    let mut rows: Vec<(RowKind, f64)> = Vec::with_capacity(n + m + constraints.len());
    rows.extend(std::iter::repeat_n((RowKind::Eq, 1.0), n));
    rows.extend(std::iter::repeat_n((RowKind::Le, 1.0), m));
    for (c, con) in constraints.iter().enumerate() {
        let r = n + m + c;
        rows.push((RowKind::Le, con.bound));
        for &(i, j, v) in &con.coeff {
            if i >= m || j >= n {
                return Err(Error::DimensionMismatch(format!(
                    "constraint {c} references ({i}, {j}) outside {m}x{n}"
                )));
            }
            if v != 0.0 {
                columns[var(i, j)].push((r, v));
            }
        }
    }
    let objective: Vec<f64> = (0..m * n)
        .map(|v| inst.utilities()[[v / n, v % n]])
        .collect();
    let lp = LinearProgram {
        objective,
        columns,
        rows,
    };
    match simplex::solve(&lp, opts)? {
        SimplexOutcome::Infeasible => Ok(LpSolution {
            status: LpStatus::Infeasible,
            objective: f64::NAN,
            assignment: None,
        }),
        SimplexOutcome::Unbounded => Err(Error::NumericalFailure(
            "relaxation reported unbounded".into(),
        )),
        SimplexOutcome::Optimal { x, .. } => {
            let mut mat = Array2::from_shape_vec((m, n), x)
                .map_err(|e| Error::NumericalFailure(e.to_string()))?;
            mat.mapv_inplace(|v| if v < 1e-12 { 0.0 } else { v.min(1.0) });
            let assignment = FractionalAssignment::new(mat)
                .map_err(|e| Error::NumericalFailure(format!("solver output rejected: {e}")))?;
            let objective = assignment.objective(inst.utilities());
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective,
                assignment: Some(assignment),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairspec::{build_constraints, u_equal_representation};
    use crate::types::{FairnessSpec, GammaMode, SpecParams, Structure};
    use ndarray::array;

    #[test]
    fn single_cell_without_constraints() {
        let inst = Instance::new(array![[1.0]], array![[0.5, 0.5]], Structure::Disjoint, None).unwrap();
        let sol = solve_relaxation(&inst, &[]).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert_eq!(sol.assignment.unwrap().matrix(), &array![[1.0]]);
    }

    #[test]
    fn contradictory_bound_is_infeasible() {
        let inst = Instance::new(array![[1.0], [1.0]], array![[1.0], [1.0]], Structure::Disjoint, None).unwrap();
        let con = LinearConstraint {
            coeff: vec![(0, 0, 1.0), (1, 0, 1.0)],
            bound: 0.0,
            k: 0,
            group: 0,
        };
        let sol = solve_relaxation(&inst, &[con]).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
        assert!(sol.into_assignment().is_err());
    }

    #[test]
    fn fairness_forces_fractional_mix() {
        // two group-0 items dominate, equal representation at k=1 binds
        let w = array![[3.0, 2.0], [2.9, 1.9], [1.0, 0.5], [0.9, 0.4]];
        let probs = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        let inst = Instance::new(w.clone(), probs.clone(), Structure::Disjoint, None).unwrap();
        let spec = FairnessSpec::new(
            u_equal_representation(2, 2).unwrap(),
            2,
            GammaMode::Explicit { gamma: vec![0.0; 2] },
            SpecParams::default(),
            None,
        )
        .unwrap();
        let cons = build_constraints(&probs, &spec).unwrap();
        let sol = solve_relaxation(&inst, &cons).unwrap();
        let x = sol.assignment.unwrap();
        for c in &cons {
            assert!(c.evaluate(x.matrix()) <= c.bound + 1e-9);
        }
        // best: item0 at slot0, item2 at slot1 = 3.5 vs item2 first + item0 second = 3.0
        assert!((sol.objective - 3.5).abs() < 1e-9);
    }
}
