//! Upper-bound matrices, relaxation vectors and the linear prefix constraints.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::types::{log, FairnessSpec, GammaMode, UpperBounds};

/// Leading constant of the theoretical relaxation.
pub const THEORETICAL_GAMMA_CONSTANT: f64 = 12.0;

const CEIL_SLACK: f64 = 1e-9;

/// `1 - 1/(2 sqrt c)`, the share of `gamma` the LP may use.
pub fn relaxation_factor(c: f64) -> f64 {
    1.0 - 1.0 / (2.0 * c.sqrt())
}

/// Ceiling that ignores floating error just above an integer.
fn ceil_int(x: f64) -> f64 {
    (x - CEIL_SLACK).ceil().max(1.0)
}

/// `U[k][l] = ceil(k/p)` with 1-based `k`.
pub fn u_equal_representation(n: usize, p: usize) -> Result<UpperBounds> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidSpec(format!("need n, p >= 1, got n = {n}, p = {p}")));
    }
    UpperBounds::new(Array2::from_shape_fn((n, p), |(k, _)| {
        ceil_int((k + 1) as f64 / p as f64)
    }))
}

/// `U[k][l] = ceil(k |G_l| / m)`. Overlapping groups may have sizes summing past `m`.
pub fn u_proportional(n: usize, group_sizes: &[usize], m: usize) -> Result<UpperBounds> {
    if n == 0 || m == 0 || group_sizes.is_empty() {
        return Err(Error::InvalidSpec("need n, m >= 1 and at least one group".into()));
    }
    if let Some(l) = group_sizes.iter().position(|&s| s == 0) {
        return Err(Error::ZeroGroupSize(l));
    }
    UpperBounds::new(Array2::from_shape_fn((n, group_sizes.len()), |(k, l)| {
        ceil_int((k + 1) as f64 * group_sizes[l] as f64 / m as f64)
    }))
}

/// `U[k][l] = ceil((phi/p) k)`; `phi = p` leaves the ranking unconstrained.
pub fn u_phi(n: usize, p: usize, phi: f64) -> Result<UpperBounds> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidSpec(format!("need n, p >= 1, got n = {n}, p = {p}")));
    }
    if !(phi >= 1.0 && phi <= p as f64) {
        return Err(Error::PhiOutOfRange { phi, p });
    }
    UpperBounds::new(Array2::from_shape_fn((n, p), |(k, _)| {
        ceil_int(phi / p as f64 * (k + 1) as f64)
    }))
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta <= 0.5 {
        Ok(())
    } else {
        Err(Error::DeltaOutOfRange(delta))
    }
}

fn union_bound_log(u: &UpperBounds, delta: f64) -> f64 {
    log(2.0 * (u.n() * u.p()) as f64 / delta)
}

fn inv_sqrt_min(u: &UpperBounds, k: usize) -> f64 {
    (1.0 / u.min_in_row(k)).sqrt()
}

fn check_psi(u: &UpperBounds, psi: f64) -> Result<()> {
    if !(psi > 0.0 && psi.is_finite()) {
        return Err(Error::InvalidSpec(format!("psi = {psi} must be positive")));
    }
    for k in 0..u.n() {
        for l in 0..u.p() {
            let required = psi * (k + 1) as f64;
            if u.get(k, l) < required - CEIL_SLACK {
                return Err(Error::PsiAssumptionViolated {
                    k: k + 1,
                    group: l + 1,
                    bound: u.get(k, l),
                    required,
                });
            }
        }
    }
    Ok(())
}

/// `gamma_k = constant * log(2np/delta) * max_l sqrt(1/U[k][l])`.
pub fn gamma_theoretical(u: &UpperBounds, delta: f64, constant: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    if !(constant >= 0.0 && constant.is_finite()) {
        return Err(Error::InvalidSpec(format!("gamma constant {constant} is invalid")));
    }
    let lg = union_bound_log(u, delta);
    Ok((0..u.n()).map(|k| constant * lg * inv_sqrt_min(u, k)).collect())
}

/// `gamma_k = max_l sqrt(log(2np/delta) / (2 psi U[k][l]))`; needs `U[k][l] >= psi k`.
pub fn gamma_improved(u: &UpperBounds, psi: f64, delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    check_psi(u, psi)?;
    let lg = union_bound_log(u, delta);
    Ok((0..u.n())
        .map(|k| (lg / (2.0 * psi * u.min_in_row(k))).sqrt())
        .collect())
}

/// `gamma_k = (1/psi) log(2np/delta) max_l sqrt(1/U[k][l])`; needs `U[k][l] >= psi k`.
pub fn gamma_position_weighted(u: &UpperBounds, psi: f64, delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    check_psi(u, psi)?;
    let lg = union_bound_log(u, delta);
    Ok((0..u.n()).map(|k| lg / psi * inv_sqrt_min(u, k)).collect())
}

/// `gamma_k = max_l sqrt(1/U[k][l]) / 20`.
pub fn gamma_heuristic(u: &UpperBounds) -> Vec<f64> {
    (0..u.n()).map(|k| inv_sqrt_min(u, k) / 20.0).collect()
}

/// Dispatches on `mode`. `delta` is validated for every mode.
pub fn gamma_for(mode: &GammaMode, u: &UpperBounds, delta: f64) -> Result<Vec<f64>> {
    check_delta(delta)?;
    match mode {
        GammaMode::Theoretical { constant } => gamma_theoretical(u, delta, *constant),
        GammaMode::Improved { psi } => gamma_improved(u, *psi, delta),
        GammaMode::PositionWeighted { psi } => gamma_position_weighted(u, *psi, delta),
        GammaMode::Heuristic => Ok(gamma_heuristic(u)),
        GammaMode::Explicit { gamma } => {
            if gamma.len() != u.n() {
                return Err(Error::DimensionMismatch(format!(
                    "explicit gamma has length {}, expected {}",
                    gamma.len(),
                    u.n()
                )));
            }
            Ok(gamma.clone())
        }
    }
}

/// `sum coeff[(i, j)] * X[i][j] <= bound` for the prefix ending at slot `k`, group `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    /// Nonzero `(item, slot, value)` triples; every slot is at most `k`.
    pub coeff: Vec<(usize, usize, f64)>,
    pub bound: f64,
    pub k: usize,
    pub group: usize,
}

impl LinearConstraint {
    /// Left-hand side at `x`.
    pub fn evaluate(&self, x: &Array2<f64>) -> f64 {
        self.coeff.iter().map(|&(i, j, v)| v * x[[i, j]]).sum()
    }
}

/// One constraint per `(k, l)`, ordered by `k` then `l`.
pub fn build_constraints(probs: &Array2<f64>, spec: &FairnessSpec) -> Result<Vec<LinearConstraint>> {
    let (m, p) = probs.dim();
    if p != spec.p() {
        return Err(Error::DimensionMismatch(format!(
            "P has {p} groups, spec has {}",
            spec.p()
        )));
    }
    if spec.n() > m {
        return Err(Error::DimensionMismatch(format!(
            "spec has {} slots, only {m} items",
            spec.n()
        )));
    }
    let n = spec.n();
    let v: Vec<f64> = match spec.discounts() {
        Some(v) => v.to_vec(),
        None => vec![1.0; n],
    };
    let mut out = Vec::with_capacity(n * p);
    for k in 0..n {
        for l in 0..p {
            let mut coeff = Vec::new();
            for i in 0..m {
                let pil = probs[[i, l]];
                if pil == 0.0 {
                    continue;
                }
                for (j, vj) in v.iter().enumerate().take(k + 1) {
                    coeff.push((i, j, vj * pil));
                }
            }
            out.push(LinearConstraint {
                coeff,
                bound: spec.relaxed_bound(k, l),
                k,
                group: l,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::SpecParams;
    use ndarray::array;
    use proptest::prelude::*;

    fn col(u: &UpperBounds, l: usize) -> Vec<f64> {
        u.matrix().column(l).to_vec()
    }

    #[test]
    fn equal_representation_examples() {
        let u = u_equal_representation(3, 2).unwrap();
        assert_eq!(col(&u, 0), vec![1.0, 1.0, 2.0]);
        assert_eq!(col(&u, 1), vec![1.0, 1.0, 2.0]);
        assert_eq!(col(&u_equal_representation(1, 2).unwrap(), 0), vec![1.0]);
        let u = u_equal_representation(4, 4).unwrap();
        assert_eq!(col(&u, 3), vec![1.0; 4]);
    }

    #[test]
    fn proportional_examples() {
        let u = u_proportional(2, &[1, 1], 2).unwrap();
        assert!(u.matrix().iter().all(|&x| x == 1.0));
        let u = u_proportional(5, &[3, 2], 5).unwrap();
        assert_eq!(col(&u, 0), vec![1.0, 2.0, 2.0, 3.0, 3.0]);
        assert_eq!(u_proportional(1, &[10, 0], 10), Err(Error::ZeroGroupSize(1)));
    }

    #[test]
    fn phi_examples() {
        let u = u_phi(6, 3, 3.0).unwrap();
        assert_eq!(col(&u, 2), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(u_phi(5, 2, 1.0).unwrap().get(4, 0), 3.0);
        assert!(u_phi(5, 2, 1.11).is_ok());
        assert!(matches!(u_phi(5, 2, 0.9), Err(Error::PhiOutOfRange { .. })));
        assert!(matches!(u_phi(5, 2, 2.1), Err(Error::PhiOutOfRange { .. })));
    }

    #[test]
    fn theoretical_gamma_examples() {
        let u = u_equal_representation(25, 2).unwrap();
        let g = gamma_theoretical(&u, 0.1, THEORETICAL_GAMMA_CONSTANT).unwrap();
        assert!((g[0] - 12.0 * 1000f64.ln()).abs() < 1e-9);
        assert!((g[0] - 82.89).abs() < 0.01);
        let u2 = UpperBounds::new(u.matrix() * 2.0).unwrap();
        let g2 = gamma_theoretical(&u2, 0.1, THEORETICAL_GAMMA_CONSTANT).unwrap();
        for (a, b) in g.iter().zip(&g2) {
            assert!((a / b - 2f64.sqrt()).abs() < 1e-12);
        }
        assert!(matches!(
            gamma_theoretical(&u, 0.6, 12.0),
            Err(Error::DeltaOutOfRange(_))
        ));
        assert!(gamma_theoretical(&u, 0.0, 12.0).is_err());
    }

    #[test]
    fn improved_gamma_examples() {
        let u = u_equal_representation(25, 2).unwrap();
        let g = gamma_improved(&u, 0.5, 0.1).unwrap();
        assert!((g[0] - 1000f64.ln().sqrt()).abs() < 1e-12);
        assert!((g[0] - 2.628).abs() < 1e-3);
        let err = gamma_improved(&u, 1.0, 0.1).unwrap_err();
        assert!(matches!(err, Error::PsiAssumptionViolated { .. }));
    }

    #[test]
    fn position_weighted_gamma_examples() {
        let u = u_equal_representation(25, 2).unwrap();
        let pw = gamma_position_weighted(&u, 0.5, 0.1).unwrap();
        let th = gamma_theoretical(&u, 0.1, 12.0).unwrap();
        for (a, b) in pw.iter().zip(&th) {
            assert!((a - b / (12.0 * 0.5)).abs() < 1e-9);
        }
        let u = u_phi(2, 2, 2.0).unwrap();
        let g = gamma_position_weighted(&u, 1.0, 0.5).unwrap();
        assert!((g[0] - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn heuristic_gamma_examples() {
        let u = u_equal_representation(8, 2).unwrap();
        let g = gamma_heuristic(&u);
        assert!((g[7] - 0.025).abs() < 1e-15);
        assert!((g[0] - 0.05).abs() < 1e-15);
        let big = UpperBounds::new(Array2::from_elem((1, 2), 1e12)).unwrap();
        assert!(gamma_heuristic(&big)[0] < 1e-7);
    }

    #[test]
    fn every_mode_rejects_bad_delta() {
        let u = u_equal_representation(4, 2).unwrap();
        for mode in [GammaMode::Heuristic, GammaMode::Explicit { gamma: vec![0.0; 4] }] {
            assert!(gamma_for(&mode, &u, 0.7).is_err());
        }
    }

    fn spec_with(u: UpperBounds, gamma: Vec<f64>, c: f64, discounts: Option<Vec<f64>>) -> FairnessSpec {
        let p = u.p();
        FairnessSpec::new(
            u,
            p,
            GammaMode::Explicit { gamma },
            SpecParams { c, ..SpecParams::default() },
            discounts,
        )
        .unwrap()
    }

    #[test]
    fn constraint_bounds_follow_relaxation() {
        let u = u_equal_representation(3, 2).unwrap();
        let probs = array![[0.5, 0.5], [0.2, 0.8], [1.0, 0.0]];
        let cons = build_constraints(&probs, &spec_with(u.clone(), vec![0.0; 3], 4.0, None)).unwrap();
        assert_eq!(cons.len(), 6);
        for c in &cons {
            assert_eq!(c.bound, u.get(c.k, c.group));
            assert!(c.coeff.iter().all(|&(_, j, _)| j <= c.k));
        }
        let cons = build_constraints(&probs, &spec_with(u.clone(), vec![1.0; 3], 1.0 + 1e-12, None)).unwrap();
        assert!((cons[0].bound - 1.5).abs() < 1e-9);
        assert!((relaxation_factor(1e12) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn single_group_constraint() {
        let u = UpperBounds::new(array![[1.0]]).unwrap();
        let cons = build_constraints(&array![[1.0], [0.0]], &spec_with(u, vec![0.0], 1.5, None)).unwrap();
        assert_eq!(cons.len(), 1);
        assert_eq!(cons[0].coeff, vec![(0, 0, 1.0)]);
        assert_eq!(cons[0].bound, 1.0);
    }

    #[test]
    fn discounts_scale_coefficients() {
        let u = u_equal_representation(2, 2).unwrap();
        let probs = array![[0.5, 0.5], [0.5, 0.5]];
        let cons = build_constraints(&probs, &spec_with(u, vec![0.0; 2], 1.5, Some(vec![1.0, 0.5]))).unwrap();
        let last = cons.iter().find(|c| c.k == 1 && c.group == 0).unwrap();
        assert!(last.coeff.contains(&(0, 1, 0.25)));
        assert!(last.coeff.iter().all(|&(_, _, v)| (0.0..=1.0).contains(&v)));
    }

    proptest! {
        #[test]
        fn gamma_monotone_in_u_and_delta(
            n in 1usize..20,
            p in 2usize..5,
            bump in 1.0f64..5.0,
            d1 in 0.01f64..0.5,
            d2 in 0.01f64..0.5,
        ) {
            let u = u_equal_representation(n, p).unwrap();
            let bigger = UpperBounds::new(u.matrix().mapv(|x| (x * bump).ceil())).unwrap();
            let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
            for mode in [GammaMode::theoretical(), GammaMode::Heuristic] {
                let g = gamma_for(&mode, &u, lo).unwrap();
                let gb = gamma_for(&mode, &bigger, lo).unwrap();
                let gh = gamma_for(&mode, &u, hi).unwrap();
                for k in 0..n {
                    prop_assert!(gb[k] <= g[k] + 1e-12);
                    prop_assert!(gh[k] <= g[k] + 1e-12);
                }
            }
            let psi = 1.0 / p as f64;
            let g = gamma_improved(&u, psi, lo).unwrap();
            let gb = gamma_improved(&bigger, psi, lo).unwrap();
            let gh = gamma_improved(&u, psi, hi).unwrap();
            for k in 0..n {
                prop_assert!(gb[k] <= g[k] + 1e-12);
                prop_assert!(gh[k] <= g[k] + 1e-12);
            }
        }

        #[test]
        fn theoretical_gamma_decays_like_inverse_sqrt(n in 1usize..200, p in 2usize..6, delta in 0.01f64..0.5) {
            let u = u_equal_representation(n, p).unwrap();
            let g = gamma_theoretical(&u, delta, 1.0).unwrap();
            let lg = (2.0 * (n * p) as f64 / delta).ln();
            for (k, gk) in g.iter().enumerate() {
                let scaled = gk * ((k + 1) as f64).sqrt() / lg;
                prop_assert!(scaled >= 1.0 - 1e-12);
                prop_assert!(scaled <= (p as f64).sqrt() + 1e-12);
            }
        }
    }
}
