//! Exhaustive search over all rankings of a tiny instance. Test oracle only.

use crate::error::{Error, Result};
use crate::fairspec::build_constraints;
use crate::noiselab::sample_groups;
use crate::rng::derive_seed;
use crate::types::{utility, FairnessSpec, GroupSample, Instance, Ranking};

pub const MAX_ITEMS: usize = 8;
pub const MAX_SLOTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleMode {
    /// Prefix constraints on expected counts, with the spec's relaxed bounds.
    ExpectedConstraint,
    /// Realized counts may exceed `U[k][l] (1 + epsilon[k])` in at most a
    /// `delta` share of `trials` group samples shared by every ranking.
    EpsilonDelta {
        epsilon: Vec<f64>,
        delta: f64,
        trials: usize,
        seed: u64,
    },
}

/// Every injective sequence of `n` items out of `m`, in lexicographic order.
pub fn enumerate_rankings(m: usize, n: usize) -> Vec<Ranking> {
    fn rec(m: usize, n: usize, cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Ranking>) {
        if cur.len() == n {
            out.push(Ranking::from_slots_unchecked(cur.clone()));
            return;
        }
        for i in 0..m {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(m, n, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    if n <= m {
        rec(m, n, &mut Vec::with_capacity(n), &mut vec![false; m], &mut out);
    }
    out
}

/// True when some prefix count of `r` under `g` exceeds `U[k][l] (1 + epsilon[k])`.
pub fn realized_violation(
    r: &Ranking,
    g: &GroupSample,
    spec: &FairnessSpec,
    epsilon: &[f64],
) -> bool {
    let p = spec.p();
    let mut counts = vec![0.0; p];
    for (k, &item) in r.slots().iter().enumerate() {
        let v = spec.discounts().map_or(1.0, |d| d[k]);
        for (l, count) in counts.iter_mut().enumerate() {
            if g.contains(item, l) {
                *count += v;
            }
            if *count > spec.upper().get(k, l) * (1.0 + epsilon[k]) + 1e-12 {
                return true;
            }
        }
    }
    false
}

/// Highest-utility ranking satisfying `mode`, or `None` if none does.
/// Ties keep the lexicographically first ranking.
pub fn brute_force_optimal(
    inst: &Instance,
    spec: &FairnessSpec,
    mode: &OracleMode,
) -> Result<Option<Ranking>> {
    let (m, n) = (inst.m(), inst.n());
    if m > MAX_ITEMS || n > MAX_SLOTS {
        return Err(Error::TooLarge { m, n });
    }
    if spec.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "spec has {} slots, instance has {n}",
            spec.n()
        )));
    }
    let feasible: Box<dyn Fn(&Ranking) -> bool> = match mode {
        OracleMode::ExpectedConstraint => {
            let cons = build_constraints(inst.probs(), spec)?;
            Box::new(move |r: &Ranking| {
                let x = r.to_matrix(m);
                cons.iter()
                    .all(|c| c.evaluate(&x) <= c.bound + 1e-9 * (1.0 + c.bound))
            })
        }
        OracleMode::EpsilonDelta {
            epsilon,
            delta,
            trials,
            seed,
        } => {
            if epsilon.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "epsilon has length {}, expected {n}",
                    epsilon.len()
                )));
            }
            let samples: Vec<GroupSample> = (0..*trials as u64)
                .map(|t| sample_groups(inst.probs(), inst.structure(), derive_seed(*seed, t)))
                .collect::<Result<_>>()?;
            let epsilon = epsilon.clone();
            let (delta, trials) = (*delta, *trials);
            Box::new(move |r: &Ranking| {
                let bad = samples
                    .iter()
                    .filter(|g| realized_violation(r, g, spec, &epsilon))
                    .count();
                bad as f64 <= delta * trials as f64
            })
        }
    };
    let mut best: Option<(f64, Ranking)> = None;
    for r in enumerate_rankings(m, n) {
        let u = utility(&r, inst.utilities())?;
        if best.as_ref().is_some_and(|(b, _)| u <= *b) {
            continue;
        }
        if feasible(&r) {
            best = Some((u, r));
        }
    }
    Ok(best.map(|(_, r)| r))
}
