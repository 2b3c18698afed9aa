//! End-to-end rankers: the noise-resilient pipeline and the baselines.

pub mod assignment;
pub mod dominance;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::decompose::bvn_decompose;
use crate::error::{Error, Result};
use crate::fairspec::{build_constraints, relaxation_factor};
use crate::lpsolve::simplex::{self, LinearProgram, RowKind, SimplexOptions, SimplexOutcome};
use crate::lpsolve::{solve_relaxation, LpSolution, LpStatus};
use crate::noiselab::sample_groups;
use crate::rng::{derive_seed, rng_from};
use crate::swapround::{swap_round, DEFAULT_T};
use crate::types::{
    ConvexCombination, FairnessSpec, FractionalAssignment, GammaMode, GroupSample, Instance,
    Ranking, SpecParams, Structure, UpperBounds,
};

/// Seed streams for the randomized rankers.
const STREAM_ROUND: u64 = 1;
const STREAM_SAMPLE: u64 = 2;

/// Items sorted by descending slot-`slot` score, ties to the lower index.
fn by_score(inst: &Instance, slot: usize, items: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut v: Vec<usize> = items.collect();
    v.sort_by(|&a, &b| {
        inst.item_score(b, slot)
            .total_cmp(&inst.item_score(a, slot))
            .then(a.cmp(&b))
    });
    v
}

/// The optimal fractional assignment under `spec`, using exact item pruning.
pub fn fair_relaxation(inst: &Instance, spec: &FairnessSpec) -> Result<LpSolution> {
    relaxation_over(inst, inst.probs(), spec)
}

fn relaxation_over(inst: &Instance, probs: &Array2<f64>, spec: &FairnessSpec) -> Result<LpSolution> {
    if spec.n() != inst.n() || spec.p() != probs.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "spec is {}x{}, instance has n = {} and p = {}",
            spec.n(),
            spec.p(),
            inst.n(),
            probs.ncols()
        )));
    }
    let keep = dominance::surviving_items(inst.utilities(), probs, inst.n());
    let sub_probs = Array2::from_shape_fn((keep.len(), probs.ncols()), |(r, l)| probs[[keep[r], l]]);
    let sub = inst.restrict(&keep)?;
    let cons = build_constraints(&sub_probs, spec)?;
    let sol = solve_relaxation(&sub, &cons)?;
    let Some(x) = sol.assignment else {
        return Ok(sol);
    };
    let mut full = Array2::zeros((inst.m(), inst.n()));
    for (r, &i) in keep.iter().enumerate() {
        full.row_mut(i).assign(&x.matrix().row(r));
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: sol.objective,
        assignment: Some(FractionalAssignment::new(full)?),
    })
}

/// Relaxation, decomposition, and swap rounding with chunk parameter `t`.
pub fn nresilient_with(inst: &Instance, spec: &FairnessSpec, t: usize, seed: u64) -> Result<Ranking> {
    let x = fair_relaxation(inst, spec)?.into_assignment()?;
    let comb = bvn_decompose(&x)?;
    swap_round(&comb, t, &mut rng_from(derive_seed(seed, STREAM_ROUND)))
}

/// The noise-resilient ranker with the default chunk parameter.
pub fn nresilient(inst: &Instance, spec: &FairnessSpec, seed: u64) -> Result<Ranking> {
    nresilient_with(inst, spec, DEFAULT_T, seed)
}

/// Each item goes to its most likely group; ties to the lowest group index.
pub fn impute_bayes(probs: &Array2<f64>, structure: Structure) -> Result<GroupSample> {
    if !structure.is_categorical() {
        return Err(Error::InvalidSpec(
            "most-likely-group imputation needs one group per item".into(),
        ));
    }
    let labels: Vec<usize> = probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (l, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = l;
                }
            }
            best
        })
        .collect();
    GroupSample::from_labels(&labels, probs.ncols())
}

/// Each item's groups drawn independently from its row of `P`.
pub fn impute_independent(probs: &Array2<f64>, structure: Structure, seed: u64) -> Result<GroupSample> {
    sample_groups(probs, structure, seed)
}

/// The `n` best items, best first. Uses intrinsic values when present and an
/// exact assignment otherwise.
pub fn uncons(inst: &Instance) -> Ranking {
    let slots = if inst.values().is_some() {
        let mut order = by_score(inst, 0, 0..inst.m());
        order.truncate(inst.n());
        order
    } else {
        assignment::max_weight_assignment(inst.utilities())
    };
    Ranking::from_slots_unchecked(slots)
}

/// At each slot, the best unplaced item whose groups all stay within the
/// prefix bound `U[j][l]`.
pub fn csv_greedy(inst: &Instance, groups: &GroupSample, upper: ArrayView2<'_, f64>) -> Result<Ranking> {
    check_groups(inst, groups)?;
    let (n, p) = (inst.n(), groups.p());
    if upper.dim() != (n, p) {
        return Err(Error::DimensionMismatch(format!(
            "U is {:?}, expected ({n}, {p})",
            upper.dim()
        )));
    }
    let mut counts = vec![0.0; p];
    let mut placed = vec![false; inst.m()];
    let mut slots = Vec::with_capacity(n);
    let static_order = inst.values().is_some().then(|| by_score(inst, 0, 0..inst.m()));
    for j in 0..n {
        let order = match &static_order {
            Some(o) => o.clone(),
            None => by_score(inst, j, 0..inst.m()),
        };
        let pick = order.into_iter().find(|&i| {
            !placed[i] && (0..p).all(|l| !groups.contains(i, l) || counts[l] + 1.0 <= upper[[j, l]])
        });
        let Some(i) = pick else {
            return Err(Error::Stuck { slot: j });
        };
        placed[i] = true;
        for (l, c) in counts.iter_mut().enumerate() {
            if groups.contains(i, l) {
                *c += 1.0;
            }
        }
        slots.push(i);
    }
    Ok(Ranking::from_slots_unchecked(slots))
}

fn check_groups(inst: &Instance, groups: &GroupSample) -> Result<()> {
    if groups.m() != inst.m() {
        return Err(Error::DimensionMismatch(format!(
            "groups cover {} items, instance has {}",
            groups.m(),
            inst.m()
        )));
    }
    Ok(())
}

/// Deterministic greedy with target proportions `alpha`. Groups below their
/// floor `floor(alpha_l k)` are served first; otherwise the best item among
/// groups below their ceiling `ceil(alpha_l k)`.
pub fn gak_detgreedy(inst: &Instance, groups: &GroupSample, alpha: &[f64]) -> Result<Ranking> {
    check_groups(inst, groups)?;
    let labels = groups.labels()?;
    let p = groups.p();
    if alpha.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} proportions for {p} groups",
            alpha.len()
        )));
    }
    if alpha.iter().any(|&a| !(0.0..=1.0).contains(&a)) || (alpha.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidSpec("proportions must be a distribution".into()));
    }
    let mut queues: Vec<Vec<usize>> = vec![Vec::new(); p];
    for i in by_score(inst, 0, 0..inst.m()).into_iter().rev() {
        queues[labels[i]].push(i);
    }
    let mut counts = vec![0usize; p];
    let mut slots = Vec::with_capacity(inst.n());
    for j in 0..inst.n() {
        let k = (j + 1) as f64;
        let best_of = |set: &[usize], queues: &Vec<Vec<usize>>| -> Option<usize> {
            set.iter()
                .filter_map(|&l| queues[l].last().map(|&i| (l, i)))
                .min_by(|a, b| {
                    inst.item_score(b.1, j)
                        .total_cmp(&inst.item_score(a.1, j))
                        .then(a.1.cmp(&b.1))
                })
                .map(|(l, _)| l)
        };
        let below_min: Vec<usize> = (0..p)
            .filter(|&l| (counts[l] as f64) < (alpha[l] * k + 1e-9).floor())
            .collect();
        let group = if !below_min.is_empty() {
            if below_min.iter().any(|&l| queues[l].is_empty()) {
                return Err(Error::Stuck { slot: j });
            }
            best_of(&below_min, &queues)
        } else {
            let below_max: Vec<usize> = (0..p)
                .filter(|&l| (counts[l] as f64) < (alpha[l] * k - 1e-9).ceil())
                .collect();
            best_of(&below_max, &queues)
        };
        let Some(l) = group else {
            return Err(Error::Stuck { slot: j });
        };
        slots.push(queues[l].pop().expect("nonempty queue"));
        counts[l] += 1;
    }
    Ok(Ranking::from_slots_unchecked(slots))
}

fn exact_spec(upper: &UpperBounds) -> Result<FairnessSpec> {
    FairnessSpec::new(
        upper.clone(),
        upper.p(),
        GammaMode::Explicit {
            gamma: vec![0.0; upper.n()],
        },
        SpecParams::default(),
        None,
    )
}

/// The decomposed relaxation with group membership treated as certain.
pub fn sj_combination(inst: &Instance, groups: &GroupSample, upper: &UpperBounds) -> Result<ConvexCombination> {
    check_groups(inst, groups)?;
    let spec = exact_spec(upper)?;
    let x = relaxation_over(inst, &groups.to_probabilities(), &spec)?.into_assignment()?;
    bvn_decompose(&x)
}

/// One ranking drawn from [`sj_combination`] with probability equal to its weight.
pub fn sj_sample(inst: &Instance, groups: &GroupSample, upper: &UpperBounds, seed: u64) -> Result<Ranking> {
    let comb = sj_combination(inst, groups, upper)?;
    let mut rng = rng_from(derive_seed(seed, STREAM_SAMPLE));
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (w, r) in comb.terms() {
        acc += w;
        if u < acc {
            return Ok(r.clone());
        }
    }
    Ok(comb.terms().last().expect("nonempty combination").1.clone())
}

/// Fractional selection `x in [0,1]^m`, `sum x = n`, maximizing `sum score_i x_i`
/// subject to `sum_i P_il x_i <= (phi/p) n (1 + (1 - 1/(2 sqrt c)) gamma_n)`.
pub fn mc_selection(inst: &Instance, spec: &FairnessSpec, phi: f64) -> Result<Option<Vec<f64>>> {
    let (m, n, p) = (inst.m(), inst.n(), inst.p());
    if !(phi >= 1.0 && phi <= p as f64) {
        return Err(Error::PhiOutOfRange { phi, p });
    }
    if spec.n() != n || spec.p() != p {
        return Err(Error::DimensionMismatch("spec does not match the instance".into()));
    }
    let bound = phi / p as f64 * n as f64 * (1.0 + relaxation_factor(spec.c()) * spec.gamma()[n - 1]);
    let scores = Array2::from_shape_fn((m, 1), |(i, _)| inst.item_score(i, 0));
    let keep = dominance::surviving_items(&scores, inst.probs(), n);
    let k = keep.len();
    // rows: selection size, one bound per group, one cap per kept item
    let mut rows = vec![(RowKind::Eq, n as f64)];
    rows.extend(std::iter::repeat_n((RowKind::Le, bound), p));
    rows.extend(std::iter::repeat_n((RowKind::Le, 1.0), k));
    let columns = keep
        .iter()
        .enumerate()
        .map(|(r, &i)| {
            let mut col = vec![(0, 1.0)];
            col.extend((0..p).filter(|&l| inst.probs()[[i, l]] != 0.0).map(|l| (1 + l, inst.probs()[[i, l]])));
            col.push((1 + p + r, 1.0));
            col
        })
        .collect();
    let lp = LinearProgram {
        objective: keep.iter().map(|&i| scores[[i, 0]]).collect(),
        columns,
        rows,
    };
    match simplex::solve(&lp, &SimplexOptions::default())? {
        SimplexOutcome::Infeasible => Ok(None),
        SimplexOutcome::Unbounded => Err(Error::NumericalFailure("selection LP unbounded".into())),
        SimplexOutcome::Optimal { x, .. } => {
            let mut full = vec![0.0; m];
            for (r, &i) in keep.iter().enumerate() {
                full[i] = x[r].clamp(0.0, 1.0);
            }
            Ok(Some(full))
        }
    }
}

/// Systematic sampling: exactly `round(sum x)` indices, index `i` with probability `x_i`.
fn systematic_sample<R: Rng + ?Sized>(x: &[f64], rng: &mut R) -> Vec<usize> {
    let total: f64 = x.iter().sum();
    let count = total.round() as usize;
    let u: f64 = rng.random();
    let mut picked = Vec::with_capacity(count);
    let mut acc = 0.0;
    let mut next = 0usize;
    for (i, &xi) in x.iter().enumerate() {
        acc += xi;
        while next < count && (next as f64 + u) < acc - 1e-12 {
            if picked.last() != Some(&i) {
                picked.push(i);
            }
            next += 1;
        }
    }
    // floating slack at the tail
    let mut i = x.len();
    while picked.len() < count && i > 0 {
        i -= 1;
        if x[i] > 0.0 && !picked.contains(&i) {
            picked.push(i);
        }
    }
    picked
}

/// Select a subset by the one-position relaxation, round it by systematic
/// sampling, then order the chosen items by score.
pub fn mc_baseline(inst: &Instance, spec: &FairnessSpec, phi: f64, seed: u64) -> Result<Ranking> {
    let x = mc_selection(inst, spec, phi)?.ok_or(Error::Infeasible)?;
    let chosen = systematic_sample(&x, &mut rng_from(derive_seed(seed, STREAM_SAMPLE)));
    if chosen.len() != inst.n() {
        return Err(Error::NumericalFailure(format!(
            "selection rounded to {} items, expected {}",
            chosen.len(),
            inst.n()
        )));
    }
    Ok(Ranking::from_slots_unchecked(by_score(inst, 0, chosen.into_iter())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairspec::{u_equal_representation, u_phi};
    use crate::types::utility;
    use ndarray::array;

    fn values_instance(w: Vec<f64>, n: usize, labels: &[usize]) -> (Instance, GroupSample) {
        let g = GroupSample::from_labels(labels, 2).unwrap();
        let inst = Instance::from_values(w, n, g.to_probabilities(), Structure::Disjoint, None).unwrap();
        (inst, g)
    }

    #[test]
    fn uncons_sorts_by_value() {
        let (inst, _) = values_instance(vec![3.0, 1.0, 2.0], 2, &[0, 0, 1]);
        assert_eq!(uncons(&inst).slots(), &[0, 2]);
        let (inst, _) = values_instance(vec![1.0, 2.0, 2.0], 2, &[0, 0, 1]);
        assert_eq!(uncons(&inst).slots(), &[1, 2]);
    }

    #[test]
    fn uncons_without_values_uses_assignment() {
        let inst = Instance::new(
            array![[5.0, 1.0], [1.0, 5.0], [0.0, 0.0]],
            array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            Structure::Disjoint,
            None,
        )
        .unwrap();
        assert_eq!(uncons(&inst).slots(), &[0, 1]);
    }

    #[test]
    fn csv_greedy_alternates_under_equal_representation() {
        let (inst, g) = values_instance(vec![8.0, 7.0, 6.0, 5.0, 2.0, 1.0], 4, &[0, 0, 0, 0, 1, 1]);
        let u = u_equal_representation(4, 2).unwrap();
        let r = csv_greedy(&inst, &g, u.matrix().view()).unwrap();
        assert_eq!(r.slots(), &[0, 4, 1, 5]);
        let slack = u_phi(4, 2, 2.0).unwrap();
        assert_eq!(csv_greedy(&inst, &g, slack.matrix().view()).unwrap(), uncons(&inst));
        let zero = Array2::zeros((4, 2));
        assert_eq!(csv_greedy(&inst, &g, zero.view()), Err(Error::Stuck { slot: 0 }));
    }

    #[test]
    fn detgreedy_balances_even_prefixes() {
        let (inst, g) = values_instance(vec![8.0, 7.0, 6.0, 5.0, 2.0, 1.0, 0.5, 0.1], 6, &[0, 0, 0, 0, 1, 1, 1, 1]);
        let r = gak_detgreedy(&inst, &g, &[0.5, 0.5]).unwrap();
        let mut c = [0, 0];
        for (j, &i) in r.slots().iter().enumerate() {
            c[g.label(i).unwrap()] += 1;
            if (j + 1) % 2 == 0 {
                assert_eq!(c, [j.div_ceil(2); 2]);
            }
        }
    }

    #[test]
    fn detgreedy_single_group_is_uncons() {
        let g = GroupSample::from_labels(&[0, 0, 0], 1).unwrap();
        let inst = Instance::from_values(vec![1.0, 3.0, 2.0], 2, g.to_probabilities(), Structure::Disjoint, None).unwrap();
        assert_eq!(gak_detgreedy(&inst, &g, &[1.0]).unwrap(), uncons(&inst));
    }

    #[test]
    fn detgreedy_empty_group_is_stuck() {
        let (inst, g) = values_instance(vec![3.0, 2.0, 1.0], 3, &[0, 0, 0]);
        assert!(matches!(gak_detgreedy(&inst, &g, &[0.5, 0.5]), Err(Error::Stuck { .. })));
    }

    #[test]
    fn bayes_tie_goes_low() {
        let g = impute_bayes(&array![[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]], Structure::Disjoint).unwrap();
        assert_eq!(g.labels().unwrap(), vec![0, 0, 1]);
    }

    #[test]
    fn slack_nresilient_matches_uncons_utility() {
        let (inst, _) = values_instance(vec![0.9, 0.1, 0.7, 0.4, 0.3], 3, &[0, 1, 0, 1, 0]);
        let u = u_phi(3, 2, 2.0).unwrap();
        let spec = FairnessSpec::new(u, 2, GammaMode::Heuristic, SpecParams::default(), None).unwrap();
        let r = nresilient(&inst, &spec, 1).unwrap();
        let a = utility(&r, inst.utilities()).unwrap();
        let b = utility(&uncons(&inst), inst.utilities()).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn integral_sj_is_deterministic() {
        let (inst, g) = values_instance(vec![4.0, 3.0, 2.0, 1.0], 2, &[0, 0, 1, 1]);
        let u = u_equal_representation(2, 2).unwrap();
        let first = sj_sample(&inst, &g, &u, 0).unwrap();
        for s in 1..10 {
            assert_eq!(sj_sample(&inst, &g, &u, s).unwrap(), first);
        }
    }

    #[test]
    fn systematic_sampling_hits_exact_count() {
        let x = vec![0.5, 0.5, 1.0, 0.25, 0.75];
        let mut rng = rng_from(1);
        for _ in 0..100 {
            let s = systematic_sample(&x, &mut rng);
            assert_eq!(s.len(), 3);
            assert!(s.contains(&2));
        }
    }

    #[test]
    fn mc_slack_is_uncons() {
        let (inst, _) = values_instance(vec![0.9, 0.1, 0.7, 0.4, 0.3], 3, &[0, 1, 0, 1, 0]);
        let spec = FairnessSpec::new(u_phi(3, 2, 2.0).unwrap(), 2, GammaMode::Heuristic, SpecParams::default(), None).unwrap();
        assert_eq!(mc_baseline(&inst, &spec, 2.0, 4).unwrap(), uncons(&inst));
    }
}
