//! Fairness and utility metrics over realized groups, and the Monte Carlo
//! estimator of prefix-bound violation probability.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noiselab::sample_groups_with;
use crate::rankers::uncons;
use crate::rng::{derive_seed, rng_from};
use crate::types::{log, utility, GroupSample, Instance, Ranking, Structure, UpperBounds};

/// Checkpoint stride of the weighted metrics.
pub const CHECKPOINT_STEP: usize = 5;

/// `{5, 10, 15, ...} ∩ [1, n]`, 1-based.
pub fn checkpoints(n: usize) -> Result<Vec<usize>> {
    if n < CHECKPOINT_STEP {
        return Err(Error::EmptyCheckpointSet);
    }
    Ok((CHECKPOINT_STEP..=n).step_by(CHECKPOINT_STEP).collect())
}

/// `counts[k-1][l]`: members of group `l` among the first `k` slots.
fn prefix_counts(r: &Ranking, truth: &GroupSample, n: usize) -> Result<Vec<Vec<f64>>> {
    if r.len() < n {
        return Err(Error::DimensionMismatch(format!("ranking has {} slots, need {n}", r.len())));
    }
    if let Some(&bad) = r.slots()[..n].iter().find(|&&i| i >= truth.m()) {
        return Err(Error::DimensionMismatch(format!("item {bad} is not covered by the groups")));
    }
    let p = truth.p();
    let mut acc = vec![0.0; p];
    let mut out = Vec::with_capacity(n);
    for &i in &r.slots()[..n] {
        for (l, a) in acc.iter_mut().enumerate() {
            if truth.contains(i, l) {
                *a += 1.0;
            }
        }
        out.push(acc.clone());
    }
    Ok(out)
}

fn max_gap(c: &[f64]) -> f64 {
    let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// `1 - (1/Z) sum_k (1/ln k) max_{l,q} |c_l(k) - c_q(k)|`, `Z = sum_k k/ln k`.
pub fn weighted_rd(r: &Ranking, truth: &GroupSample, n: usize) -> Result<f64> {
    let ks = checkpoints(n)?;
    let counts = prefix_counts(r, truth, n)?;
    let z: f64 = ks.iter().map(|&k| k as f64 / log(k as f64)).sum();
    let s: f64 = ks.iter().map(|&k| max_gap(&counts[k - 1]) / log(k as f64)).sum();
    Ok((1.0 - s / z).clamp(0.0, 1.0))
}

/// `(1/Z') sum_k (1/ln k) min_l c_l(k) / max_l c_l(k)`, `Z' = sum_k 1/ln k`.
/// A checkpoint where no group appears scores 1.
pub fn weighted_sl(r: &Ranking, truth: &GroupSample, n: usize) -> Result<f64> {
    let ks = checkpoints(n)?;
    let counts = prefix_counts(r, truth, n)?;
    let z: f64 = ks.iter().map(|&k| 1.0 / log(k as f64)).sum();
    let s: f64 = ks
        .iter()
        .map(|&k| {
            let c = &counts[k - 1];
            let hi = c.iter().cloned().fold(0.0, f64::max);
            let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
            let ratio = if hi > 0.0 { lo / hi } else { 1.0 };
            ratio / log(k as f64)
        })
        .sum();
    Ok((s / z).clamp(0.0, 1.0))
}

/// Risk difference against proportional representation: counts are rescaled
/// by `n / |G_l|`. The normalizer is the largest attainable rescaled gap, all
/// of a prefix drawn from one group, so the value lies in `[0, 1]`.
pub fn prop_rd(r: &Ranking, truth: &GroupSample, n: usize, group_sizes: &[usize]) -> Result<f64> {
    let ks = checkpoints(n)?;
    if group_sizes.len() != truth.p() {
        return Err(Error::DimensionMismatch(format!(
            "{} group sizes for {} groups",
            group_sizes.len(),
            truth.p()
        )));
    }
    if let Some(l) = group_sizes.iter().position(|&s| s == 0) {
        return Err(Error::ZeroGroupSize(l));
    }
    let counts = prefix_counts(r, truth, n)?;
    let nf = n as f64;
    let scale: Vec<f64> = group_sizes.iter().map(|&s| nf / s as f64).collect();
    let (mut num, mut z) = (0.0, 0.0);
    for &k in &ks {
        let wk = 1.0 / log(k as f64);
        let scaled: Vec<f64> = counts[k - 1].iter().zip(&scale).map(|(c, s)| c * s).collect();
        num += wk * max_gap(&scaled);
        z += wk
            * group_sizes
                .iter()
                .zip(&scale)
                .map(|(&g, s)| k.min(g) as f64 * s)
                .fold(0.0, f64::max);
    }
    Ok((1.0 - num / z).clamp(0.0, 1.0))
}

/// `<R, W>` over the best attainable `<R', W>`; 1 when nothing has utility.
pub fn ndcg(r: &Ranking, inst: &Instance) -> Result<f64> {
    let got = utility(r, inst.utilities())?;
    let best = utility(&uncons(inst), inst.utilities())?;
    Ok(if best > 0.0 { (got / best).clamp(0.0, 1.0) } else { 1.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetricReport {
    pub rd: f64,
    pub sl: f64,
    pub prop_rd: f64,
    pub ndcg: f64,
    pub raw_utility: f64,
    /// 1-based.
    pub checkpoints: Vec<usize>,
}

/// All metrics of `r` against `truth`; group sizes for the proportional
/// variant are counted over every item.
pub fn evaluate(r: &Ranking, inst: &Instance, truth: &GroupSample) -> Result<MetricReport> {
    let n = inst.n();
    Ok(MetricReport {
        rd: weighted_rd(r, truth, n)?,
        sl: weighted_sl(r, truth, n)?,
        prop_rd: prop_rd(r, truth, n, &truth.sizes())?,
        ndcg: ndcg(r, inst)?,
        raw_utility: utility(r, inst.utilities())?,
        checkpoints: checkpoints(n)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PositionStat {
    /// 1-based.
    pub k: usize,
    /// 1-based.
    pub group: usize,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ViolationProbe {
    pub epsilon: Vec<f64>,
    pub trials: usize,
    /// Share of trials with at least one prefix over `U[k][l] (1 + epsilon[k])`.
    pub delta_hat: f64,
    pub std_error: f64,
    /// `frequency[k][l]`: share of trials in which that single prefix bound fails.
    pub frequency: Array2<f64>,
    /// The most frequently violated prefix bound.
    pub worst: PositionStat,
}

impl ViolationProbe {
    /// Violation frequency of one prefix bound, 0-based indices.
    pub fn at(&self, k: usize, l: usize) -> f64 {
        self.frequency[[k, l]]
    }
}

/// Bounds, tolerances and weights of one probe.
#[derive(Debug, Clone, Copy)]
pub struct ProbeTarget<'a> {
    pub upper: &'a UpperBounds,
    pub epsilon: &'a [f64],
    /// Position weights `v_j`; plain counts when absent.
    pub discounts: Option<&'a [f64]>,
}

impl ProbeTarget<'_> {
    fn check(&self, n: usize, p: usize) -> Result<()> {
        if self.upper.n() < n || self.upper.p() != p {
            return Err(Error::DimensionMismatch(format!(
                "U is {}x{}, ranking needs {n}x{p}",
                self.upper.n(),
                self.upper.p()
            )));
        }
        if self.epsilon.len() < n {
            return Err(Error::DimensionMismatch(format!("epsilon has {} entries, need {n}", self.epsilon.len())));
        }
        if self.discounts.is_some_and(|d| d.len() < n) {
            return Err(Error::DimensionMismatch("too few position weights".into()));
        }
        Ok(())
    }

    /// Marks every `(k, l)` whose bound fails; true if any does.
    fn mark(&self, slots_groups: impl Iterator<Item = Vec<bool>>, p: usize, hits: &mut [u32]) -> bool {
        let mut acc = vec![0.0; p];
        let mut any = false;
        for (k, member) in slots_groups.enumerate() {
            let v = self.discounts.map_or(1.0, |d| d[k]);
            for l in 0..p {
                if member[l] {
                    acc[l] += v;
                }
                if acc[l] > self.upper.get(k, l) * (1.0 + self.epsilon[k]) + 1e-12 {
                    hits[k * p + l] += 1;
                    any = true;
                }
            }
        }
        any
    }
}

fn ranked_rows(r: &Ranking, probs: &Array2<f64>) -> Result<Array2<f64>> {
    if let Some(&bad) = r.slots().iter().find(|&&i| i >= probs.nrows()) {
        return Err(Error::DimensionMismatch(format!("item {bad} has no probability row")));
    }
    Ok(Array2::from_shape_fn((r.len(), probs.ncols()), |(j, l)| probs[[r.item_at(j), l]]))
}

fn finish(target: &ProbeTarget<'_>, n: usize, p: usize, trials: usize, bad: f64, hits: &[f64]) -> ViolationProbe {
    let delta_hat = bad;
    let frequency = Array2::from_shape_fn((n, p), |(k, l)| hits[k * p + l]);
    let (mut wk, mut wl) = (0, 0);
    for ((k, l), &f) in frequency.indexed_iter() {
        if f > frequency[[wk, wl]] {
            (wk, wl) = (k, l);
        }
    }
    ViolationProbe {
        epsilon: target.epsilon[..n].to_vec(),
        trials,
        delta_hat,
        std_error: (delta_hat * (1.0 - delta_hat) / trials.max(1) as f64).sqrt(),
        worst: PositionStat {
            k: wk + 1,
            group: wl + 1,
            frequency: frequency[[wk, wl]],
        },
        frequency,
    }
}

/// Monte Carlo estimate of how often `r` breaks some bound
/// `Z(k, l) <= U[k][l] (1 + epsilon[k])` when groups are drawn from `P`.
/// Trial `t` uses seed `derive_seed(seed, t)`, so the result does not depend
/// on the thread count.
pub fn violation_probe(
    r: &Ranking,
    probs: &Array2<f64>,
    structure: Structure,
    target: ProbeTarget<'_>,
    trials: usize,
    seed: u64,
) -> Result<ViolationProbe> {
    if trials == 0 {
        return Err(Error::InvalidSpec("need at least one trial".into()));
    }
    let (n, p) = (r.len(), probs.ncols());
    target.check(n, p)?;
    let rows = ranked_rows(r, probs)?;
    let (bad, hits) = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<(u64, Vec<u32>)> {
            let mut rng = rng_from(derive_seed(seed, t));
            let g = sample_groups_with(&rows, structure, &mut rng)?;
            let mut hits = vec![0u32; n * p];
            let any = target.mark((0..n).map(|j| g.membership().row(j).to_vec()), p, &mut hits);
            Ok((any as u64, hits))
        })
        .try_reduce(
            || (0, vec![0u32; n * p]),
            |(a, mut ha), (b, hb)| {
                ha.iter_mut().zip(hb).for_each(|(x, y)| *x += y);
                Ok((a + b, ha))
            },
        )?;
    let tf = trials as f64;
    let freq: Vec<f64> = hits.iter().map(|&h| h as f64 / tf).collect();
    Ok(finish(&target, n, p, trials, bad as f64 / tf, &freq))
}

/// Largest joint outcome space [`exact_violation`] will enumerate.
pub const EXACT_LIMIT: usize = 1 << 20;

/// The probability [`violation_probe`] estimates, by enumerating every joint
/// group outcome of the ranked items. `trials` in the result is 0 and the
/// standard error is 0.
pub fn exact_violation(
    r: &Ranking,
    probs: &Array2<f64>,
    structure: Structure,
    target: ProbeTarget<'_>,
) -> Result<ViolationProbe> {
    let (n, p) = (r.len(), probs.ncols());
    target.check(n, p)?;
    let rows = ranked_rows(r, probs)?;
    // per item: list of (membership, probability) outcomes
    let outcomes: Vec<Vec<(Vec<bool>, f64)>> = (0..n)
        .map(|j| {
            if structure.is_categorical() {
                (0..p)
                    .filter(|&l| rows[[j, l]] > 0.0)
                    .map(|l| ((0..p).map(|q| q == l).collect(), rows[[j, l]]))
                    .collect()
            } else {
                (0..1usize << p)
                    .map(|mask| {
                        let member: Vec<bool> = (0..p).map(|l| mask >> l & 1 == 1).collect();
                        let pr = (0..p)
                            .map(|l| if member[l] { rows[[j, l]] } else { 1.0 - rows[[j, l]] })
                            .product();
                        (member, pr)
                    })
                    .filter(|(_, pr)| *pr > 0.0)
                    .collect()
            }
        })
        .collect();
    let total = outcomes
        .iter()
        .try_fold(1usize, |acc, o| acc.checked_mul(o.len().max(1)).filter(|&v| v <= EXACT_LIMIT));
    if total.is_none() {
        return Err(Error::TooLarge { m: probs.nrows(), n });
    }
    let mut idx = vec![0usize; n];
    let mut bad = 0.0;
    let mut freq = vec![0.0; n * p];
    let mut hits = vec![0u32; n * p];
    loop {
        let pr: f64 = (0..n).map(|j| outcomes[j][idx[j]].1).product();
        hits.iter_mut().for_each(|h| *h = 0);
        if target.mark((0..n).map(|j| outcomes[j][idx[j]].0.clone()), p, &mut hits) {
            bad += pr;
        }
        for (f, &h) in freq.iter_mut().zip(&hits) {
            if h > 0 {
                *f += pr;
            }
        }
        // odometer over the outcome lists
        let mut j = 0;
        while j < n {
            idx[j] += 1;
            if idx[j] < outcomes[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == n {
            break;
        }
    }
    let mut probe = finish(&target, n, p, 0, bad.min(1.0), &freq);
    probe.std_error = 0.0;
    Ok(probe)
}
