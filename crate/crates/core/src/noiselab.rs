//! The noise model and every instance generator.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};
use crate::types::{GroupSample, Instance, Structure, UpperBounds};

const STREAM_TRUTH: u64 = 11;
const STREAM_FLIP: u64 = 12;

/// Draws one group sample from `P`, items independent. Categorical rows pick
/// one label; independent marginals draw each entry as its own Bernoulli.
pub fn sample_groups(probs: &Array2<f64>, structure: Structure, seed: u64) -> Result<GroupSample> {
    sample_groups_with(probs, structure, &mut rng_from(seed))
}

/// [`sample_groups`] driven by a caller-owned generator.
pub fn sample_groups_with<R: Rng + ?Sized>(
    probs: &Array2<f64>,
    structure: Structure,
    rng: &mut R,
) -> Result<GroupSample> {
    let (m, p) = probs.dim();
    let mut membership = Array2::from_elem((m, p), false);
    for i in 0..m {
        let row = probs.row(i);
        if structure.is_categorical() {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut label = None;
            for (l, &v) in row.iter().enumerate() {
                acc += v;
                if u < acc {
                    label = Some(l);
                    break;
                }
            }
            // rounding slack: fall back to the last group with mass
            let label = label
                .or_else(|| row.iter().rposition(|&v| v > 0.0))
                .ok_or(Error::RowSumViolation { row: i, sum: 0.0 })?;
            membership[[i, label]] = true;
        } else {
            for (l, &v) in row.iter().enumerate() {
                membership[[i, l]] = rng.random::<f64>() < v;
            }
        }
    }
    Ok(GroupSample::new(membership))
}

/// Label-flipping mechanism. With `flip` absent, a label moves with
/// probability `eta`, uniformly to one of the other groups.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedResponseParams {
    pub eta: f64,
    /// Row-stochastic: `flip[a][b]` is the chance true group `a` reports `b`.
    pub flip: Option<Array2<f64>>,
}

impl RandomizedResponseParams {
    pub fn symmetric(eta: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&eta) {
            return Err(Error::EtaTooLarge(eta));
        }
        Ok(Self { eta, flip: None })
    }

    /// Explicit flip matrix; `eta` is set to its largest off-diagonal row mass.
    pub fn with_matrix(flip: Array2<f64>) -> Result<Self> {
        let p = flip.nrows();
        if flip.ncols() != p {
            return Err(Error::DimensionMismatch("flip matrix must be square".into()));
        }
        for (a, row) in flip.rows().into_iter().enumerate() {
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) || (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::RowSumViolation { row: a, sum: row.sum() });
            }
        }
        let eta = (0..p).map(|a| 1.0 - flip[[a, a]]).fold(0.0, f64::max);
        if eta >= 0.5 {
            return Err(Error::EtaTooLarge(eta));
        }
        Ok(Self { eta, flip: Some(flip) })
    }

    pub fn matrix(&self, p: usize) -> Result<Array2<f64>> {
        match &self.flip {
            Some(f) if f.nrows() == p => Ok(f.clone()),
            Some(f) => Err(Error::DimensionMismatch(format!(
                "flip matrix is {}x{}, expected {p}x{p}",
                f.nrows(),
                f.ncols()
            ))),
            None if p < 2 => Err(Error::DimensionMismatch("need at least two groups".into())),
            None => Ok(Array2::from_shape_fn((p, p), |(a, b)| {
                if a == b {
                    1.0 - self.eta
                } else {
                    self.eta / (p - 1) as f64
                }
            })),
        }
    }
}

/// Independently re-labels each item of a partition through the flip matrix.
pub fn flip_labels(truth: &GroupSample, params: &RandomizedResponseParams, seed: u64) -> Result<GroupSample> {
    let p = truth.p();
    let labels = truth.labels()?;
    let flip = params.matrix(p)?;
    let mut rng = rng_from(derive_seed(seed, STREAM_FLIP));
    let noisy: Vec<usize> = labels
        .iter()
        .map(|&a| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for b in 0..p {
                acc += flip[[a, b]];
                if u < acc {
                    return b;
                }
            }
            (0..p).rev().find(|&b| flip[[a, b]] > 0.0).unwrap_or(a)
        })
        .collect();
    GroupSample::from_labels(&noisy, p)
}

/// Membership probabilities implied by noisy labels and (true or estimated)
/// group sizes. Two groups: `P[i][b] = (1 - eta) |G_b| / |N_b|` for an item
/// reported in `b`, the other entry its complement. More groups: the row
/// `flip[a][b] |G_a| / |N_b|`, normalized. Entries are clamped to `[0, 1]`.
pub fn posterior_probs(
    noisy: &GroupSample,
    params: &RandomizedResponseParams,
    group_sizes: &[f64],
) -> Result<Array2<f64>> {
    let p = noisy.p();
    if group_sizes.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} group sizes for {p} groups",
            group_sizes.len()
        )));
    }
    let labels = noisy.labels()?;
    let counts = noisy.sizes();
    let flip = params.matrix(p)?;
    let mut out = Array2::zeros((noisy.m(), p));
    for (i, &b) in labels.iter().enumerate() {
        if counts[b] == 0 {
            return Err(Error::EmptyNoisyGroup(b));
        }
        if p == 2 {
            let own = ((1.0 - params.eta) * group_sizes[b] / counts[b] as f64).clamp(0.0, 1.0);
            out[[i, b]] = own;
            out[[i, 1 - b]] = 1.0 - own;
        } else {
            let raw: Vec<f64> = (0..p)
                .map(|a| (flip[[a, b]] * group_sizes[a].max(0.0) / counts[b] as f64).clamp(0.0, 1.0))
                .collect();
            let total: f64 = raw.iter().sum();
            for a in 0..p {
                out[[i, a]] = if total > 0.0 {
                    raw[a] / total
                } else if a == b {
                    1.0
                } else {
                    0.0
                };
            }
        }
    }
    if let Some(b) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyNoisyGroup(b));
    }
    Ok(out)
}

/// Flips `truth` and derives `P` from the true group sizes.
pub fn randomized_response(
    truth: &GroupSample,
    params: &RandomizedResponseParams,
    seed: u64,
) -> Result<(GroupSample, Array2<f64>)> {
    let noisy = flip_labels(truth, params, seed)?;
    let sizes: Vec<f64> = truth.sizes().into_iter().map(|s| s as f64).collect();
    let probs = posterior_probs(&noisy, params, &sizes)?;
    Ok((noisy, probs))
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..0.5).contains(&eta) {
        Ok(())
    } else {
        Err(Error::EtaTooLarge(eta))
    }
}

/// `((1 - eta) / (1 - 2 eta)) ((1 - eta) |N_1| - eta |N_2|)`.
///
/// Its mean under symmetric flipping is `(1 - eta) |G_1|`; see
/// [`estimate_group_size_unbiased`] for an estimator centred on `|G_1|`.
pub fn estimate_group_size(size_n1: f64, size_n2: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    Ok((1.0 - eta) / (1.0 - 2.0 * eta) * ((1.0 - eta) * size_n1 - eta * size_n2))
}

/// `((1 - eta) |N_1| - eta |N_2|) / (1 - 2 eta)`, unbiased for `|G_1|`.
pub fn estimate_group_size_unbiased(size_n1: f64, size_n2: f64, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    Ok(((1.0 - eta) * size_n1 - eta * size_n2) / (1.0 - 2.0 * eta))
}

/// Two-component Gaussian mixture for `P_i1`, interpolated toward point
/// masses by `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct FdrSynthSpec {
    pub m: usize,
    pub n: usize,
    pub tau: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    /// Weight of the first component.
    pub majority: f64,
    /// Where each component's mean moves as `tau -> 1`.
    pub shift1: f64,
    pub shift2: f64,
}

impl FdrSynthSpec {
    pub fn new(m: usize, n: usize, tau: f64) -> Result<Self> {
        let s = Self {
            m,
            n,
            tau,
            mu1: 0.95,
            mu2: 0.45,
            sigma1: 0.02,
            sigma2: 0.1,
            majority: 0.6,
            shift1: 1.0,
            shift2: 0.0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let s = Self { tau, ..self.clone() };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::InvalidSpec(format!("tau = {} is outside [0, 1]", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.majority) {
            return Err(Error::InvalidSpec("majority weight must be in [0, 1]".into()));
        }
        if self.sigma1 < 0.0 || self.sigma2 < 0.0 {
            return Err(Error::InvalidSpec("standard deviations must be nonnegative".into()));
        }
        if self.n == 0 || self.n > self.m {
            return Err(Error::DimensionMismatch(format!("need 1 <= n <= m, got n = {}, m = {}", self.n, self.m)));
        }
        Ok(())
    }

    /// `(weight, mean, sd)` of both components at this `tau`.
    pub fn components(&self) -> [(f64, f64, f64); 2] {
        let t = self.tau;
        [
            (self.majority, (1.0 - t) * self.mu1 + t * self.shift1, (1.0 - t) * self.sigma1),
            (1.0 - self.majority, (1.0 - t) * self.mu2 + t * self.shift2, (1.0 - t) * self.sigma2),
        ]
    }
}

fn draw_clamped<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64) -> f64 {
    let x = if sigma > 0.0 {
        Normal::new(mu, sigma).expect("finite parameters").sample(rng)
    } else {
        mu
    };
    x.clamp(0.0, 1.0)
}

/// Values `w ~ U[0,1]`, `P_i1` from the mixture (clamped), truth sampled from `P`.
pub fn synth_nonuniform_fdr(spec: &FdrSynthSpec, seed: u64) -> Result<Instance> {
    spec.validate()?;
    let mut rng = rng_from(seed);
    let comps = spec.components();
    let mut values = Vec::with_capacity(spec.m);
    let mut probs = Array2::zeros((spec.m, 2));
    for i in 0..spec.m {
        values.push(rng.random::<f64>());
        let (_, mu, sd) = if rng.random::<f64>() < comps[0].0 { comps[0] } else { comps[1] };
        let q = draw_clamped(&mut rng, mu, sd);
        probs[[i, 0]] = q;
        probs[[i, 1]] = 1.0 - q;
    }
    let truth = sample_groups(&probs, Structure::Disjoint, derive_seed(seed, STREAM_TRUTH))?;
    Instance::from_values(values, spec.n, probs, Structure::Disjoint, Some(truth))
}

fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// `E[g(clamp(X, 0, 1))]` for `X ~ N(mu, sigma)` by piecewise Simpson, split
/// at the clamp points and at `breaks`.
pub fn clamped_normal_expectation(mu: f64, sigma: f64, g: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
    if sigma <= 0.0 {
        return g(mu.clamp(0.0, 1.0));
    }
    let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
    let mut pts = vec![lo, hi];
    pts.extend([0.0, 1.0].iter().chain(breaks).filter(|&&b| b > lo && b < hi));
    pts.sort_by(f64::total_cmp);
    let steps = 2000;
    let mut total = 0.0;
    for seg in pts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let h = (b - a) / steps as f64;
        // evaluate just inside the segment so a break's side is unambiguous
        let f = |x: f64| {
            let inner = x.clamp(a + 1e-12 * (b - a), b - 1e-12 * (b - a));
            normal_pdf(x, mu, sigma) * g(inner.clamp(0.0, 1.0))
        };
        let mut s = f(a) + f(b);
        for k in 1..steps {
            let x = a + k as f64 * h;
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        total += s * h / 3.0;
    }
    total
}

/// False-discovery rates `(FDR_1, FDR_2)` of most-likely-group imputation
/// under the mixture, computed by quadrature.
pub fn fdr_analytic(spec: &FdrSynthSpec) -> (f64, f64) {
    let mut num = [0.0; 2];
    let mut den = [0.0; 2];
    for (w, mu, sd) in spec.components() {
        let e = |g: &dyn Fn(f64) -> f64| w * clamped_normal_expectation(mu, sd, g, &[0.5]);
        num[0] += e(&|q| if q >= 0.5 { 1.0 - q } else { 0.0 });
        den[0] += e(&|q| if q >= 0.5 { 1.0 } else { 0.0 });
        num[1] += e(&|q| if q < 0.5 { q } else { 0.0 });
        den[1] += e(&|q| if q < 0.5 { 1.0 } else { 0.0 });
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    (ratio(num[0], den[0]), ratio(num[1], den[1]))
}

/// `FDR_2 - FDR_1` at the spec's `tau`.
pub fn fdr_gap(spec: &FdrSynthSpec) -> f64 {
    let (a, b) = fdr_analytic(spec);
    b - a
}

/// Grid resolution used to locate the peak of [`fdr_gap`].
const GAP_GRID: usize = 200;

/// Smallest `tau` with `fdr_gap = target`. The gap first rises with `tau`,
/// peaks, then falls to 0 at `tau = 1`; targets above the peak return the
/// peak's `tau`, targets at or below 0 return 1.
pub fn tau_for_gap(base: &FdrSynthSpec, target: f64) -> Result<f64> {
    let gap = |t: f64| base.with_tau(t).map(|s| fdr_gap(&s));
    let mut peak = (0.0, gap(0.0)?);
    for i in 1..=GAP_GRID {
        let t = i as f64 / GAP_GRID as f64;
        let g = gap(t)?;
        if g > peak.1 {
            peak = (t, g);
        }
    }
    if target >= peak.1 {
        return Ok(peak.0);
    }
    if target <= 0.0 {
        return Ok(1.0);
    }
    // rising branch when reachable there, otherwise the falling branch
    let (mut lo, mut hi, rising) = if target >= gap(0.0)? {
        (0.0, peak.0, true)
    } else {
        (peak.0, 1.0, false)
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if (gap(mid)? < target) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Per-group false-discovery rate of most-likely-group imputation against a
/// realized partition. Groups nobody is imputed into report 0.
pub fn measured_fdr(probs: &Array2<f64>, truth: &GroupSample) -> Result<Vec<f64>> {
    let imputed = crate::rankers::impute_bayes(probs, Structure::Disjoint)?.labels()?;
    let actual = truth.labels()?;
    let p = probs.ncols();
    let mut wrong = vec![0usize; p];
    let mut total = vec![0usize; p];
    for (&a, &b) in imputed.iter().zip(&actual) {
        total[a] += 1;
        if a != b {
            wrong[a] += 1;
        }
    }
    Ok((0..p)
        .map(|l| if total[l] > 0 { wrong[l] as f64 / total[l] as f64 } else { 0.0 })
        .collect())
}

fn multigroup_params(tau: f64) -> (f64, f64) {
    ((1.0 - tau) * 0.95 + tau * 0.55, (1.0 - tau) * 0.02 + tau * 0.1)
}

/// Expected misattribution `E[min(q, 1 - q)]` of a multi-group construction
/// group at `tau`.
pub fn multigroup_error(tau: f64) -> f64 {
    let (mu, sd) = multigroup_params(tau);
    clamped_normal_expectation(mu, sd, |q| q.min(1.0 - q), &[0.5])
}

/// `tau` with [`multigroup_error`] equal to `target`, saturating at the ends.
pub fn multigroup_tau(target: f64) -> f64 {
    if target <= multigroup_error(0.0) {
        return 0.0;
    }
    if target >= multigroup_error(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if multigroup_error(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Construction group of item `i` in [`synth_multigroup`]: `i mod p`.
pub fn multigroup_labels(m: usize, p: usize) -> Vec<usize> {
    (0..m).map(|i| i % p).collect()
}

/// Target misattribution of construction group `l`: evenly spaced from
/// `fdr_low` to `fdr_high`.
pub fn multigroup_targets(p: usize, fdr_low: f64, fdr_high: f64) -> Vec<f64> {
    (0..p)
        .map(|l| fdr_low + l as f64 / (p - 1).max(1) as f64 * (fdr_high - fdr_low))
        .collect()
}

/// `p` equal-size construction groups. Item `i` of group `l` keeps
/// `q ~ N(mu(tau_l), sd(tau_l))` on `l` and `1 - q` on one other group drawn
/// uniformly; truth is sampled from the rows.
pub fn synth_multigroup(m: usize, n: usize, p: usize, fdr_low: f64, fdr_high: f64, seed: u64) -> Result<Instance> {
    if p < 2 {
        return Err(Error::DimensionMismatch("need at least two groups".into()));
    }
    if !(0.0..=0.5).contains(&fdr_low) || !(0.0..=0.5).contains(&fdr_high) {
        return Err(Error::InvalidSpec("target rates must lie in [0, 1/2]".into()));
    }
    let taus: Vec<f64> = multigroup_targets(p, fdr_low, fdr_high)
        .into_iter()
        .map(multigroup_tau)
        .collect();
    let mut rng = rng_from(seed);
    let mut values = Vec::with_capacity(m);
    let mut probs = Array2::zeros((m, p));
    for (i, l) in multigroup_labels(m, p).into_iter().enumerate() {
        values.push(rng.random::<f64>());
        let (mu, sd) = multigroup_params(taus[l]);
        let q = draw_clamped(&mut rng, mu, sd);
        let mut z = rng.random_range(0..p - 1);
        if z >= l {
            z += 1;
        }
        probs[[i, l]] = q;
        probs[[i, z]] = 1.0 - q;
    }
    let truth = sample_groups(&probs, Structure::Disjoint, derive_seed(seed, STREAM_TRUTH))?;
    Instance::from_values(values, n, probs, Structure::Disjoint, Some(truth))
}

/// Mean of `1 - max_l P_il` per construction group.
pub fn measured_group_error(probs: &Array2<f64>, labels: &[usize]) -> Vec<f64> {
    let p = probs.ncols();
    let mut sum = vec![0.0; p];
    let mut count = vec![0usize; p];
    for (i, &l) in labels.iter().enumerate() {
        let top = probs.row(i).iter().cloned().fold(0.0, f64::max);
        sum[l] += 1.0 - top;
        count[l] += 1;
    }
    (0..p).map(|l| if count[l] > 0 { sum[l] / count[l] as f64 } else { 0.0 }).collect()
}

/// Joint cell probabilities of independent binary attributes. Cell `c` has
/// attribute `b` present iff bit `b` of `c` is clear; for two attributes the
/// order is `(ab, (1-a)b, a(1-b), (1-a)(1-b))`.
pub fn intersect_marginals(marginals: &Array2<f64>) -> Result<Array2<f64>> {
    let (m, k) = marginals.dim();
    if k == 0 || k > 16 {
        return Err(Error::DimensionMismatch(format!("{k} attributes not supported")));
    }
    for ((i, a), &v) in marginals.indexed_iter() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::ProbabilityOutOfRange { row: i, col: a, value: v });
        }
    }
    let cells = 1usize << k;
    Ok(Array2::from_shape_fn((m, cells), |(i, c)| {
        (0..k)
            .map(|b| {
                let v = marginals[[i, b]];
                if c >> b & 1 == 0 { v } else { 1.0 - v }
            })
            .product()
    }))
}

fn equal_values_instance(probs: Array2<f64>, n: usize, structure: Structure) -> Result<Instance> {
    let m = probs.nrows();
    Instance::from_values(vec![1.0; m], n, probs, structure, None)
}

/// Identical items drawn from group `l*` (the first with `U[k][l*] <= k/4`)
/// with probability `U[k][l*]/k` and from a base group with probability
/// `1 - U[k][base]/k`. `k` is 1-based.
pub fn adversarial_lower_bound_instance(upper: &UpperBounds, k: usize, m: usize, n: usize) -> Result<Instance> {
    if k == 0 || k > upper.n() {
        return Err(Error::DimensionMismatch(format!("k = {k} is outside 1..={}", upper.n())));
    }
    let p = upper.p();
    if p < 2 {
        return Err(Error::DimensionMismatch("need at least two groups".into()));
    }
    let kf = k as f64;
    let target = (0..p)
        .find(|&l| upper.get(k - 1, l) <= kf / 4.0)
        .ok_or(Error::FamilyConditionViolated(k))?;
    let base = if target == 0 { 1 } else { 0 };
    let mut row = vec![0.0; p];
    row[target] = upper.get(k - 1, target) / kf;
    row[base] = 1.0 - upper.get(k - 1, base) / kf;
    let sum: f64 = row.iter().sum();
    let structure = if (sum - 1.0).abs() <= 1e-9 {
        Structure::Disjoint
    } else {
        Structure::IndependentMarginals
    };
    let probs = Array2::from_shape_fn((m, p), |(_, l)| row[l]);
    equal_values_instance(probs, n, structure)
}

/// Which imputation strategy the construction defeats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImputationKind {
    /// Most-likely-group imputation; `beta` is the tilt of the ambiguous items.
    Bayes { beta: f64 },
    /// Independent sampling; `phi` is the ambiguous items' group-1 probability.
    Independent { phi: f64, beta: f64 },
}

/// Utility-zero and utility-one item types arranged so that ranking on imputed
/// groups violates the bounds with constant probability.
///
/// `Bayes`: `n/2` items each of type A (`P_1 = 0`, `W = 1`), type B
/// (`P_1 = 1/2 + beta`, `W = 1`), type C (`P_1 = 1`, `W = 0`).
/// `Independent`: `ceil(ln(n/beta) n / ln(1/(1-phi)))` type A items
/// (`P_1 = phi`, `W = 1`), then `n` each of type B (`P_1 = 1`) and C (`P_1 = 0`),
/// both with `W = 0`.
pub fn imputation_failure_instance(kind: ImputationKind, n: usize) -> Result<Instance> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!("n = {n} must be positive and even")));
    }
    let rows: Vec<(f64, f64)> = match kind {
        ImputationKind::Bayes { beta } => {
            if !(beta > 0.0 && beta < 0.5) {
                return Err(Error::InvalidSpec(format!("beta = {beta} must lie in (0, 1/2)")));
            }
            let h = n / 2;
            std::iter::repeat_n((0.0, 1.0), h)
                .chain(std::iter::repeat_n((0.5 + beta, 1.0), h))
                .chain(std::iter::repeat_n((1.0, 0.0), h))
                .collect()
        }
        ImputationKind::Independent { phi, beta } => {
            if !(phi > 0.0 && phi < 1.0) || !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidSpec("phi and beta must lie in (0, 1)".into()));
            }
            let nf = n as f64;
            let m_a = ((nf / beta).ln() * nf / (1.0 / (1.0 - phi)).ln()).ceil().max(nf) as usize;
            std::iter::repeat_n((phi, 1.0), m_a)
                .chain(std::iter::repeat_n((1.0, 0.0), n))
                .chain(std::iter::repeat_n((0.0, 0.0), n))
                .collect()
        }
    };
    let m = rows.len();
    let probs = Array2::from_shape_fn((m, 2), |(i, l)| if l == 0 { rows[i].0 } else { 1.0 - rows[i].0 });
    let w = Array2::from_shape_fn((m, n), |(i, _)| rows[i].1);
    Instance::new(w, probs, Structure::Disjoint, None)
}

/// Every entry `1/2`: two groups are categorical, more are independent marginals.
pub fn half_half_instance(m: usize, n: usize, p: usize) -> Result<Instance> {
    if m < 2 || p < 2 {
        return Err(Error::DimensionMismatch("need m >= 2 and p >= 2".into()));
    }
    let structure = if p == 2 { Structure::Disjoint } else { Structure::IndependentMarginals };
    equal_values_instance(Array2::from_elem((m, p), 0.5), n, structure)
}

/// `P_i1 = 1/2` except the last item (`P_1 = 1`), which alone has utility:
/// its row of `W` is all ones, every other row is zero.
pub fn exp_constraint_gap_instance(m: usize, n: usize) -> Result<Instance> {
    if m <= n {
        return Err(Error::DimensionMismatch(format!("need m > n, got m = {m}, n = {n}")));
    }
    let probs = Array2::from_shape_fn((m, 2), |(i, l)| match (i + 1 == m, l) {
        (true, 0) => 1.0,
        (true, _) => 0.0,
        _ => 0.5,
    });
    let w = Array2::from_shape_fn((m, n), |(i, _)| if i + 1 == m { 1.0 } else { 0.0 });
    Instance::new(w, probs, Structure::Disjoint, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fairspec::u_equal_representation;
    use ndarray::array;

    #[test]
    fn certain_rows_always_land() {
        let probs = array![[1.0, 0.0], [0.0, 1.0]];
        for s in 0..50 {
            let g = sample_groups(&probs, Structure::Disjoint, s).unwrap();
            assert_eq!(g.labels().unwrap(), vec![0, 1]);
        }
    }

    #[test]
    fn sampling_frequency_matches() {
        let probs = array![[0.3, 0.7], [0.8, 0.2]];
        let trials = 10_000;
        let mut hits = [0usize; 2];
        let mut both = 0usize;
        let mut rng = rng_from(4);
        for _ in 0..trials {
            let g = sample_groups_with(&probs, Structure::Disjoint, &mut rng).unwrap();
            let (a, b) = (g.contains(0, 0), g.contains(1, 0));
            hits[0] += a as usize;
            hits[1] += b as usize;
            both += (a && b) as usize;
        }
        let t = trials as f64;
        for (h, p) in hits.iter().zip([0.3, 0.8]) {
            let sigma = (p * (1.0 - p) / t).sqrt();
            assert!((*h as f64 / t - p).abs() < 3.0 * sigma);
        }
        let cov = both as f64 / t - (hits[0] as f64 / t) * (hits[1] as f64 / t);
        assert!(cov.abs() < 3.0 * (0.3 * 0.7 * 0.8 * 0.2 / t).sqrt());
    }

    #[test]
    fn independent_marginals_overlap() {
        let probs = array![[1.0, 1.0]];
        let g = sample_groups(&probs, Structure::IndependentMarginals, 1).unwrap();
        assert!(g.contains(0, 0) && g.contains(0, 1));
    }

    #[test]
    fn zero_eta_keeps_labels() {
        let truth = GroupSample::from_labels(&[0, 1, 1, 0], 2).unwrap();
        let (noisy, probs) = randomized_response(&truth, &RandomizedResponseParams::symmetric(0.0).unwrap(), 1).unwrap();
        assert_eq!(noisy, truth);
        assert!(probs.iter().all(|&v| v == 0.0 || v == 1.0));
    }

    #[test]
    fn posterior_worked_example() {
        let labels: Vec<usize> = (0..100).map(|i| if i < 56 { 0 } else { 1 }).collect();
        let noisy = GroupSample::from_labels(&labels, 2).unwrap();
        let params = RandomizedResponseParams::symmetric(0.2).unwrap();
        let probs = posterior_probs(&noisy, &params, &[60.0, 40.0]).unwrap();
        assert!((probs[[0, 0]] - 0.8 * 60.0 / 56.0).abs() < 1e-12);
        assert!((probs[[0, 0]] - 0.857).abs() < 1e-3);
        assert!((probs[[0, 1]] - (1.0 - probs[[0, 0]])).abs() < 1e-12);
    }

    #[test]
    fn empty_noisy_group_is_an_error() {
        let noisy = GroupSample::from_labels(&[0, 0], 2).unwrap();
        let params = RandomizedResponseParams::symmetric(0.1).unwrap();
        assert_eq!(posterior_probs(&noisy, &params, &[1.0, 1.0]), Err(Error::EmptyNoisyGroup(1)));
    }

    #[test]
    fn flip_rate_matches_eta() {
        let labels = vec![0usize; 10_000];
        let truth = GroupSample::from_labels(&labels, 2).unwrap();
        let noisy = flip_labels(&truth, &RandomizedResponseParams::symmetric(0.3).unwrap(), 8).unwrap();
        let rate = noisy.sizes()[1] as f64 / 10_000.0;
        assert!((rate - 0.3).abs() < 3.0 * (0.21f64 / 10_000.0).sqrt());
    }

    #[test]
    fn multi_group_posterior_rows_normalize() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let truth = GroupSample::from_labels(&labels, 3).unwrap();
        let (_, probs) = randomized_response(&truth, &RandomizedResponseParams::symmetric(0.2).unwrap(), 2).unwrap();
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn group_size_estimator_examples() {
        assert_eq!(estimate_group_size(40.0, 60.0, 0.0).unwrap(), 40.0);
        assert!((estimate_group_size(50.0, 50.0, 0.25).unwrap() - 37.5).abs() < 1e-12);
        assert_eq!(estimate_group_size(1.0, 1.0, 0.5), Err(Error::EtaTooLarge(0.5)));
        assert!((estimate_group_size_unbiased(50.0, 50.0, 0.25).unwrap() - 50.0).abs() < 1e-12);
    }

    #[test]
    fn group_size_estimator_means() {
        let labels: Vec<usize> = (0..100).map(|i| if i < 60 { 0 } else { 1 }).collect();
        let truth = GroupSample::from_labels(&labels, 2).unwrap();
        let eta = 0.2;
        let params = RandomizedResponseParams::symmetric(eta).unwrap();
        let draws = 1000;
        let (mut printed, mut unbiased) = (Vec::new(), Vec::new());
        for s in 0..draws {
            let sizes = flip_labels(&truth, &params, s).unwrap().sizes();
            let (a, b) = (sizes[0] as f64, sizes[1] as f64);
            printed.push(estimate_group_size(a, b, eta).unwrap());
            unbiased.push(estimate_group_size_unbiased(a, b, eta).unwrap());
        }
        let stats = |v: &[f64]| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
            (mean, (var / v.len() as f64).sqrt())
        };
        let (mu, se) = stats(&unbiased);
        assert!((mu - 60.0).abs() < 3.0 * se);
        let (mp, sp) = stats(&printed);
        assert!((mp - (1.0 - eta) * 60.0).abs() < 3.0 * sp);
    }

    #[test]
    fn fdr_endpoints() {
        let base = FdrSynthSpec::new(10, 5, 0.0).unwrap();
        let (f1, f2) = fdr_analytic(&base);
        assert!((f1 - 0.116).abs() < 0.005, "{f1}");
        assert!((f2 - 0.399).abs() < 0.005, "{f2}");
        assert!(fdr_gap(&base.with_tau(1.0).unwrap()).abs() < 1e-12);
        for target in [0.1, 0.29, 0.3] {
            let t = tau_for_gap(&base, target).unwrap();
            assert!((fdr_gap(&base.with_tau(t).unwrap()) - target).abs() < 1e-6, "{target}");
        }
        let t = tau_for_gap(&base, 0.3).unwrap();
        assert!(t > 0.05 && t < 0.15, "{t}");
        assert_eq!(tau_for_gap(&base, 0.0).unwrap(), 1.0);
        let peak = tau_for_gap(&base, 0.9).unwrap();
        assert!(fdr_gap(&base.with_tau(peak).unwrap()) > 0.3);
    }

    #[test]
    fn fdr_gap_decreases_on_grid() {
        let base = FdrSynthSpec::new(20_000, 5, 0.0).unwrap();
        let mut measured = Vec::new();
        // past the peak the gap falls monotonically
        for (k, tau) in [0.2, 0.4, 0.6, 0.8, 1.0].into_iter().enumerate() {
            let spec = base.with_tau(tau).unwrap();
            let inst = synth_nonuniform_fdr(&spec, 100 + k as u64).unwrap();
            let f = measured_fdr(inst.probs(), inst.truth().unwrap()).unwrap();
            measured.push(f[1] - f[0]);
        }
        for w in measured.windows(2) {
            assert!(w[1] <= w[0] + 0.01, "{measured:?}");
        }
        assert!(measured[4].abs() < 1e-12);
    }

    #[test]
    fn fdr_generator_is_deterministic_and_valid() {
        let spec = FdrSynthSpec::new(50, 10, 0.3).unwrap();
        let a = synth_nonuniform_fdr(&spec, 5).unwrap();
        assert_eq!(a, synth_nonuniform_fdr(&spec, 5).unwrap());
        assert!(a.validate().is_ok());
        assert!(FdrSynthSpec::new(50, 10, 1.5).is_err());
    }

    #[test]
    fn multigroup_rows_and_rates() {
        let p = 4;
        let m = 5000;
        let inst = synth_multigroup(m, 10, p, 0.1, 0.4, 3).unwrap();
        for row in inst.probs().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().filter(|&&v| v > 0.0).count() <= 2);
        }
        let measured = measured_group_error(inst.probs(), &multigroup_labels(m, p));
        for (got, want) in measured.iter().zip(multigroup_targets(p, 0.1, 0.4)) {
            assert!((got - want).abs() < 0.03, "{measured:?}");
        }
    }

    #[test]
    fn intersection_examples() {
        let out = intersect_marginals(&array![[1.0, 1.0], [0.5, 0.5], [0.3, 0.8]]).unwrap();
        assert_eq!(out.row(0).to_vec(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(out.row(1).to_vec(), vec![0.25; 4]);
        let want = [0.24, 0.56, 0.06, 0.14];
        for (a, b) in out.row(2).iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(intersect_marginals(&array![[1.2]]).is_err());
    }

    #[test]
    fn adversarial_examples() {
        let u = u_equal_representation(8, 4).unwrap();
        let inst = adversarial_lower_bound_instance(&u, 8, 10, 8).unwrap();
        assert_eq!(inst.probs()[[0, 0]], 0.25);
        assert_eq!(inst.structure(), Structure::Disjoint);
        // ceil(k/4) <= k/4 only once k is a multiple of 4
        for k in [4, 8] {
            assert!(adversarial_lower_bound_instance(&u, k, 10, 8).is_ok());
        }
        assert_eq!(adversarial_lower_bound_instance(&u, 3, 10, 8), Err(Error::FamilyConditionViolated(3)));
        let u2 = u_equal_representation(2, 2).unwrap();
        assert_eq!(
            adversarial_lower_bound_instance(&u2, 2, 4, 2),
            Err(Error::FamilyConditionViolated(2))
        );
    }

    #[test]
    fn bayes_failure_instance_types() {
        let inst = imputation_failure_instance(ImputationKind::Bayes { beta: 0.05 }, 10).unwrap();
        assert_eq!(inst.m(), 15);
        let g = crate::rankers::impute_bayes(inst.probs(), inst.structure()).unwrap();
        let labels = g.labels().unwrap();
        assert!(labels[..5].iter().all(|&l| l == 1));
        assert!(labels[5..].iter().all(|&l| l == 0));
    }

    #[test]
    fn independent_failure_instance_alternating_is_fair() {
        let n = 6;
        let inst = imputation_failure_instance(ImputationKind::Independent { phi: 0.2, beta: 0.1 }, n).unwrap();
        let m_a = inst.m() - 2 * n;
        let slots: Vec<usize> = (0..n).map(|j| if j % 2 == 0 { m_a + j / 2 } else { m_a + n + j / 2 }).collect();
        let r = crate::types::Ranking::new(slots, inst.m()).unwrap();
        let u = u_equal_representation(n, 2).unwrap();
        for s in 0..200 {
            let g = sample_groups(inst.probs(), inst.structure(), s).unwrap();
            let mut c = [0.0; 2];
            for (k, &i) in r.slots().iter().enumerate() {
                c[g.label(i).unwrap()] += 1.0;
                assert!(c[0] <= u.get(k, 0) && c[1] <= u.get(k, 1));
            }
        }
    }

    #[test]
    fn half_half_rows_sum_to_one() {
        let inst = half_half_instance(10, 4, 2).unwrap();
        assert!(inst.probs().iter().all(|&v| v == 0.5));
        assert_eq!(inst.structure(), Structure::Disjoint);
    }

    #[test]
    fn gap_instance_structure() {
        let inst = exp_constraint_gap_instance(5, 3).unwrap();
        let w = inst.utilities();
        assert_eq!(w.row(4).sum(), 3.0);
        assert_eq!(w.slice(ndarray::s![..4, ..]).sum(), 0.0);
        // the valuable item pushes expected group-1 count past k/2 at its slot
        for k in 1..=3 {
            let expected = 1.0 + 0.5 * (k - 1) as f64;
            assert!(expected > k as f64 / 2.0);
        }
    }
}
