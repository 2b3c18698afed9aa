//! Domain types shared by every module.
//!
//! Indices are 0-based everywhere in this crate. File formats and CLI output
//! shift them to 1-based (see [`crate::io`]).

use std::fmt;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairspec;

/// Base of every logarithm used for DCG discounts, metric weights and
/// relaxation formulas. Natural log by default.
pub const LOG_BASE: f64 = std::f64::consts::E;

/// Logarithm in [`LOG_BASE`].
#[inline]
pub fn log(x: f64) -> f64 {
    if LOG_BASE == std::f64::consts::E {
        x.ln()
    } else {
        x.ln() / LOG_BASE.ln()
    }
}

/// DCG discount of 0-based slot `j`: `1 / log(j + 2)`.
#[inline]
pub fn dcg_discount(j: usize) -> f64 {
    1.0 / log(j as f64 + 2.0)
}

const PROB_ROW_TOL: f64 = 1e-9;
const DCG_TOL: f64 = 1e-12;

/// How the columns of `P` relate for a single item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// Exactly one group per item; each row of `P` is a categorical distribution.
    Disjoint,
    /// Each attribute is an independent Bernoulli; groups may overlap.
    IndependentMarginals,
    /// Columns are cells of a product of attributes; rows are categorical.
    ExplicitJoint,
}

impl Structure {
    /// Rows are categorical distributions (one group per item).
    pub fn is_categorical(self) -> bool {
        matches!(self, Structure::Disjoint | Structure::ExplicitJoint)
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Disjoint => "disjoint",
            Structure::IndependentMarginals => "independent-marginals",
            Structure::ExplicitJoint => "explicit-joint",
        })
    }
}

/// A realized membership of items in groups: entry `(i, l)` is true iff item
/// `i` belongs to group `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupSample {
    membership: Array2<bool>,
}

impl GroupSample {
    pub fn new(membership: Array2<bool>) -> Self {
        Self { membership }
    }

    /// One label per item; `labels[i] < p`.
    pub fn from_labels(labels: &[usize], p: usize) -> Result<Self> {
        let mut membership = Array2::from_elem((labels.len(), p), false);
        for (i, &l) in labels.iter().enumerate() {
            if l >= p {
                return Err(Error::DimensionMismatch(format!(
                    "label {l} of item {i} is not below p = {p}"
                )));
            }
            membership[[i, l]] = true;
        }
        Ok(Self { membership })
    }

    pub fn m(&self) -> usize {
        self.membership.nrows()
    }

    pub fn p(&self) -> usize {
        self.membership.ncols()
    }

    pub fn contains(&self, item: usize, group: usize) -> bool {
        self.membership[[item, group]]
    }

    pub fn membership(&self) -> &Array2<bool> {
        &self.membership
    }

    /// First group containing `item`, if any.
    pub fn label(&self, item: usize) -> Option<usize> {
        self.membership.row(item).iter().position(|&b| b)
    }

    /// Labels of every item; fails unless each item is in exactly one group.
    pub fn labels(&self) -> Result<Vec<usize>> {
        (0..self.m())
            .map(|i| {
                let row = self.membership.row(i);
                let count = row.iter().filter(|&&b| b).count();
                if count != 1 {
                    return Err(Error::DimensionMismatch(format!(
                        "item {i} belongs to {count} groups, expected exactly one"
                    )));
                }
                Ok(row.iter().position(|&b| b).unwrap())
            })
            .collect()
    }

    pub fn is_partition(&self) -> bool {
        self.membership
            .rows()
            .into_iter()
            .all(|row| row.iter().filter(|&&b| b).count() == 1)
    }

    /// `|G_l|` for every group.
    pub fn sizes(&self) -> Vec<usize> {
        (0..self.p())
            .map(|l| self.membership.column(l).iter().filter(|&&b| b).count())
            .collect()
    }

    /// The 0/1 membership matrix as reals.
    pub fn to_probabilities(&self) -> Array2<f64> {
        self.membership.mapv(|b| if b { 1.0 } else { 0.0 })
    }
}

/// Items, slots, utilities and group-membership probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    utilities: Array2<f64>,
    values: Option<Vec<f64>>,
    probs: Array2<f64>,
    structure: Structure,
    truth: Option<GroupSample>,
}

impl Instance {
    /// Builds and validates an instance from an explicit `m x n` utility matrix.
    pub fn new(
        utilities: Array2<f64>,
        probs: Array2<f64>,
        structure: Structure,
        truth: Option<GroupSample>,
    ) -> Result<Self> {
        let inst = Self {
            utilities,
            values: None,
            probs,
            structure,
            truth,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// DCG utilities `W[i][j] = w[i] / log(j + 2)` (0-based `j`).
    pub fn from_values(
        values: Vec<f64>,
        n: usize,
        probs: Array2<f64>,
        structure: Structure,
        truth: Option<GroupSample>,
    ) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::NegativeUtility {
                    row: i,
                    col: 0,
                    value: v,
                });
            }
        }
        let utilities = Array2::from_shape_fn((values.len(), n), |(i, j)| {
            values[i] * dcg_discount(j)
        });
        let inst = Self {
            utilities,
            values: Some(values),
            probs,
            structure,
            truth,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Checks every type invariant; returns the first violation found.
    pub fn validate(&self) -> Result<()> {
        let (m, n) = self.utilities.dim();
        if m == 0 || n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "need m, n >= 1, got m = {m}, n = {n}"
            )));
        }
        if n > m {
            return Err(Error::DimensionMismatch(format!(
                "n = {n} slots exceeds m = {m} items"
            )));
        }
        if self.probs.nrows() != m {
            return Err(Error::DimensionMismatch(format!(
                "P has {} rows, W has {m}",
                self.probs.nrows()
            )));
        }
        if self.probs.ncols() == 0 {
            return Err(Error::DimensionMismatch("P has no columns".into()));
        }
        for ((i, j), &w) in self.utilities.indexed_iter() {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::NegativeUtility {
                    row: i,
                    col: j,
                    value: w,
                });
            }
        }
        if let Some(values) = &self.values {
            if values.len() != m {
                return Err(Error::DimensionMismatch(format!(
                    "w has length {}, expected {m}",
                    values.len()
                )));
            }
            for ((i, j), &w) in self.utilities.indexed_iter() {
                if (w - values[i] * dcg_discount(j)).abs() > DCG_TOL {
                    return Err(Error::DimensionMismatch(format!(
                        "W[{i}][{j}] does not match the DCG model"
                    )));
                }
            }
        }
        for ((i, l), &p) in self.probs.indexed_iter() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::ProbabilityOutOfRange {
                    row: i,
                    col: l,
                    value: p,
                });
            }
        }
        if self.structure.is_categorical() {
            for (i, row) in self.probs.rows().into_iter().enumerate() {
                let sum: f64 = row.sum();
                if (sum - 1.0).abs() > PROB_ROW_TOL {
                    return Err(Error::RowSumViolation { row: i, sum });
                }
            }
        }
        if let Some(truth) = &self.truth {
            if truth.m() != m || truth.p() != self.probs.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "truth is {}x{}, expected {m}x{}",
                    truth.m(),
                    truth.p(),
                    self.probs.ncols()
                )));
            }
            if self.structure.is_categorical() && !truth.is_partition() {
                return Err(Error::DimensionMismatch(
                    "truth must assign every item to exactly one group".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.utilities.nrows()
    }

    pub fn n(&self) -> usize {
        self.utilities.ncols()
    }

    pub fn p(&self) -> usize {
        self.probs.ncols()
    }

    pub fn utilities(&self) -> &Array2<f64> {
        &self.utilities
    }

    pub fn values(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn truth(&self) -> Option<&GroupSample> {
        self.truth.as_ref()
    }

    /// Score used by the greedy rankers to order items for slot `j`.
    pub fn item_score(&self, item: usize, slot: usize) -> f64 {
        match &self.values {
            Some(v) => v[item],
            None => self.utilities[[item, slot]],
        }
    }

    pub fn with_truth(mut self, truth: Option<GroupSample>) -> Result<Self> {
        self.truth = truth;
        self.validate()?;
        Ok(self)
    }

    /// Same items and utilities with a different probability matrix.
    pub fn with_probs(&self, probs: Array2<f64>, structure: Structure) -> Result<Self> {
        let inst = Self {
            utilities: self.utilities.clone(),
            values: self.values.clone(),
            probs,
            structure,
            truth: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Restriction to a subset of items (in the given order); truth is dropped.
    pub fn restrict(&self, items: &[usize]) -> Result<Self> {
        let n = self.n();
        let utilities = Array2::from_shape_fn((items.len(), n), |(r, j)| {
            self.utilities[[items[r], j]]
        });
        let probs = Array2::from_shape_fn((items.len(), self.p()), |(r, l)| {
            self.probs[[items[r], l]]
        });
        let values = self
            .values
            .as_ref()
            .map(|v| items.iter().map(|&i| v[i]).collect());
        let inst = Self {
            utilities,
            values,
            probs,
            structure: self.structure,
            truth: None,
        };
        inst.validate()?;
        Ok(inst)
    }
}

/// An injective assignment of slots to items: slot `j` holds item `slots[j]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Ranking {
    slots: Vec<usize>,
}

impl Ranking {
    /// Validates that every slot holds a distinct item below `m`.
    pub fn new(slots: Vec<usize>, m: usize) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::InvalidRanking("no slots".into()));
        }
        if slots.len() > m {
            return Err(Error::InvalidRanking(format!(
                "{} slots but only {m} items",
                slots.len()
            )));
        }
        let mut seen = vec![false; m];
        for (j, &i) in slots.iter().enumerate() {
            if i >= m {
                return Err(Error::InvalidRanking(format!(
                    "slot {j} holds item {i}, but m = {m}"
                )));
            }
            if seen[i] {
                return Err(Error::InvalidRanking(format!("item {i} appears twice")));
            }
            seen[i] = true;
        }
        Ok(Self { slots })
    }

    /// Caller guarantees distinctness.
    pub(crate) fn from_slots_unchecked(slots: Vec<usize>) -> Self {
        Self { slots }
    }

    pub fn slots(&self) -> &[usize] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn item_at(&self, slot: usize) -> usize {
        self.slots[slot]
    }

    /// Slot of `item`, if ranked.
    pub fn position_of(&self, item: usize) -> Option<usize> {
        self.slots.iter().position(|&i| i == item)
    }

    /// The `m x n` 0/1 assignment matrix.
    pub fn to_matrix(&self, m: usize) -> Array2<f64> {
        let mut x = Array2::zeros((m, self.slots.len()));
        for (j, &i) in self.slots.iter().enumerate() {
            x[[i, j]] = 1.0;
        }
        x
    }

    /// Inverse of [`Ranking::to_matrix`]; entries must be exactly 0 or 1.
    pub fn from_matrix(x: &Array2<f64>) -> Result<Self> {
        let (m, n) = x.dim();
        let mut slots = Vec::with_capacity(n);
        for j in 0..n {
            let col = x.column(j);
            let mut holder = None;
            for (i, &v) in col.iter().enumerate() {
                if v == 1.0 {
                    if holder.is_some() {
                        return Err(Error::InvalidRanking(format!("slot {j} holds two items")));
                    }
                    holder = Some(i);
                } else if v != 0.0 {
                    return Err(Error::InvalidRanking(format!("entry ({i}, {j}) = {v}")));
                }
            }
            slots.push(holder.ok_or_else(|| Error::InvalidRanking(format!("slot {j} is empty")))?);
        }
        Self::new(slots, m)
    }
}

/// `<R, W>`: total utility of a ranking.
pub fn utility(r: &Ranking, w: &Array2<f64>) -> Result<f64> {
    if r.len() != w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "ranking has {} slots, W has {} columns",
            r.len(),
            w.ncols()
        )));
    }
    if let Some(&i) = r.slots().iter().find(|&&i| i >= w.nrows()) {
        return Err(Error::DimensionMismatch(format!(
            "item {i} is outside W's {} rows",
            w.nrows()
        )));
    }
    Ok(r.slots()
        .iter()
        .enumerate()
        .map(|(j, &i)| w[[i, j]])
        .sum())
}

/// A real `m x n` matrix with unit column sums and row sums at most one.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalAssignment {
    x: Array2<f64>,
}

impl FractionalAssignment {
    pub const ENTRY_TOL: f64 = 1e-9;
    pub const SUM_TOL: f64 = 1e-7;

    pub fn new(x: Array2<f64>) -> Result<Self> {
        let (m, n) = x.dim();
        if m == 0 || n == 0 || n > m {
            return Err(Error::InvalidAssignment(format!("bad shape {m}x{n}")));
        }
        for ((i, j), &v) in x.indexed_iter() {
            if !(v.is_finite() && (-Self::ENTRY_TOL..=1.0 + Self::ENTRY_TOL).contains(&v)) {
                return Err(Error::InvalidAssignment(format!("entry ({i}, {j}) = {v}")));
            }
        }
        for j in 0..n {
            let s = x.column(j).sum();
            if (s - 1.0).abs() > Self::SUM_TOL {
                return Err(Error::InvalidAssignment(format!("column {j} sums to {s}")));
            }
        }
        for i in 0..m {
            let s = x.row(i).sum();
            if s > 1.0 + Self::SUM_TOL {
                return Err(Error::InvalidAssignment(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self { x })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.x
    }

    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.x.row(i).sum()
    }

    /// `<X, W>`.
    pub fn objective(&self, w: &Array2<f64>) -> f64 {
        (&self.x * w).sum()
    }
}

/// A weighted list of rankings.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexCombination {
    terms: Vec<(f64, Ranking)>,
    m: usize,
}

impl ConvexCombination {
    pub const WEIGHT_TOL: f64 = 1e-9;

    pub fn new(terms: Vec<(f64, Ranking)>, m: usize) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidAssignment("empty convex combination".into()));
        }
        let n = terms[0].1.len();
        let mut total = 0.0;
        for (w, r) in &terms {
            if !(*w > 0.0) {
                return Err(Error::InvalidAssignment(format!("weight {w} is not positive")));
            }
            if r.len() != n || r.slots().iter().any(|&i| i >= m) {
                return Err(Error::InvalidAssignment("rankings disagree in shape".into()));
            }
            total += w;
        }
        if (total - 1.0).abs() > Self::WEIGHT_TOL {
            return Err(Error::InvalidAssignment(format!("weights sum to {total}")));
        }
        Ok(Self { terms, m })
    }

    pub fn terms(&self) -> &[(f64, Ranking)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.terms[0].1.len()
    }

    /// `sum_t weight_t * matrix(ranking_t)`.
    pub fn to_matrix(&self) -> Array2<f64> {
        let mut x = Array2::zeros((self.m, self.n()));
        for (w, r) in &self.terms {
            for (j, &i) in r.slots().iter().enumerate() {
                x[[i, j]] += w;
            }
        }
        x
    }
}

/// Integral upper bounds `U[k][l]` on the number of group-`l` items in the
/// first `k + 1` slots.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBounds {
    u: Array2<f64>,
}

impl UpperBounds {
    /// Requires positive integers, nondecreasing down each column.
    pub fn new(u: Array2<f64>) -> Result<Self> {
        if u.nrows() == 0 || u.ncols() == 0 {
            return Err(Error::InvalidSpec("U is empty".into()));
        }
        for ((k, l), &v) in u.indexed_iter() {
            if !(v >= 1.0 && v.is_finite() && v.fract() == 0.0) {
                return Err(Error::InvalidSpec(format!(
                    "U[{k}][{l}] = {v} is not a positive integer"
                )));
            }
            if k > 0 && v < u[[k - 1, l]] {
                return Err(Error::InvalidSpec(format!(
                    "U is decreasing in k at ({k}, {l})"
                )));
            }
        }
        Ok(Self { u })
    }

    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn p(&self) -> usize {
        self.u.ncols()
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.u[[k, l]]
    }

    pub fn row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.u.row(k)
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.u
    }

    /// `(min_l U[k][l])` is what the relaxation formulas maximize over.
    pub fn min_in_row(&self, k: usize) -> f64 {
        self.u.row(k).iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// How the relaxation vector is computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum GammaMode {
    /// `constant * log(2np/delta) * max_l sqrt(1/U[k][l])`; the constant defaults to 12.
    Theoretical {
        #[serde(default = "default_gamma_constant")]
        constant: f64,
    },
    Improved { psi: f64 },
    PositionWeighted { psi: f64 },
    Heuristic,
    Explicit { gamma: Vec<f64> },
}

fn default_gamma_constant() -> f64 {
    fairspec::THEORETICAL_GAMMA_CONSTANT
}

impl GammaMode {
    pub fn theoretical() -> Self {
        GammaMode::Theoretical {
            constant: fairspec::THEORETICAL_GAMMA_CONSTANT,
        }
    }
}

/// Upper bounds, relaxation and rounding parameters for one ranking request.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessSpec {
    upper: UpperBounds,
    mode: GammaMode,
    gamma: Vec<f64>,
    c: f64,
    delta: f64,
    d: f64,
    discounts: Option<Vec<f64>>,
}

/// Scalar parameters of a [`FairnessSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecParams {
    pub c: f64,
    pub delta: f64,
    pub d: f64,
}

impl Default for SpecParams {
    fn default() -> Self {
        Self {
            c: 1.5,
            delta: 0.1,
            d: 3.0,
        }
    }
}

impl FairnessSpec {
    /// Computes `gamma` from `mode` and validates everything.
    pub fn new(
        upper: UpperBounds,
        p: usize,
        mode: GammaMode,
        params: SpecParams,
        discounts: Option<Vec<f64>>,
    ) -> Result<Self> {
        if upper.p() != p {
            return Err(Error::DimensionMismatch(format!(
                "U has {} columns, expected p = {p}",
                upper.p()
            )));
        }
        if !(params.c > 1.0) {
            return Err(Error::InvalidSpec(format!("c = {} must exceed 1", params.c)));
        }
        if !(params.delta > 0.0 && params.delta <= 0.5) {
            return Err(Error::DeltaOutOfRange(params.delta));
        }
        if !(params.d > 2.0) {
            return Err(Error::InvalidSpec(format!("d = {} must exceed 2", params.d)));
        }
        if let Some(v) = &discounts {
            if v.len() != upper.n() {
                return Err(Error::DimensionMismatch(format!(
                    "{} discounts for {} slots",
                    v.len(),
                    upper.n()
                )));
            }
            if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidSpec("discounts must be positive".into()));
            }
            if v.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::InvalidSpec("discounts must be nonincreasing".into()));
            }
        }
        let gamma = fairspec::gamma_for(&mode, &upper, params.delta)?;
        if gamma.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidSpec("gamma must be nonnegative".into()));
        }
        Ok(Self {
            upper,
            mode,
            gamma,
            c: params.c,
            delta: params.delta,
            d: params.d,
            discounts,
        })
    }

    pub fn upper(&self) -> &UpperBounds {
        &self.upper
    }

    pub fn mode(&self) -> &GammaMode {
        &self.mode
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn discounts(&self) -> Option<&[f64]> {
        self.discounts.as_deref()
    }

    pub fn n(&self) -> usize {
        self.upper.n()
    }

    pub fn p(&self) -> usize {
        self.upper.p()
    }

    /// Relaxed right-hand side `U[k][l] * (1 + (1 - 1/(2 sqrt c)) * gamma[k])`.
    pub fn relaxed_bound(&self, k: usize, l: usize) -> f64 {
        self.upper.get(k, l) * (1.0 + fairspec::relaxation_factor(self.c) * self.gamma[k])
    }
}
