//! Birkhoff-von Neumann decomposition of a fractional assignment.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::types::{ConvexCombination, FractionalAssignment, Ranking};

const ZERO_TOL: f64 = 1e-9;
const MASS_TOL: f64 = 1e-7;
const NONE: usize = usize::MAX;

/// Square nonnegative matrix with row/column sums 1, restricted to items that
/// carry mass. Columns `0..n` are the real slots; the rest absorb item slack.
struct Padded {
    s: usize,
    a: Vec<f64>,
    adj: Vec<Vec<usize>>,
    items: Vec<usize>,
}

fn pad(x: &FractionalAssignment) -> Padded {
    let (m, n) = (x.m(), x.n());
    let mat = x.matrix();
    let items: Vec<usize> = (0..m).filter(|&i| mat.row(i).iter().any(|&v| v > ZERO_TOL)).collect();
    let s = items.len().max(n);
    let mut a = vec![0.0; s * s];
    let mut slack = Vec::with_capacity(s);
    for (r, &i) in items.iter().enumerate() {
        let mut sum = 0.0;
        for j in 0..n {
            let v = mat[[i, j]];
            if v > ZERO_TOL {
                a[r * s + j] = v;
                sum += v;
            }
        }
        slack.push((1.0 - sum).max(0.0));
    }
    // northwest-corner fill of the dummy columns
    let mut col = n;
    let mut cap = 1.0;
    for (r, mut left) in slack.into_iter().enumerate() {
        while left > ZERO_TOL && col < s {
            let take = left.min(cap);
            a[r * s + col] += take;
            left -= take;
            cap -= take;
            if cap <= ZERO_TOL {
                col += 1;
                cap = 1.0;
            }
        }
    }
    let adj = (0..s)
        .map(|r| (0..s).filter(|&c| a[r * s + c] > 0.0).collect())
        .collect();
    Padded { s, a, adj, items }
}

struct Matcher {
    row_match: Vec<usize>,
    col_match: Vec<usize>,
    stamp: Vec<usize>,
    epoch: usize,
}

impl Matcher {
    fn new(s: usize) -> Self {
        Self {
            row_match: vec![NONE; s],
            col_match: vec![NONE; s],
            stamp: vec![0; s],
            epoch: 0,
        }
    }

    /// Augmenting-path search from free row `r0` over positive entries.
    fn augment(&mut self, p: &Padded, r0: usize) -> bool {
        self.epoch += 1;
        let s = p.s;
        let mut frames: Vec<(usize, usize, usize)> = vec![(r0, 0, NONE)];
        while let Some(top) = frames.last_mut() {
            let u = top.0;
            if top.1 >= p.adj[u].len() {
                frames.pop();
                continue;
            }
            let c = p.adj[u][top.1];
            top.1 += 1;
            if p.a[u * s + c] <= 0.0 || self.stamp[c] == self.epoch {
                continue;
            }
            self.stamp[c] = self.epoch;
            top.2 = c;
            if self.col_match[c] == NONE {
                for &(row, _, via) in &frames {
                    self.row_match[row] = via;
                    self.col_match[via] = row;
                }
                return true;
            }
            frames.push((self.col_match[c], 0, NONE));
        }
        false
    }

    fn complete(&mut self, p: &Padded) -> bool {
        for r in 0..p.s {
            if self.row_match[r] == NONE && !self.augment(p, r) {
                return false;
            }
        }
        true
    }
}

/// Splits `x` into a convex combination of rankings. Rankings that coincide
/// after the padding columns are dropped are merged, keeping first-seen order.
pub fn bvn_decompose(x: &FractionalAssignment) -> Result<ConvexCombination> {
    let (m, n) = (x.m(), x.n());
    let mut p = pad(x);
    let s = p.s;
    let mut matcher = Matcher::new(s);
    let mut raw: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut taken = 0.0;
    while 1.0 - taken > 1e-12 {
        if !matcher.complete(&p) {
            if 1.0 - taken <= MASS_TOL && !raw.is_empty() {
                break;
            }
            return Err(Error::NotDecomposable(format!(
                "no perfect matching with mass {} left",
                1.0 - taken
            )));
        }
        let theta = (0..s)
            .map(|r| p.a[r * s + matcher.row_match[r]])
            .fold(f64::INFINITY, f64::min);
        let slots: Vec<usize> = (0..n).map(|j| p.items[matcher.col_match[j]]).collect();
        raw.push((theta, slots));
        taken += theta;
        for r in 0..s {
            let c = matcher.row_match[r];
            let v = &mut p.a[r * s + c];
            *v -= theta;
            if *v < ZERO_TOL {
                *v = 0.0;
                matcher.row_match[r] = NONE;
                matcher.col_match[c] = NONE;
            }
        }
    }
    let total: f64 = raw.iter().map(|(w, _)| w).sum();
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut terms: Vec<(f64, Vec<usize>)> = Vec::new();
    for (w, slots) in raw {
        match index.get(&slots) {
            Some(&t) => terms[t].0 += w / total,
            None => {
                index.insert(slots.clone(), terms.len());
                terms.push((w / total, slots));
            }
        }
    }
    let terms = terms
        .into_iter()
        .map(|(w, slots)| Ranking::new(slots, m).map(|r| (w, r)))
        .collect::<Result<Vec<_>>>()?;
    ConvexCombination::new(terms, m)
}

/// Nonzeros of the padded square matrix [`bvn_decompose`] works on, and its side.
pub fn padded_support(x: &FractionalAssignment) -> (usize, usize) {
    let p = pad(x);
    (p.a.iter().filter(|&&v| v > 0.0).count(), p.s)
}
