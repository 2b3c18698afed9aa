//! Swap rounding: collapse a convex combination of rankings into one ranking
//! whose slot marginals match the combination in expectation.
//!
//! Two matchings are merged by repeatedly picking a chunk of their symmetric
//! difference and resolving the whole alternating path or cycle containing it
//! toward one side. Resolving a full component always yields a valid ranking.

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{ConvexCombination, Ranking};

/// A perfect matching of slots to distinct items; same thing as a [`Ranking`].
pub type Matching = Ranking;

/// Default chunk parameter.
pub const DEFAULT_T: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edge {
    pub item: usize,
    pub slot: usize,
}

/// One alternating component of `M xor N`, as the ordered slots it visits.
/// Each slot contributes the edge pair `(M(j), j)`, `(N(j), j)`.
struct Component {
    slots: Vec<usize>,
    cycle: bool,
}

impl Component {
    fn edges(&self, m: &Matching, n: &Matching) -> Vec<Edge> {
        self.slots
            .iter()
            .flat_map(|&j| {
                [
                    Edge { item: m.item_at(j), slot: j },
                    Edge { item: n.item_at(j), slot: j },
                ]
            })
            .collect()
    }
}

fn components(m: &Matching, n: &Matching) -> Result<Vec<Component>> {
    if m.len() != n.len() {
        return Err(Error::DimensionMismatch(format!(
            "matchings cover {} and {} slots",
            m.len(),
            n.len()
        )));
    }
    let size = m.slots().iter().chain(n.slots()).max().map_or(0, |&i| i + 1);
    let mut pos_m = vec![usize::MAX; size];
    for (j, &i) in m.slots().iter().enumerate() {
        pos_m[i] = j;
    }
    let mut pos_n = vec![usize::MAX; size];
    for (j, &i) in n.slots().iter().enumerate() {
        pos_n[i] = j;
    }
    let differs = |j: usize| m.item_at(j) != n.item_at(j);
    let mut seen = vec![false; m.len()];
    let mut out = Vec::new();
    // paths start at the slot whose M-item is absent from N
    for j0 in 0..m.len() {
        if !differs(j0) || seen[j0] || pos_n[m.item_at(j0)] != usize::MAX {
            continue;
        }
        let mut slots = Vec::new();
        let mut j = j0;
        loop {
            seen[j] = true;
            slots.push(j);
            let next = pos_m[n.item_at(j)];
            if next == usize::MAX {
                break;
            }
            j = next;
        }
        out.push(Component { slots, cycle: false });
    }
    for j0 in 0..m.len() {
        if !differs(j0) || seen[j0] {
            continue;
        }
        let mut slots = Vec::new();
        let mut j = j0;
        while !seen[j] {
            seen[j] = true;
            slots.push(j);
            j = pos_m[n.item_at(j)];
        }
        out.push(Component { slots, cycle: true });
    }
    Ok(out)
}

/// Chunks of `M xor N`, each a list of edges.
///
/// * Small difference (at most `2t` edges): the whole difference, once.
/// * Path components: consecutive windows of `2t` edges.
/// * Cycle components: a window of `2t` edges starting at each `N` edge,
///   wrapping around.
///
/// Returns an empty list when `M = N`.
pub fn get_paths(m: &Matching, n: &Matching, t: usize) -> Result<Vec<Vec<Edge>>> {
    Ok(chunks(m, n, t)?.into_iter().map(|(_, e)| e).collect())
}

/// Chunks paired with the index of the component they lie in.
fn chunks(m: &Matching, n: &Matching, t: usize) -> Result<Vec<(Vec<usize>, Vec<Edge>)>> {
    let t = t.max(1);
    let comps = components(m, n)?;
    let total: usize = comps.iter().map(|c| 2 * c.slots.len()).sum();
    if total == 0 {
        return Ok(Vec::new());
    }
    if total <= 2 * t {
        let mut edges = Vec::with_capacity(total);
        let mut owners = Vec::with_capacity(total);
        for (ci, c) in comps.iter().enumerate() {
            let e = c.edges(m, n);
            owners.extend(std::iter::repeat_n(ci, e.len()));
            edges.extend(e);
        }
        return Ok(vec![(owners, edges)]);
    }
    let mut out = Vec::new();
    for (ci, c) in comps.iter().enumerate() {
        let e = c.edges(m, n);
        let len = e.len();
        let w = (2 * t).min(len);
        if c.cycle {
            // N edges sit at odd offsets
            for start in (1..len).step_by(2) {
                let win: Vec<Edge> = (0..w).map(|o| e[(start + o) % len]).collect();
                out.push((vec![ci; w], win));
            }
        } else {
            for win in e.chunks(2 * t) {
                out.push((vec![ci; win.len()], win.to_vec()));
            }
        }
    }
    Ok(out)
}

/// Resolves one random component of `from xor to` so `from` agrees with `to` there.
fn step_toward<R: Rng + ?Sized>(from: &mut [usize], to: &[usize], t: usize, rng: &mut R) -> Result<()> {
    let a = Ranking::from_slots_unchecked(from.to_vec());
    let b = Ranking::from_slots_unchecked(to.to_vec());
    let comps = components(&a, &b)?;
    let list = chunks(&a, &b, t)?;
    let (owners, _) = &list[rng.random_range(0..list.len())];
    let ci = owners[rng.random_range(0..owners.len())];
    for &j in &comps[ci].slots {
        from[j] = to[j];
    }
    Ok(())
}

/// Merges `M` (weight `alpha`) with `N` (weight `beta`). Each edge ends up in
/// the result with probability `(alpha [e in M] + beta [e in N]) / (alpha + beta)`.
pub fn merge<R: Rng + ?Sized>(
    alpha: f64,
    m: &Matching,
    beta: f64,
    n: &Matching,
    t: usize,
    rng: &mut R,
) -> Result<Matching> {
    if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(Error::InvalidAssignment(format!(
            "merge weights must be positive, got {alpha} and {beta}"
        )));
    }
    if m.len() != n.len() {
        return Err(Error::DimensionMismatch("matchings differ in length".into()));
    }
    let cap = m.len() + 1;
    let toward_n = beta / (alpha + beta);
    let mut a = m.slots().to_vec();
    let mut b = n.slots().to_vec();
    let mut iters = 0;
    while a != b {
        iters += 1;
        if iters > cap {
            return Err(Error::IterationCapExceeded(cap));
        }
        if rng.random::<f64>() < toward_n {
            step_toward(&mut a, &b, t, rng)?;
        } else {
            step_toward(&mut b, &a, t, rng)?;
        }
    }
    Ok(Ranking::from_slots_unchecked(a))
}

/// Folds the combination's rankings, heaviest first, through [`merge`].
pub fn swap_round<R: Rng + ?Sized>(comb: &ConvexCombination, t: usize, rng: &mut R) -> Result<Ranking> {
    let mut terms: Vec<&(f64, Ranking)> = comb.terms().iter().collect();
    terms.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut acc = terms[0].0;
    let mut current = terms[0].1.clone();
    for (w, r) in terms.into_iter().skip(1) {
        current = merge(*w, r, acc, &current, t, rng)?;
        acc += w;
    }
    Ok(current)
}
