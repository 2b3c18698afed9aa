//! Exact item pruning for the prefix-constrained relaxations.
//!
//! Item `i` is dropped when enough higher-ranked items dominate it that some
//! optimal fractional solution leaves it unused:
//!
//! * general rule: at least `n` items with `W` rows entrywise at least `W_i`
//!   and `P` rows entrywise at most `P_i`;
//! * two groups with rows summing to one: at least `n` such items with
//!   `P_1 <= P_i1` and at least `n` with `P_1 >= P_i1` (mass on `i` can be
//!   split between the two sides without changing any constraint).
//!
//! Items are ranked by descending `W` row sum, then ascending index; only
//! strictly earlier items can dominate.

use ndarray::Array2;

const CATEGORICAL_TOL: f64 = 1e-9;

fn rows_sum_to_one(probs: &Array2<f64>) -> bool {
    probs
        .rows()
        .into_iter()
        .all(|r| (r.sum() - 1.0).abs() <= CATEGORICAL_TOL)
}

/// Indices (ascending) of the items that survive pruning for `slots` slots.
/// `scores` is a per-item value matrix compared entrywise (the utility rows,
/// or a single column for selection problems).
pub fn surviving_items(scores: &Array2<f64>, probs: &Array2<f64>, slots: usize) -> Vec<usize> {
    let m = scores.nrows();
    let p = probs.ncols();
    let mut order: Vec<usize> = (0..m).collect();
    let sums: Vec<f64> = scores.rows().into_iter().map(|r| r.sum()).collect();
    order.sort_by(|&a, &b| sums[b].total_cmp(&sums[a]).then(a.cmp(&b)));
    let mixing = p == 2 && rows_sum_to_one(probs);
    let mut keep = Vec::with_capacity(m);
    for (rank, &i) in order.iter().enumerate() {
        let (mut below, mut above, mut covering) = (0usize, 0usize, 0usize);
        let mut dropped = false;
        for &h in &order[..rank] {
            if !scores.row(h).iter().zip(scores.row(i)).all(|(a, b)| a >= b) {
                continue;
            }
            if mixing {
                let (ph, pi) = (probs[[h, 0]], probs[[i, 0]]);
                if ph <= pi {
                    below += 1;
                }
                if ph >= pi {
                    above += 1;
                }
                if below >= slots && above >= slots {
                    dropped = true;
                    break;
                }
            } else if probs.row(h).iter().zip(probs.row(i)).all(|(a, b)| a <= b) {
                covering += 1;
                if covering >= slots {
                    dropped = true;
                    break;
                }
            }
        }
        if !dropped {
            keep.push(i);
        }
    }
    keep.sort_unstable();
    keep
}
