//! Maximum-weight assignment of slots to distinct items (Hungarian method
//! with potentials, `O(n^2 m)`).

use ndarray::Array2;

/// `slots[j]` is the item placed at slot `j`; maximizes `sum W[slots[j]][j]`.
/// Requires `W.ncols() <= W.nrows()`.
pub fn max_weight_assignment(w: &Array2<f64>) -> Vec<usize> {
    let (m, n) = w.dim();
    assert!(n <= m, "more slots than items");
    let cost = |slot: usize, item: usize| -w[[item, slot]];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut slots = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            slots[owner[j] - 1] = j - 1;
        }
    }
    slots
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lpsolve::oracle_enumerate;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn picks_diagonal_when_best() {
        let w = array![[5.0, 1.0], [1.0, 5.0], [0.0, 0.0]];
        assert_eq!(max_weight_assignment(&w), vec![0, 1]);
    }

    proptest! {
        #[test]
        fn matches_enumeration(m in 1usize..7, n in 1usize..5, seed in any::<u64>()) {
            use rand::Rng;
            let n = n.min(m);
            let mut rng = crate::rng::rng_from(seed);
            let w = Array2::from_shape_fn((m, n), |_| rng.random::<f64>());
            let slots = max_weight_assignment(&w);
            let got: f64 = slots.iter().enumerate().map(|(j, &i)| w[[i, j]]).sum();
            let best = oracle_enumerate(m, n)
                .iter()
                .map(|r| r.slots().iter().enumerate().map(|(j, &i)| w[[i, j]]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((got - best).abs() < 1e-9);
        }
    }
}
