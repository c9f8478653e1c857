//! Maximum-weight one-to-one assignment on a rectangular matrix.

/// Returns `(total, matching)` where `matching[r]` is the column given to
/// row `r` (or `None` when there are more rows than columns). Every pair may
/// be used at most once; with non-negative weights the optimum always
/// matches min(rows, cols) pairs.
pub fn max_weight_assignment(weights: &[Vec<f64>]) -> (f64, Vec<Option<usize>>) {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return (0.0, vec![None; rows]);
    }
    if rows > cols {
        let transposed: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| weights[r][c]).collect()).collect();
        let (total, by_col) = max_weight_assignment(&transposed);
        let mut matching = vec![None; rows];
        for (c, r) in by_col.into_iter().enumerate() {
            if let Some(r) = r {
                matching[r] = Some(c);
            }
        }
        return (total, matching);
    }
    // Hungarian algorithm with potentials on costs -w; rows <= cols.
    let cost = |r: usize, c: usize| -weights[r - 1][c - 1];
    let inf = f64::INFINITY;
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for r in 1..=rows {
        owner[0] = r;
        let mut j0 = 0;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
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
    let mut matching = vec![None; rows];
    for c in 1..=cols {
        if owner[c] != 0 {
            matching[owner[c] - 1] = Some(c - 1);
        }
    }
    let total = matching
        .iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| weights[r][c]))
        .sum();
    (total, matching)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Best injective map of rows into columns (or columns into rows).
    fn brute(weights: &[Vec<f64>]) -> f64 {
        fn go(w: &[Vec<f64>], r: usize, used: &mut Vec<bool>) -> f64 {
            if r == w.len() {
                return 0.0;
            }
            let mut best = go(w, r + 1, used);
            for c in 0..used.len() {
                if !used[c] {
                    used[c] = true;
                    best = best.max(w[r][c] + go(w, r + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        let cols = weights.first().map_or(0, Vec::len);
        go(weights, 0, &mut vec![false; cols])
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..300 {
            let r = rng.random_range(0..6);
            let c = rng.random_range(1..6);
            let w: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
            let (total, matching) = max_weight_assignment(&w);
            assert!((total - brute(&w)).abs() < 1e-12);
            let mut seen = std::collections::BTreeSet::new();
            for m in matching.iter().flatten() {
                assert!(seen.insert(*m));
            }
        }
    }

    #[test]
    fn small_known_case() {
        let w = vec![vec![0.8, 0.4], vec![0.0, 2.0 / 3.0]];
        let (total, m) = max_weight_assignment(&w);
        assert!((total - 22.0 / 15.0).abs() < 1e-12);
        assert_eq!(m, vec![Some(0), Some(1)]);
    }
}
