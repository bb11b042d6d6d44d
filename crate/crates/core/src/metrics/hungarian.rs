//! Minimum-cost linear assignment with a deterministic tie-break.

/// Optimal assignment of `min(rows, cols)` pairs, sorted by row.
///
/// Rectangular inputs are padded to square with a constant sentinel, which
/// shifts every complete assignment by the same amount. Among optimal
/// assignments the lexicographically smallest column sequence is returned.
pub fn hungarian_assign(cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    assert!(
        cost.iter().flatten().all(|c| c.is_finite()),
        "non-finite cost"
    );
    let n = rows.max(cols);
    let scale = cost.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs()));
    let sentinel = 2.0 * scale + 1.0;
    let c = |i: usize, j: usize| {
        if i < rows && j < cols {
            cost[i][j]
        } else {
            sentinel
        }
    };

    let (u, v, assign) = solve(n, &c);
    // Tight edges (zero reduced cost) carry every optimal assignment.
    let tol = 1e-9 * (1.0 + scale);
    let tight: Vec<Vec<bool>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (c(i, j) - u[i] - v[j]).abs() <= tol)
                .collect()
        })
        .collect();
    let perm = lexicographic_matching(&tight).unwrap_or(assign);
    (0..rows)
        .filter(|&i| perm[i] < cols)
        .map(|i| (i, perm[i]))
        .collect()
}

/// Shortest augmenting path method with row/column potentials.
/// Returns `(u, v, col_of_row)`.
fn solve(n: usize, c: &dyn Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based internally; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0; n];
    for j in 1..=n {
        col_of_row[p[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), col_of_row)
}

/// Lexicographically smallest perfect matching in a bipartite graph, fixing
/// rows in order and keeping the smallest column that still admits one.
fn lexicographic_matching(adj: &[Vec<bool>]) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut fixed: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        let choice = (0..n).find(|&j| {
            adj[i][j] && !fixed.contains(&j) && {
                let mut trial = fixed.clone();
                trial.push(j);
                completes(adj, &trial)
            }
        })?;
        fixed.push(choice);
    }
    Some(fixed)
}

/// Whether rows `prefix.len()..n` can be perfectly matched to the columns
/// not used by `prefix` (Kuhn's augmenting paths).
fn completes(adj: &[Vec<bool>], prefix: &[usize]) -> bool {
    let n = adj.len();
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut blocked = vec![false; n];
    for &j in prefix {
        blocked[j] = true;
    }
    fn augment(
        adj: &[Vec<bool>],
        i: usize,
        seen: &mut [bool],
        blocked: &[bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for j in 0..adj.len() {
            if adj[i][j] && !blocked[j] && !seen[j] {
                seen[j] = true;
                if owner[j].is_none_or(|k| augment(adj, k, seen, blocked, owner)) {
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    (prefix.len()..n).all(|i| {
        let mut seen = vec![false; n];
        augment(adj, i, &mut seen, &blocked, &mut owner)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn total(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(i, j)| cost[i][j]).sum()
    }

    /// Exhaustive minimum over injective row->column maps (rows <= cols).
    fn brute_force(cost: &[Vec<f64>]) -> f64 {
        fn rec(cost: &[Vec<f64>], i: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if i == cost.len() {
                *best = best.min(acc);
                return;
            }
            for j in 0..used.len() {
                if !used[j] {
                    used[j] = true;
                    rec(cost, i + 1, used, acc + cost[i][j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, 0, &mut vec![false; cost[0].len()], 0.0, &mut best);
        best
    }

    #[test]
    fn two_by_two() {
        let c = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let a = hungarian_assign(&c);
        assert_eq!(a, vec![(0, 0), (1, 1)]);
        assert_eq!(total(&c, &a), 2.0);
    }

    #[test]
    fn zero_matrix_is_diagonal() {
        for n in 1..6 {
            let c = vec![vec![0.0; n]; n];
            assert_eq!(
                hungarian_assign(&c),
                (0..n).map(|i| (i, i)).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn ties_prefer_lexicographically_smallest() {
        // (0,1),(1,0) and (0,0),(1,1) both cost 2
        let c = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(hungarian_assign(&c), vec![(0, 0), (1, 1)]);
        let c = vec![vec![5.0, 1.0, 1.0], vec![1.0, 5.0, 1.0]];
        assert_eq!(hungarian_assign(&c), vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn rectangular() {
        let c = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.0, 0.05]];
        let a = hungarian_assign(&c);
        assert_eq!(a.len(), 2);
        assert_eq!(a, vec![(0, 1), (2, 0)]);
        assert!(hungarian_assign(&[]).is_empty());
    }

    #[test]
    fn matches_exhaustive_minimum() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for trial in 0..150 {
            let r = rng.random_range(1..=7);
            let c = rng.random_range(r..=7);
            let cost: Vec<Vec<f64>> = (0..r)
                .map(|_| {
                    (0..c)
                        .map(|_| {
                            if trial % 3 == 0 {
                                rng.random_range(0..4) as f64
                            } else {
                                rng.random::<f64>()
                            }
                        })
                        .collect()
                })
                .collect();
            let a = hungarian_assign(&cost);
            assert_eq!(a.len(), r);
            assert_eq!(total(&cost, &a), brute_force(&cost), "trial {trial}");
        }
    }
}
