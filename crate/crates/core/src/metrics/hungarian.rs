//! Minimum-cost rectangular assignment (Kuhn-Munkres with potentials).

/// Optimal one-to-one assignment of a cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// Solves the rectangular assignment problem, matching
/// `min(rows, cols)` pairs at minimum total cost.
///
/// Runs in `O(n^2 m)` for an `n x m` matrix with `n <= m` (the matrix is
/// transposed internally otherwise). Ties resolve toward lower column
/// indices in row order, so results are reproducible.
pub fn hungarian(cost: &[Vec<f64>]) -> Assignment {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Assignment {
            pairs: Vec::new(),
            total_cost: 0.0,
        };
    }
    debug_assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");

    if rows > cols {
        let transposed: Vec<Vec<f64>> = (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect();
        let t = hungarian(&transposed);
        let mut pairs: Vec<_> = t.pairs.into_iter().map(|(j, i)| (i, j)).collect();
        pairs.sort_unstable();
        return Assignment {
            pairs,
            total_cost: t.total_cost,
        };
    }

    let (n, m) = (rows, cols);
    // 1-based potentials; column 0 is the virtual source
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    let total_cost = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Assignment { pairs, total_cost }
}

/// Assignment maximizing the total score.
pub fn maximize(score: &[Vec<f64>]) -> Assignment {
    let neg: Vec<Vec<f64>> = score.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let mut a = hungarian(&neg);
    a.total_cost = -a.total_cost;
    a
}
