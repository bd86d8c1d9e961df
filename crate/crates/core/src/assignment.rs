//! Maximum-weight perfect assignment (Hungarian method with potentials)
//! and the lexicographically smallest optimum among ties.

/// Returns `assign` with `assign[row] = col`, maximizing
/// `Σ weight[row][col]`; among optimal assignments the lexicographically
/// smallest `assign` is chosen (up to `tie_tol` on reduced costs).
pub(crate) fn max_weight_assignment(weight: &[Vec<f64>], tie_tol: f64) -> Vec<usize> {
    let n = weight.len();
    if n == 0 {
        return Vec::new();
    }
    let (assign, u, v) = hungarian_min(n, |i, j| -weight[i][j]);

    // Every optimal assignment uses only edges that are tight for this
    // optimal dual, and every perfect matching of tight edges is optimal.
    let tight: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| (-weight[i][j] - u[i] - v[j]).abs() <= tie_tol)
                .collect()
        })
        .collect();
    lexicographic_matching(&tight, assign)
}

/// Dense O(n³) Hungarian algorithm for minimum cost; returns the
/// assignment and the row/column potentials.
fn hungarian_min<C: Fn(usize, usize) -> f64>(n: usize, cost: C) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
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
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    (assign, u[1..].to_vec(), v[1..].to_vec())
}

/// Lexicographically smallest perfect matching of a bipartite graph,
/// starting from a known perfect matching `start`.
fn lexicographic_matching(adj: &[Vec<usize>], start: Vec<usize>) -> Vec<usize> {
    let n = adj.len();
    let mut row_of = vec![0usize; n];
    let mut col_of = start;
    for (r, &c) in col_of.iter().enumerate() {
        row_of[c] = r;
    }
    let mut fixed_col = vec![false; n];
    for k in 0..n {
        for &j in &adj[k] {
            if fixed_col[j] {
                continue;
            }
            if j == col_of[k] {
                break;
            }
            if let Some(path) = alternating_path(adj, &col_of, &row_of, &fixed_col, k, j) {
                // path: rows r_0 = row_of[j], r_1, ... with new columns c_1, c_2, ...
                for (r, c) in path {
                    col_of[r] = c;
                    row_of[c] = r;
                }
                col_of[k] = j;
                row_of[j] = k;
                break;
            }
        }
        fixed_col[col_of[k]] = true;
    }
    col_of
}

/// Searches for rows/columns `r_0 = row_of[j] → c_1 → r_1 → … → c_t = col_of[k]`
/// over free columns, returning the reassignment `(r_i, c_{i+1})`.
fn alternating_path(
    adj: &[Vec<usize>],
    col_of: &[usize],
    row_of: &[usize],
    fixed_col: &[bool],
    k: usize,
    j: usize,
) -> Option<Vec<(usize, usize)>> {
    let n = adj.len();
    let target = col_of[k];
    let start = row_of[j];
    let mut seen_col = vec![false; n];
    seen_col[j] = true;
    // parent[c] = row that reached column c.
    let mut parent = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(r) = queue.pop_front() {
        for &c in &adj[r] {
            if fixed_col[c] || seen_col[c] {
                continue;
            }
            seen_col[c] = true;
            parent[c] = r;
            if c == target {
                let mut path = Vec::new();
                let mut col = c;
                loop {
                    let row = parent[col];
                    path.push((row, col));
                    if row == start {
                        break;
                    }
                    col = col_of[row];
                }
                return Some(path);
            }
            let next = row_of[c];
            if next != k {
                queue.push_back(next);
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out.sort();
        out
    }

    /// Lexicographically first permutation attaining the maximum.
    fn brute_force(w: &[Vec<f64>]) -> (f64, Vec<usize>) {
        let mut best = (f64::NEG_INFINITY, vec![]);
        for p in permutations(w.len()) {
            let s: f64 = p.iter().enumerate().map(|(i, &j)| w[i][j]).sum();
            if s > best.0 + 1e-9 {
                best = (s, p);
            }
        }
        best
    }

    fn score(w: &[Vec<f64>], p: &[usize]) -> f64 {
        p.iter().enumerate().map(|(i, &j)| w[i][j]).sum()
    }

    #[test]
    fn matches_brute_force_on_random_and_tied_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..300 {
            let n = 1 + trial % 6;
            let w: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            if trial % 2 == 0 {
                                rng.random::<f64>()
                            } else {
                                // Coarse values force many ties.
                                (rng.random::<f64>() * 3.0).floor() / 2.0
                            }
                        })
                        .collect()
                })
                .collect();
            let got = max_weight_assignment(&w, 1e-9);
            let (best, lex) = brute_force(&w);
            assert!((score(&w, &got) - best).abs() < 1e-9, "trial {trial}");
            assert_eq!(got, lex, "trial {trial}");
        }
    }

    #[test]
    fn greedy_is_not_enough() {
        // Row-by-row greedy takes (0,0) = 0.6 and is left with 0.0.
        let w = vec![vec![0.6, 0.5], vec![0.5, 0.0]];
        let mut taken = [false; 2];
        let mut greedy = 0.0;
        for row in &w {
            let (j, v) = row
                .iter()
                .enumerate()
                .filter(|(j, _)| !taken[*j])
                .fold((0, f64::NEG_INFINITY), |a, (j, &v)| if v > a.1 { (j, v) } else { a });
            taken[j] = true;
            greedy += v;
        }
        let exact = score(&w, &max_weight_assignment(&w, 1e-9));
        assert!(exact > greedy + 0.1, "exact {exact} greedy {greedy}");
    }
}
