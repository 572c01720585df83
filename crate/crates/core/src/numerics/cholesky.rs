//! Envelope (profile) Cholesky factorization with reverse Cuthill-McKee
//! ordering.
//!
//! Mesh matrices are banded after RCM reordering, and the envelope of the
//! Cholesky factor equals the envelope of the permuted matrix, so the factor
//! is stored row-wise from the first nonzero column of each row to the
//! diagonal. Factorization is done once; solves are read-only and can run
//! concurrently against a shared factor.

use std::collections::VecDeque;

use super::sparse::CsrMatrix;
use super::NumericsError;

/// Relative pivot threshold below which a matrix is reported as not positive
/// definite.
const PIVOT_TOLERANCE: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct SpdFactor {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    values: Vec<f64>,
}

impl SpdFactor {
    pub fn factorize(a: &CsrMatrix) -> Result<Self, NumericsError> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(NumericsError::NotSquare { rows: n, cols: a.ncols() });
        }
        let perm = reverse_cuthill_mckee(a);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for (new, &old) in perm.iter().enumerate() {
            for (j, _) in a.row(old) {
                let jn = iperm[j];
                if jn < first[new] {
                    first[new] = jn;
                }
            }
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0usize);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first[i] + 1));
        }
        let mut values = vec![0.0; row_start[n]];
        for (new, &old) in perm.iter().enumerate() {
            for (j, v) in a.row(old) {
                let jn = iperm[j];
                if jn <= new {
                    values[row_start[new] + jn - first[new]] += v;
                }
            }
        }

        for i in 0..n {
            let fi = first[i];
            let ri = row_start[i];
            for j in fi..i {
                let fj = first[j];
                let rj = row_start[j];
                let k0 = fi.max(fj);
                let mut sum = values[ri + j - fi];
                for k in k0..j {
                    sum -= values[ri + k - fi] * values[rj + k - fj];
                }
                values[ri + j - fi] = sum / values[rj + j - fj];
            }
            let diag_in = values[ri + i - fi];
            let mut d = diag_in;
            for k in fi..i {
                let l = values[ri + k - fi];
                d -= l * l;
            }
            if !(d > PIVOT_TOLERANCE * diag_in.abs()) || !d.is_finite() {
                return Err(NumericsError::NotPositiveDefinite { pivot: perm[i], value: d });
            }
            values[ri + i - fi] = d.sqrt();
        }

        Ok(Self { n, perm, first, row_start, values })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries in the factor.
    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        assert_eq!(x.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let ri = self.row_start[i];
            let mut sum = y[i];
            for k in fi..i {
                sum -= self.values[ri + k - fi] * y[k];
            }
            y[i] = sum / self.values[ri + i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let ri = self.row_start[i];
            y[i] /= self.values[ri + i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.values[ri + k - fi] * yi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
    }
}

/// Reverse Cuthill-McKee ordering of the symmetric sparsity pattern of `a`,
/// returned as `perm[new] = old`. Each connected component starts from a
/// pseudo-peripheral vertex; ties are broken by index so the ordering is
/// deterministic.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|i| a.row(i).map(|(j, _)| j).filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);

    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.sort_by_key(|&i| (degree[i], i));
    for seed in seeds {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adjacency, &degree);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adjacency[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adjacency: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let mut level = vec![usize::MAX; adjacency.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut reached = vec![start];
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        for &u in &adjacency[v] {
            if level[u] == usize::MAX {
                level[u] = level[v] + 1;
                depth = depth.max(level[u]);
                reached.push(u);
                queue.push_back(u);
            }
        }
    }
    let last: Vec<usize> = reached.into_iter().filter(|&v| level[v] == depth).collect();
    (last, depth)
}

fn pseudo_peripheral(seed: usize, adjacency: &[Vec<usize>], degree: &[usize]) -> usize {
    let mut current = seed;
    let (mut last_level, mut depth) = bfs_levels(current, adjacency);
    loop {
        let candidate = *last_level
            .iter()
            .min_by_key(|&&v| (degree[v], v))
            .expect("BFS reaches at least the start vertex");
        let (cand_level, cand_depth) = bfs_levels(candidate, adjacency);
        if cand_depth <= depth {
            return current;
        }
        current = candidate;
        depth = cand_depth;
        last_level = cand_level;
    }
}
