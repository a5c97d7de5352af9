//! Dense linear sum assignment by shortest augmenting paths.
//!
//! The exact phase is the Jonker-Volgenant family as refined by Crouse: each
//! free row is inserted in turn, and a Dijkstra search over reduced costs
//! finds the cheapest augmenting path to a free column. Dual potentials keep
//! every reduced cost nonnegative, so the final assignment is an exact
//! minimum. Worst case is `O(n^3)`; costs are evaluated on demand so memory
//! stays `O(n)`.
//!
//! The duals are seeded by an epsilon-scaling auction, which leaves most rows
//! matched at an exact row minimum and keeps the remaining augmenting paths
//! short. Everything is sequential with fixed tie rules (lowest index in the
//! auction; free column first in the search), so the output is deterministic.

/// A square cost matrix accessed by `(row, col)`.
pub trait CostMatrix {
    fn size(&self) -> usize;
    fn cost(&self, row: usize, col: usize) -> f64;
}

/// Row-major dense costs.
#[derive(Clone, Debug)]
pub struct DenseCost {
    n: usize,
    data: Vec<f64>,
}

impl DenseCost {
    /// Panics unless `data.len() == n * n`.
    pub fn new(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "dense cost matrix must be n x n");
        Self { n, data }
    }
}

impl CostMatrix for DenseCost {
    fn size(&self) -> usize {
        self.n
    }

    fn cost(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n + col]
    }
}

/// Squared Euclidean distances between two equally sized point sets stored
/// as flat row-major buffers.
#[derive(Clone, Copy, Debug)]
pub struct SquaredEuclidean<'a> {
    pub rows: &'a [f64],
    pub cols: &'a [f64],
    pub dim: usize,
}

impl CostMatrix for SquaredEuclidean<'_> {
    fn size(&self) -> usize {
        self.rows.len() / self.dim
    }

    #[inline]
    fn cost(&self, row: usize, col: usize) -> f64 {
        let a = &self.rows[row * self.dim..(row + 1) * self.dim];
        let b = &self.cols[col * self.dim..(col + 1) * self.dim];
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }
}

const NONE: usize = usize::MAX;

/// Returns `col_for_row`, a permutation minimizing `sum_i cost(i, col_for_row[i])`.
pub fn solve<C: CostMatrix + ?Sized>(costs: &C) -> Vec<usize> {
    let n = costs.size();
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut col4row = vec![NONE; n];
    let mut row4col = vec![NONE; n];
    let mut path = vec![NONE; n];
    let mut shortest = vec![f64::INFINITY; n];
    let mut touched_rows = Vec::with_capacity(n);
    let mut touched_cols = Vec::with_capacity(n);

    auction(costs, &mut col4row, &mut row4col, &mut v);
    // v is feasible with u[i] = min_j c(i, j) - v[j]. Only rows whose auction
    // column attains that minimum exactly stay matched.
    for i in 0..n {
        let mut m = f64::INFINITY;
        for j in 0..n {
            m = m.min(costs.cost(i, j) - v[j]);
        }
        u[i] = m;
        let j = col4row[i];
        if j != NONE && costs.cost(i, j) - v[j] != m {
            col4row[i] = NONE;
            row4col[j] = NONE;
        }
    }

    // Columns not yet scanned in the current search occupy
    // `remaining[n_scanned..]`; scanning swaps a column to the front.
    let mut remaining: Vec<usize> = (0..n).collect();
    for cur_row in 0..n {
        if col4row[cur_row] != NONE {
            continue;
        }
        for &c in &touched_cols {
            shortest[c] = f64::INFINITY;
        }
        for &c in &remaining {
            shortest[c] = f64::INFINITY;
        }
        touched_rows.clear();
        touched_cols.clear();

        let mut min_val = 0.0;
        let mut i = cur_row;
        let mut n_scanned = 0;
        let sink = loop {
            touched_rows.push(i);
            let offset = min_val - u[i];
            let mut lowest = f64::INFINITY;
            let mut best = NONE;
            for (slot, &j) in remaining.iter().enumerate().skip(n_scanned) {
                let reduced = offset + costs.cost(i, j) - v[j];
                if reduced < shortest[j] {
                    path[j] = i;
                    shortest[j] = reduced;
                }
                let s = shortest[j];
                if s < lowest
                    || (s == lowest && row4col[j] == NONE && row4col[remaining[best]] != NONE)
                {
                    lowest = s;
                    best = slot;
                }
            }
            assert!(best != NONE, "cost matrix contains non-finite entries");
            min_val = lowest;
            remaining.swap(n_scanned, best);
            let j = remaining[n_scanned];
            n_scanned += 1;
            touched_cols.push(j);
            if row4col[j] == NONE {
                break j;
            }
            i = row4col[j];
        };

        u[cur_row] += min_val;
        for &r in &touched_rows {
            if r != cur_row {
                u[r] += min_val - shortest[col4row[r]];
            }
        }
        for &c in &touched_cols {
            v[c] -= min_val - shortest[c];
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row4col[j] = r;
            std::mem::swap(&mut col4row[r], &mut j);
            if r == cur_row {
                break;
            }
        }
    }
    col4row
}

/// Forward auction with epsilon scaling. Rows bid for the column of lowest
/// `c(i, j) + p[j]`, raising its price `p[j] = -v[j]` by the margin over
/// their second choice plus `eps`. The result is `eps`-optimal for the final
/// `eps`, which is far below the cost scale; it only seeds the exact search.
fn auction<C: CostMatrix + ?Sized>(
    costs: &C,
    col4row: &mut [usize],
    row4col: &mut [usize],
    v: &mut [f64],
) {
    let n = col4row.len();
    if n < 2 {
        return;
    }
    let mut scale: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = costs.cost(i, j);
            assert!(c.is_finite(), "cost matrix contains non-finite entries");
            scale = scale.max(c.abs());
        }
    }
    if scale == 0.0 {
        return;
    }
    let final_eps = scale * 1e-7;
    let mut eps = scale / 4.0;
    let mut stack = Vec::with_capacity(n);
    loop {
        col4row.fill(NONE);
        row4col.fill(NONE);
        stack.clear();
        stack.extend((0..n).rev());
        while let Some(i) = stack.pop() {
            let (mut j1, mut w1, mut w2) = (NONE, f64::INFINITY, f64::INFINITY);
            for j in 0..n {
                let w = costs.cost(i, j) - v[j];
                if w < w1 {
                    w2 = w1;
                    (j1, w1) = (j, w);
                } else if w < w2 {
                    w2 = w;
                }
            }
            v[j1] -= w2 - w1 + eps;
            let previous = row4col[j1];
            if previous != NONE {
                col4row[previous] = NONE;
                stack.push(previous);
            }
            row4col[j1] = i;
            col4row[i] = j1;
        }
        if eps <= final_eps {
            break;
        }
        eps = (eps / 6.0).max(final_eps);
    }
}

/// `sum_i cost(i, perm[i])`, summed in row order.
pub fn total_cost<C: CostMatrix + ?Sized>(costs: &C, perm: &[usize]) -> f64 {
    perm.iter()
        .enumerate()
        .map(|(i, &j)| costs.cost(i, j))
        .sum()
}
