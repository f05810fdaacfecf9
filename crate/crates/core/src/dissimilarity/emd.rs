//! Earth mover's distance solved as a transportation problem.
//!
//! Unequal masses are handled by a zero-cost dummy row or column that absorbs
//! the surplus, so the real flow totals `min(sum H, sum K)`. Empty bins are
//! dropped before solving; the problem is then handed to a transportation
//! simplex (least-cost start, MODI pricing, stepping-stone pivots).

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Symmetric non-negative bin-to-bin cost matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundDistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl GroundDistanceMatrix {
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::LengthMismatch {
                left: d.len(),
                right: n * n,
            });
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::InvalidParameter("ground distance diagonal must be zero".into()));
            }
            for j in 0..n {
                let v = d[i * n + j];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidParameter("ground distances must be finite and non-negative".into()));
                }
                if (v - d[j * n + i]).abs() > 1e-12 * v.max(1.0) {
                    return Err(Error::InvalidParameter("ground distance matrix must be symmetric".into()));
                }
            }
        }
        Ok(Self { n, d })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut d = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                d.push(f(i, j));
            }
        }
        Self::new(n, d)
    }

    /// `d_ij = |i - j|`.
    pub fn linear(n: usize) -> Self {
        Self::from_fn(n, |i, j| (i as f64 - j as f64).abs()).expect("linear ground distance is valid")
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }
}

/// Sparse optimal flow: only non-zero entries are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMatrix {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl FlowMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.0 == i && e.1 == j)
            .map(|e| e.2)
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.entries.iter().filter(|e| e.0 == i).map(|e| e.2).sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        self.entries.iter().filter(|e| e.1 == j).map(|e| e.2).sum()
    }
}

/// Earth mover's distance: optimal transport cost divided by the total flow.
pub fn emd(h: &[f64], k: &[f64], ground: &GroundDistanceMatrix) -> Result<(f64, FlowMatrix)> {
    if h.len() != k.len() {
        return Err(Error::LengthMismatch {
            left: h.len(),
            right: k.len(),
        });
    }
    if ground.size() != h.len() {
        return Err(Error::LengthMismatch {
            left: ground.size(),
            right: h.len(),
        });
    }
    if h.iter().chain(k).any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("EMD masses must be finite and non-negative".into()));
    }
    let mass_h: f64 = h.iter().sum();
    let mass_k: f64 = k.iter().sum();
    if !(mass_h > 0.0) || !(mass_k > 0.0) {
        return Err(Error::EmptyInput("EMD needs positive total mass on both sides"));
    }

    let rows: Vec<usize> = (0..h.len()).filter(|&i| h[i] > 0.0).collect();
    let cols: Vec<usize> = (0..k.len()).filter(|&j| k[j] > 0.0).collect();
    let mut supply: Vec<f64> = rows.iter().map(|&i| h[i]).collect();
    let mut demand: Vec<f64> = cols.iter().map(|&j| k[j]).collect();
    let mut cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| cols.iter().map(|&j| ground.get(i, j)).collect())
        .collect();

    // Balance with a zero-cost dummy; its flow is discarded afterwards.
    let surplus = mass_h - mass_k;
    let (real_rows, real_cols) = (rows.len(), cols.len());
    if surplus > 0.0 {
        demand.push(surplus);
        cost.iter_mut().for_each(|r| r.push(0.0));
    } else if surplus < 0.0 {
        supply.push(-surplus);
        cost.push(vec![0.0; demand.len()]);
    }

    let flows = Transport::solve(supply, demand, cost);
    let mut entries = Vec::new();
    let mut work = 0.0;
    let mut total = 0.0;
    for (r, c, f) in flows {
        if r < real_rows && c < real_cols && f > 0.0 {
            let (i, j) = (rows[r], cols[c]);
            work += f * ground.get(i, j);
            total += f;
            entries.push((i, j, f));
        }
    }
    entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let value = if total > 0.0 { work / total } else { 0.0 };
    Ok((
        value,
        FlowMatrix {
            n: h.len(),
            entries,
        },
    ))
}

struct Transport {
    m: usize,
    n: usize,
    cost: Vec<Vec<f64>>,
    /// Basic cells and their flows; always a spanning tree over `m + n` nodes.
    basis: Vec<(usize, usize, f64)>,
}

impl Transport {
    fn solve(supply: Vec<f64>, demand: Vec<f64>, cost: Vec<Vec<f64>>) -> Vec<(usize, usize, f64)> {
        let mut t = Transport {
            m: supply.len(),
            n: demand.len(),
            cost,
            basis: Vec::new(),
        };
        t.initial_basis(supply, demand);
        t.optimize();
        t.basis
    }

    fn initial_basis(&mut self, mut supply: Vec<f64>, mut demand: Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
        cells.sort_by(|a, b| {
            self.cost[a.0][a.1]
                .total_cmp(&self.cost[b.0][b.1])
                .then(a.cmp(b))
        });
        let mut uf = UnionFind::new(m + n);
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; n];
        for &(i, j) in &cells {
            if row_done[i] || col_done[j] {
                continue;
            }
            let f = supply[i].min(demand[j]);
            supply[i] -= f;
            demand[j] -= f;
            let joined = uf.union(i, m + j);
            debug_assert!(joined, "least-cost allocations form a forest");
            self.basis.push((i, j, f));
            // exhaust exactly one side so the allocations stay a forest
            // on a tie the column stays open with zero demand and later
            // receives a degenerate zero-flow cell
            if supply[i] <= demand[j] {
                row_done[i] = true;
            } else {
                col_done[j] = true;
            }
        }
        // complete the forest to a spanning tree with zero-flow cells
        for &(i, j) in &cells {
            if self.basis.len() == m + n - 1 {
                break;
            }
            if uf.union(i, m + j) {
                self.basis.push((i, j, 0.0));
            }
        }
    }

    fn potentials(&self) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let adj = self.adjacency();
        let mut u = vec![f64::NAN; m];
        let mut v = vec![f64::NAN; n];
        u[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &(other, cell) in &adj[node] {
                let (i, j, _) = self.basis[cell];
                if node < m {
                    if v[j].is_nan() {
                        v[j] = self.cost[i][j] - u[i];
                        queue.push_back(other);
                    }
                } else if u[i].is_nan() {
                    u[i] = self.cost[i][j] - v[j];
                    queue.push_back(other);
                }
            }
        }
        (u, v)
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (c, &(i, j, _)) in self.basis.iter().enumerate() {
            adj[i].push((self.m + j, c));
            adj[self.m + j].push((i, c));
        }
        adj
    }

    fn optimize(&mut self) {
        let (m, n) = (self.m, self.n);
        let scale = self
            .cost
            .iter()
            .flatten()
            .fold(0.0f64, |a, &c| a.max(c.abs()))
            .max(1.0);
        let eps = 1e-12 * scale;
        let max_iter = 50 * (m + n) * (m + n) + 1000;
        for _ in 0..max_iter {
            let (u, v) = self.potentials();
            let mut best = (-eps, usize::MAX, usize::MAX);
            for i in 0..m {
                for j in 0..n {
                    let rc = self.cost[i][j] - u[i] - v[j];
                    if rc < best.0 {
                        best = (rc, i, j);
                    }
                }
            }
            if best.1 == usize::MAX {
                return;
            }
            self.pivot(best.1, best.2);
        }
        log::warn!("transportation simplex hit its iteration limit");
    }

    /// Brings cell `(ei, ej)` into the basis along the unique tree cycle.
    fn pivot(&mut self, ei: usize, ej: usize) {
        let m = self.m;
        let adj = self.adjacency();
        // path in the tree from column node ej to row node ei
        let target = ei;
        let start = m + ej;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + self.n];
        let mut seen = vec![false; m + self.n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(other, cell) in &adj[node] {
                if !seen[other] {
                    seen[other] = true;
                    parent[other] = Some((node, cell));
                    queue.push_back(other);
                }
            }
        }
        // walk back from the row node; cells alternate -, +, -, ... starting
        // next to the entering cell (which is +)
        let mut path_cells = Vec::new();
        let mut node = target;
        while node != start {
            let (prev, cell) = parent[node].expect("basis is a spanning tree");
            path_cells.push(cell);
            node = prev;
        }
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (pos, &cell) in path_cells.iter().enumerate() {
            if pos % 2 == 0 {
                let f = self.basis[cell].2;
                if f < theta {
                    theta = f;
                    leaving = cell;
                }
            }
        }
        for (pos, &cell) in path_cells.iter().enumerate() {
            if pos % 2 == 0 {
                self.basis[cell].2 -= theta;
            } else {
                self.basis[cell].2 += theta;
            }
        }
        self.basis[leaving] = (ei, ej, theta);
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    /// Returns false when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_histograms_cost_nothing() {
        let h = [0.2, 0.5, 0.3];
        let (d, flow) = emd(&h, &h, &GroundDistanceMatrix::linear(3)).unwrap();
        assert_eq!(d, 0.0);
        for i in 0..3 {
            assert!((flow.get(i, i) - h[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn opposite_ends() {
        let (d, flow) = emd(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &GroundDistanceMatrix::linear(3)).unwrap();
        assert!((d - 2.0).abs() < 1e-12);
        assert_eq!(flow.get(0, 2), 1.0);
    }

    #[test]
    fn partial_match_moves_min_mass() {
        let h = [2.0, 0.0, 1.0];
        let k = [0.0, 1.0, 0.0];
        let (d, flow) = emd(&h, &k, &GroundDistanceMatrix::linear(3)).unwrap();
        assert!((flow.total() - 1.0).abs() < 1e-12);
        assert!((d - 1.0).abs() < 1e-12);
        assert!(flow.row_sum(0) <= 2.0 + 1e-12 && flow.row_sum(2) <= 1.0 + 1e-12);
        assert!(flow.col_sum(1) <= 1.0 + 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let g = GroundDistanceMatrix::linear(2);
        assert!(emd(&[1.0], &[1.0, 0.0], &g).is_err());
        assert!(emd(&[0.0, 0.0], &[1.0, 0.0], &g).is_err());
        assert!(emd(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &g).is_err());
        assert!(GroundDistanceMatrix::new(2, vec![0.0, 1.0, 2.0, 0.0]).is_err());
        assert!(GroundDistanceMatrix::new(2, vec![1.0, 1.0, 1.0, 0.0]).is_err());
    }

    #[test]
    fn degenerate_ties_terminate() {
        // many simultaneous exhaustions in the starting solution
        let h = [0.25; 4];
        let k = [0.25; 4];
        let g = GroundDistanceMatrix::from_fn(4, |i, j| if i == j { 0.0 } else { 1.0 }).unwrap();
        let (d, _) = emd(&h, &[k[1], k[0], k[3], k[2]], &g).unwrap();
        assert!(d.abs() < 1e-15);
        let (d, _) = emd(&h, &[0.5, 0.5, 0.0, 0.0], &g).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }
}
