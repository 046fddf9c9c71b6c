//! Sparse symmetric positive definite solves for systems of the form
//! `(F + σ L_G) x = b`, where `L_G` is the unit-weight Laplacian of the edge set.
//!
//! Small or narrow-band graphs use a Cholesky factor stored in envelope
//! (skyline) form after a reverse Cuthill–McKee reordering; large ones fall back
//! to Jacobi-preconditioned CG.

use std::collections::VecDeque;

use crate::graph::WeightGraph;
use crate::{Error, Result};

/// Envelope entries above which a direct factorization is not attempted.
pub const DEFAULT_ENVELOPE_LIMIT: usize = 20_000_000;

/// Reverse Cuthill–McKee ordering. `perm[k]` is the original index placed at
/// position `k`. Each connected component starts from a pseudo-peripheral node.
pub fn rcm_ordering(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (adj[i].len(), i));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(adj, seed);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (adj[u].len(), u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> (usize, Vec<usize>) {
    let mut dist = std::collections::HashMap::from([(start, 0usize)]);
    let mut order = vec![start];
    let mut head = 0;
    while head < order.len() {
        let v = order[head];
        head += 1;
        let dv = dist[&v];
        for &u in &adj[v] {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(u) {
                e.insert(dv + 1);
                order.push(u);
            }
        }
    }
    let depth = dist[order.last().expect("start is visited")];
    let last = order.iter().rev().take_while(|v| dist[v] == depth).copied().collect();
    (depth, last)
}

fn pseudo_peripheral(adj: &[Vec<usize>], seed: usize) -> usize {
    let mut v = seed;
    let (mut depth, mut last) = bfs_levels(adj, v);
    for _ in 0..8 {
        let Some(&u) = last.iter().min_by_key(|&&u| (adj[u].len(), u)) else { break };
        let (du, lu) = bfs_levels(adj, u);
        if du <= depth {
            break;
        }
        v = u;
        depth = du;
        last = lu;
    }
    v
}

/// Symbolic structure of an envelope factor: the ordering and, per permuted
/// row, the column where its envelope starts.
#[derive(Debug, Clone)]
pub struct EnvelopePattern {
    perm: Vec<usize>,
    inv: Vec<usize>,
    first: Vec<usize>,
    offsets: Vec<usize>,
    /// Neighbors in permuted numbering that lie strictly below the diagonal.
    lower: Vec<Vec<usize>>,
}

impl EnvelopePattern {
    pub fn new(graph: &WeightGraph) -> Self {
        let adj = graph.adjacency();
        let perm = rcm_ordering(&adj);
        let n = perm.len();
        let mut inv = vec![0; n];
        for (k, &i) in perm.iter().enumerate() {
            inv[i] = k;
        }
        let mut lower = vec![Vec::new(); n];
        for (k, &i) in perm.iter().enumerate() {
            let mut cols: Vec<usize> = adj[i].iter().map(|&j| inv[j]).filter(|&c| c < k).collect();
            cols.sort_unstable();
            lower[k] = cols;
        }
        let first: Vec<usize> = (0..n).map(|k| lower[k].first().copied().unwrap_or(k)).collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for k in 0..n {
            offsets.push(offsets[k] + (k - first[k] + 1));
        }
        EnvelopePattern { perm, inv, first, offsets, lower }
    }

    /// Number of stored entries of the factor.
    pub fn envelope_size(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// Rough multiply-add count of the numeric factorization.
    pub fn factor_cost(&self) -> f64 {
        (0..self.first.len()).map(|k| ((k - self.first[k] + 1) as f64).powi(2) / 2.0).sum()
    }

    /// Factors `diag(fidelity + σ deg) − σ Adj`.
    pub fn factor(&self, fidelity: &dyn Fn(usize) -> f64, sigma: f64, degrees: &[usize]) -> Result<EnvelopeCholesky> {
        let n = self.perm.len();
        let mut vals = vec![0.0; self.envelope_size()];
        for k in 0..n {
            let orig = self.perm[k];
            let base = self.offsets[k];
            let f = self.first[k];
            for &c in &self.lower[k] {
                vals[base + c - f] = -sigma;
            }
            vals[base + k - f] = fidelity(orig) + sigma * degrees[orig] as f64;
        }
        for k in 0..n {
            let fk = self.first[k];
            let bk = self.offsets[k];
            for j in fk..k {
                let fj = self.first[j];
                let bj = self.offsets[j];
                let start = fk.max(fj);
                let mut s = vals[bk + j - fk];
                let rk = &vals[bk + start - fk..bk + j - fk];
                let rj = &vals[bj + start - fj..bj + j - fj];
                s -= rk.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                let djj = vals[bj + j - fj];
                vals[bk + j - fk] = s / djj;
            }
            let row = &vals[bk..bk + k - fk];
            let pivot = vals[bk + k - fk] - row.iter().map(|v| v * v).sum::<f64>();
            if !(pivot > 0.0) || !pivot.is_finite() {
                return Err(Error::LinearSolver(format!("nonpositive pivot {pivot:e} at row {k}")));
            }
            vals[bk + k - fk] = pivot.sqrt();
        }
        Ok(EnvelopeCholesky { pattern: self.clone_light(), vals })
    }

    fn clone_light(&self) -> EnvelopePattern {
        EnvelopePattern {
            perm: self.perm.clone(),
            inv: self.inv.clone(),
            first: self.first.clone(),
            offsets: self.offsets.clone(),
            lower: Vec::new(),
        }
    }
}

/// Numeric envelope Cholesky factor `P M Pᵀ = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    pattern: EnvelopePattern,
    vals: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Solves `M x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let p = &self.pattern;
        let n = p.perm.len();
        let mut y: Vec<f64> = p.perm.iter().map(|&i| b[i]).collect();
        for k in 0..n {
            let (f, base) = (p.first[k], p.offsets[k]);
            let row = &self.vals[base..base + k - f];
            let s: f64 = row.iter().zip(&y[f..k]).map(|(a, b)| a * b).sum();
            y[k] = (y[k] - s) / self.vals[base + k - f];
        }
        for k in (0..n).rev() {
            let (f, base) = (p.first[k], p.offsets[k]);
            y[k] /= self.vals[base + k - f];
            let yk = y[k];
            let row = &self.vals[base..base + k - f];
            for (t, a) in y[f..k].iter_mut().zip(row) {
                *t -= a * yk;
            }
        }
        for (k, &i) in p.perm.iter().enumerate() {
            b[i] = y[k];
        }
        debug_assert_eq!(p.inv.len(), n);
    }
}

/// Outcome of a [`pcg`] run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Preconditioned CG for `M x = b` with diagonal preconditioner `diag`, starting
/// from the given `x`. Stops when `‖b − M x‖ ≤ tol`.
pub fn pcg(
    apply: impl Fn(&[f64], &mut [f64]),
    diag: &[f64],
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> CgOutcome {
    let n = b.len();
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut res = crate::matrix::norm2(&r);
    if res <= tol {
        return CgOutcome { iterations: 0, residual: res, converged: true };
    }
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = crate::matrix::dot(&r, &z);
    let mut q = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut q);
        let pq = crate::matrix::dot(&p, &q);
        if !(pq > 0.0) {
            return CgOutcome { iterations: it, residual: res, converged: false };
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        res = crate::matrix::norm2(&r);
        if res <= tol {
            return CgOutcome { iterations: it, residual: res, converged: true };
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = crate::matrix::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    CgOutcome { iterations: max_iter, residual: res, converged: false }
}
