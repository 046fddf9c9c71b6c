//! Weighted edge sets and the incidence operators `B`, `B*`.
//!
//! Edges are pairs `(i, j)` with `i < j`, kept in lexicographic order; the
//! position of an edge in that order is its column index `l(i, j)` in every
//! `d × |E|` matrix. The node-arc incidence matrix `J` is never formed:
//! `B(X) = XJ` and `B*(Z) = ZJᵀ` stream over the edge list, and `B*B` is
//! right-multiplication by the unweighted Laplacian `L_G = JJᵀ`.

mod knn;

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::matrix::{dist_sq, Mat};
use crate::{Error, Result};

pub use knn::knn_lists;

#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Vec<f64>,
    degrees: Vec<usize>,
}

impl WeightGraph {
    /// Builds a graph from arbitrary `(i, j, w)` triples (0-based).
    ///
    /// Pairs are oriented so `i < j`; self-loops and nonpositive weights are
    /// dropped; duplicate pairs are coalesced keeping the largest weight.
    pub fn from_edges(n: usize, triples: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut list: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, w) in triples {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            if !w.is_finite() {
                return Err(Error::InvalidArgument(format!("edge ({i}, {j}) has non-finite weight")));
            }
            if i == j || w <= 0.0 {
                continue;
            }
            list.push((i.min(j), i.max(j), w));
        }
        list.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(b.2.total_cmp(&a.2)));
        list.dedup_by(|next, kept| (next.0, next.1) == (kept.0, kept.1));
        let mut degrees = vec![0; n];
        for &(i, j, _) in &list {
            degrees[i] += 1;
            degrees[j] += 1;
        }
        Ok(WeightGraph {
            n,
            edges: list.iter().map(|&(i, j, _)| (i, j)).collect(),
            weights: list.iter().map(|e| e.2).collect(),
            degrees,
        })
    }

    /// Union k-NN graph with Gaussian weights `w_ij = exp(−φ‖a_i − a_j‖²)`.
    ///
    /// `(i, j)` is an edge when `j` is among the `k` nearest neighbors of `i` or
    /// vice versa. Distance ties are broken toward the smaller index. `phi = 0`
    /// gives unit weights. Pairs whose weight underflows to zero are omitted.
    pub fn knn(data: &Dataset, k: usize, phi: f64) -> Result<Self> {
        let n = data.len();
        if k == 0 || k >= n {
            return Err(Error::InvalidArgument(format!("k = {k} must lie in 1..={}", n.saturating_sub(1))));
        }
        if !(phi >= 0.0) || !phi.is_finite() {
            return Err(Error::InvalidArgument("phi must be a finite nonnegative number".into()));
        }
        let lists = knn_lists(&data.points, k);
        let mut triples = Vec::with_capacity(n * k);
        for (i, nbrs) in lists.iter().enumerate() {
            for &(d2, j) in nbrs {
                triples.push((i, j, (-phi * d2).exp()));
            }
        }
        Self::from_edges(n, triples)
    }

    /// Adds every same-label pair, weighted by the Gaussian formula.
    /// Existing edges keep their weight.
    pub fn with_within_cluster_edges(&self, points: &Mat, labels: &[usize], phi: f64) -> Result<Self> {
        if labels.len() != self.n || points.cols() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} labels / {} points for a graph on {} nodes",
                labels.len(),
                points.cols(),
                self.n
            )));
        }
        let k = crate::data::num_classes(labels)?;
        let mut members = vec![Vec::new(); k];
        for (i, &l) in labels.iter().enumerate() {
            members[l - 1].push(i);
        }
        let mut triples: Vec<(usize, usize, f64)> = self.triples().collect();
        let existing: std::collections::HashSet<(usize, usize)> = self.edges.iter().copied().collect();
        for m in &members {
            for (a, &i) in m.iter().enumerate() {
                for &j in &m[a + 1..] {
                    if !existing.contains(&(i, j)) {
                        triples.push((i, j, (-phi * dist_sq(points.col(i), points.col(j))).exp()));
                    }
                }
            }
        }
        Self::from_edges(self.n, triples)
    }

    /// Complete graph with unit weights.
    pub fn complete(n: usize) -> Self {
        let triples = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j, 1.0)));
        Self::from_edges(n, triples).expect("complete graph is well formed")
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    pub fn triples(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().zip(&self.weights).map(|(&(i, j), &w)| (i, j, w))
    }

    /// Column index `l(i, j)` of an edge, if present.
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = (i.min(j), i.max(j));
        self.edges.binary_search(&key).ok()
    }

    /// Adjacency lists (unweighted), neighbors in increasing order.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj: Vec<Vec<usize>> = self.degrees.iter().map(|&d| Vec::with_capacity(d)).collect();
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj.iter_mut().for_each(|a| a.sort_unstable());
        adj
    }

    fn check_nodes(&self, x: &Mat) -> Result<()> {
        if x.cols() != self.n {
            return Err(Error::DimensionMismatch(format!("{} columns, graph has {} nodes", x.cols(), self.n)));
        }
        Ok(())
    }

    fn check_edges(&self, z: &Mat) -> Result<()> {
        if z.cols() != self.edges.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns, graph has {} edges",
                z.cols(),
                self.edges.len()
            )));
        }
        Ok(())
    }

    /// `B(X)`: column `l(i, j)` is `x_i − x_j`.
    pub fn apply_b(&self, x: &Mat) -> Result<Mat> {
        self.check_nodes(x)?;
        let mut out = Mat::zeros(x.rows(), self.edges.len());
        self.apply_b_into(x, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_b_into(&self, x: &Mat, out: &mut Mat) {
        debug_assert_eq!(out.shape(), (x.rows(), self.edges.len()));
        for (l, &(i, j)) in self.edges.iter().enumerate() {
            let (xi, xj) = (x.col(i), x.col(j));
            for ((o, a), b) in out.col_mut(l).iter_mut().zip(xi).zip(xj) {
                *o = a - b;
            }
        }
    }

    /// `B*(Z)`: node `i` collects `+Z^{l(i,j)}` and node `j` collects `−Z^{l(i,j)}`.
    pub fn apply_bstar(&self, z: &Mat) -> Result<Mat> {
        self.check_edges(z)?;
        let mut out = Mat::zeros(z.rows(), self.n);
        self.apply_bstar_into(z, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_bstar_into(&self, z: &Mat, out: &mut Mat) {
        out.fill(0.0);
        self.accumulate_bstar(z, 1.0, out);
    }

    /// `out += scale · B*(Z)`.
    pub(crate) fn accumulate_bstar(&self, z: &Mat, scale: f64, out: &mut Mat) {
        let d = z.rows();
        for (l, &(i, j)) in self.edges.iter().enumerate() {
            let zl = z.col(l);
            {
                let oi = out.col_mut(i);
                for k in 0..d {
                    oi[k] += scale * zl[k];
                }
            }
            let oj = out.col_mut(j);
            for k in 0..d {
                oj[k] -= scale * zl[k];
            }
        }
    }

    /// `X · L_G`, computed as `B*(B(X))` in one pass over the edges.
    pub fn laplacian_apply(&self, x: &Mat) -> Result<Mat> {
        self.check_nodes(x)?;
        let mut out = Mat::zeros(x.rows(), self.n);
        self.laplacian_accumulate(x, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale · X L_G`.
    pub(crate) fn laplacian_accumulate(&self, x: &Mat, scale: f64, out: &mut Mat) {
        let d = x.rows();
        let mut diff = vec![0.0; d];
        for &(i, j) in &self.edges {
            let (xi, xj) = (x.col(i), x.col(j));
            for k in 0..d {
                diff[k] = scale * (xi[k] - xj[k]);
            }
            let oi = out.col_mut(i);
            for k in 0..d {
                oi[k] += diff[k];
            }
            let oj = out.col_mut(j);
            for k in 0..d {
                oj[k] -= diff[k];
            }
        }
    }

    /// Largest eigenvalue of the unweighted Laplacian by power iteration,
    /// together with the bound `2 · max degree`.
    pub fn laplacian_max_eigenvalue(&self) -> LaplacianSpectrum {
        let degree_bound = 2.0 * self.max_degree() as f64;
        if self.edges.is_empty() {
            return LaplacianSpectrum { lambda_max: 0.0, degree_bound, iterations: 0 };
        }
        let n = self.n;
        // Deterministic start vector orthogonal to the all-ones kernel.
        let mut v: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() - 0.5).collect();
        let mut lambda = 0.0;
        let mut iterations = 0;
        let apply = |v: &[f64]| {
            let x = Mat::from_col_major(1, n, v.to_vec());
            self.laplacian_apply(&x).expect("shape").into_vec()
        };
        for it in 1..=20_000 {
            let mean = v.iter().sum::<f64>() / n as f64;
            v.iter_mut().for_each(|x| *x -= mean);
            let norm = crate::matrix::norm2(&v);
            if norm == 0.0 {
                break;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let w = apply(&v);
            let rayleigh = crate::matrix::dot(&v, &w);
            iterations = it;
            let converged = (rayleigh - lambda).abs() <= 1e-9 * rayleigh.abs();
            lambda = rayleigh;
            v = w;
            if converged && it > 2 {
                break;
            }
        }
        LaplacianSpectrum { lambda_max: lambda, degree_bound, iterations }
    }

    pub fn summary(&self) -> GraphSummary {
        GraphSummary {
            schema: "v1".into(),
            n: self.n,
            num_edges: self.edges.len(),
            max_degree: self.max_degree(),
            lambda_max_bound: 2.0 * self.max_degree() as f64,
        }
    }

    /// Writes `i j w` lines (1-based indices, `i < j`).
    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (i, j, wt) in self.triples() {
            writeln!(w, "{} {} {:?}", i + 1, j + 1, wt).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads `i j w` lines (1-based). Blank lines and `#` comments are skipped.
    pub fn read_edge_list(path: impl AsRef<Path>, n: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut triples = Vec::new();
        for (r, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                return Err(Error::Parse { row: r + 1, column: 0, message: "expected `i j w`".into() });
            }
            let idx = |c: usize| -> Result<usize> {
                match fields[c].parse::<usize>() {
                    Ok(v) if v >= 1 => Ok(v - 1),
                    _ => Err(Error::Parse { row: r + 1, column: c + 1, message: "bad 1-based index".into() }),
                }
            };
            let w: f64 =
                fields[2].parse().map_err(|_| Error::Parse { row: r + 1, column: 3, message: "bad weight".into() })?;
            triples.push((idx(0)?, idx(1)?, w));
        }
        Self::from_edges(n, triples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplacianSpectrum {
    pub lambda_max: f64,
    pub degree_bound: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub schema: String,
    pub n: usize,
    pub num_edges: usize,
    pub max_degree: usize,
    pub lambda_max_bound: f64,
}
