//! The clustering model: primal and dual objectives, relative KKT residuals
//! and cluster extraction.
//!
//! In compact form the primal is
//!
//! ```text
//! (P)  min ½‖(X − A)F^{1/2}‖² + p(U)   s.t.  B(X) − U = 0,   p(U) = γ Σ_l w_l ‖U^l‖_p
//! ```
//!
//! with `F = diag(f)` the fidelity weights, and the dual is
//!
//! ```text
//! (D)  max ⟨A, V⟩ − ½ Σ_i ‖v_i‖² / f_i   s.t.  B*(Z) = V,  ‖Z^l‖_q ≤ γ w_l.
//! ```

pub mod eval;

use serde::{Deserialize, Serialize};

use crate::graph::WeightGraph;
use crate::matrix::{dist_sq, Mat};
use crate::prox::{self, NormKind};
use crate::{Error, Result};

/// One instance of the weighted sum-of-norms model. Borrowed, so a γ sweep can
/// share the data and the graph.
#[derive(Debug, Clone, Copy)]
pub struct ClusterProblem<'a> {
    pub points: &'a Mat,
    pub graph: &'a WeightGraph,
    pub gamma: f64,
    pub norm: NormKind,
    /// Per-point weights on the fidelity term; `None` means all ones.
    pub fidelity: Option<&'a [f64]>,
}

impl<'a> ClusterProblem<'a> {
    pub fn new(points: &'a Mat, graph: &'a WeightGraph, gamma: f64, norm: NormKind) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be positive and finite, got {gamma}")));
        }
        if graph.num_nodes() != points.cols() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} nodes, data has {} points",
                graph.num_nodes(),
                points.cols()
            )));
        }
        Ok(ClusterProblem { points, graph, gamma, norm, fidelity: None })
    }

    pub fn with_fidelity(mut self, fidelity: &'a [f64]) -> Result<Self> {
        if fidelity.len() != self.points.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} fidelity weights for {} points",
                fidelity.len(),
                self.points.cols()
            )));
        }
        if fidelity.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(Error::InvalidArgument("fidelity weights must be positive".into()));
        }
        self.fidelity = Some(fidelity);
        Ok(self)
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!("gamma must be positive and finite, got {gamma}")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.points.rows()
    }

    pub fn num_points(&self) -> usize {
        self.points.cols()
    }

    pub fn num_edges(&self) -> usize {
        self.graph.num_edges()
    }

    #[inline]
    pub fn fidelity_at(&self, i: usize) -> f64 {
        self.fidelity.map_or(1.0, |f| f[i])
    }

    /// `γ w_l` for every edge.
    pub fn thresholds(&self) -> Vec<f64> {
        self.graph.weights().iter().map(|w| self.gamma * w).collect()
    }

    /// Scales column `i` of `m` by `f_i`.
    pub(crate) fn apply_fidelity(&self, m: &mut Mat) {
        if let Some(f) = self.fidelity {
            for (i, &fi) in f.iter().enumerate() {
                m.col_mut(i).iter_mut().for_each(|v| *v *= fi);
            }
        }
    }

    pub(crate) fn check_x(&self, x: &Mat) -> Result<()> {
        if x.shape() != self.points.shape() {
            return Err(Error::DimensionMismatch(format!("X is {:?}, expected {:?}", x.shape(), self.points.shape())));
        }
        Ok(())
    }

    pub(crate) fn check_edge_mat(&self, name: &str, z: &Mat) -> Result<()> {
        let want = (self.dim(), self.num_edges());
        if z.shape() != want {
            return Err(Error::DimensionMismatch(format!("{name} is {:?}, expected {want:?}", z.shape())));
        }
        Ok(())
    }

    /// `‖A‖` (Frobenius).
    pub fn data_norm(&self) -> f64 {
        self.points.norm()
    }

    /// `½ Σ f_i ‖x_i − a_i‖²`.
    pub fn fidelity_term(&self, x: &Mat) -> f64 {
        (0..self.num_points()).map(|i| 0.5 * self.fidelity_at(i) * dist_sq(x.col(i), self.points.col(i))).sum()
    }

    /// Projects every column of `Z` onto its dual ball `{‖·‖_q ≤ γ w_l}`.
    pub fn project_dual(&self, z: &Mat) -> Result<Mat> {
        self.check_edge_mat("Z", z)?;
        let mut out = z.clone();
        for (l, w) in self.graph.weights().iter().enumerate() {
            prox::project_dual_ball_in_place(self.norm, self.gamma * w, out.col_mut(l));
        }
        Ok(out)
    }
}

/// Iterates of the primal-dual pair: centroids `X`, edge differences `U`,
/// multipliers `Z` and the dual variable `V = B*(Z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimalDualState {
    pub x: Mat,
    pub u: Mat,
    pub z: Mat,
    pub v: Mat,
}

impl PrimalDualState {
    /// `X = A`, `U = B(A)`, `Z = 0`.
    pub fn initial(prob: &ClusterProblem<'_>) -> Self {
        let x = prob.points.clone();
        let u = prob.graph.apply_b(&x).expect("shapes agree");
        let z = Mat::zeros(prob.dim(), prob.num_edges());
        let v = Mat::zeros(prob.dim(), prob.num_points());
        PrimalDualState { x, u, z, v }
    }

    pub fn check(&self, prob: &ClusterProblem<'_>) -> Result<()> {
        prob.check_x(&self.x)?;
        prob.check_edge_mat("U", &self.u)?;
        prob.check_edge_mat("Z", &self.z)?;
        prob.check_x(&self.v)?;
        if !(self.x.is_finite() && self.u.is_finite() && self.z.is_finite() && self.v.is_finite()) {
            return Err(Error::NonFiniteIterate("state"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    pub eta_p: f64,
    pub eta_d: f64,
    pub eta: f64,
    pub primal_obj: f64,
    /// Dual objective at the projection of `Z` onto the feasible set, so that
    /// `gap ≥ 0` up to rounding.
    pub dual_obj: f64,
    pub gap: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.eta_p.max(self.eta_d).max(self.eta)
    }
}

/// `½ Σ f_i ‖x_i − a_i‖² + γ Σ w_ij ‖x_i − x_j‖_p`.
pub fn primal_objective(prob: &ClusterProblem<'_>, x: &Mat) -> Result<f64> {
    prob.check_x(x)?;
    let reg: f64 = prob
        .graph
        .triples()
        .map(|(i, j, w)| {
            let diff: Vec<f64> = x.col(i).iter().zip(x.col(j)).map(|(a, b)| a - b).collect();
            w * prob.norm.norm(&diff)
        })
        .sum();
    Ok(prob.fidelity_term(x) + prob.gamma * reg)
}

/// `⟨A, V⟩ − ½ Σ ‖v_i‖² / f_i` with `V = B*(Z)`. Feasibility of `Z` is not
/// checked here; see [`KktResiduals::eta_d`].
pub fn dual_objective(prob: &ClusterProblem<'_>, z: &Mat) -> Result<f64> {
    prob.check_edge_mat("Z", z)?;
    let v = prob.graph.apply_bstar(z)?;
    Ok(dual_value(prob, &v))
}

pub(crate) fn dual_value(prob: &ClusterProblem<'_>, v: &Mat) -> f64 {
    (0..prob.num_points())
        .map(|i| {
            let vi = v.col(i);
            crate::matrix::dot(prob.points.col(i), vi) - 0.5 * crate::matrix::dot(vi, vi) / prob.fidelity_at(i)
        })
        .sum()
}

/// Relative KKT residuals
///
/// ```text
/// η_P = ‖B(X) − U‖ / (1 + ‖U‖)
/// η_D = Σ_l max(0, ‖Z^l‖_q − γ w_l) / (1 + ‖A‖)
/// η   = (‖B*(Z) + F(X − A)‖ + ‖U − Prox_p(U + Z)‖) / (1 + ‖A‖ + ‖U‖)
/// ```
pub fn kkt_residuals(prob: &ClusterProblem<'_>, state: &PrimalDualState) -> Result<KktResiduals> {
    prob.check_x(&state.x)?;
    prob.check_edge_mat("U", &state.u)?;
    prob.check_edge_mat("Z", &state.z)?;
    let norm_a = prob.data_norm();
    let norm_u = state.u.norm();
    let thresholds = prob.thresholds();

    let mut bx = prob.graph.apply_b(&state.x)?;
    let eta_p = {
        bx.axpy(-1.0, &state.u);
        bx.norm() / (1.0 + norm_u)
    };

    let eta_d = state.z.columns().zip(&thresholds).map(|(zl, t)| (prob.norm.dual_norm(zl) - t).max(0.0)).sum::<f64>()
        / (1.0 + norm_a);

    let mut stationarity = state.x.sub(prob.points);
    prob.apply_fidelity(&mut stationarity);
    prob.graph.accumulate_bstar(&state.z, 1.0, &mut stationarity);

    let mut complementarity = state.u.add(&state.z);
    prox::prox_block_in_place(prob.norm, &mut complementarity, &thresholds);
    complementarity.axpy(-1.0, &state.u);
    let eta = (stationarity.norm() + complementarity.norm()) / (1.0 + norm_a + norm_u);

    let primal_obj = primal_objective(prob, &state.x)?;
    let dual_obj = dual_objective(prob, &prob.project_dual(&state.z)?)?;
    Ok(KktResiduals { eta_p, eta_d, eta, primal_obj, dual_obj, gap: primal_obj - dual_obj })
}

/// A partition of the points with per-cluster means of the solution columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// 1-based cluster ids; cluster 1 contains point 0, and ids increase with
    /// each cluster's smallest member index.
    pub labels: Vec<usize>,
    pub num_clusters: usize,
    pub centroids: Mat,
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentSummary {
    pub schema: String,
    #[serde(rename = "K")]
    pub num_clusters: usize,
    pub sizes: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rand_index: Option<f64>,
}

impl ClusterAssignment {
    /// Groups points by `labels` (1-based) and averages the matching columns of `x`.
    pub fn from_labels(x: &Mat, raw: &[usize]) -> Self {
        let n = raw.len();
        // Canonical relabeling by first appearance.
        let mut map = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|l| {
                let next = map.len() + 1;
                *map.entry(*l).or_insert(next)
            })
            .collect();
        let k = map.len();
        let d = x.rows();
        let mut centroids = Mat::zeros(d, k);
        let mut sizes = vec![0; k];
        for i in 0..n {
            let c = labels[i] - 1;
            sizes[c] += 1;
            let xi = x.col(i);
            for (o, v) in centroids.col_mut(c).iter_mut().zip(xi) {
                *o += v;
            }
        }
        for c in 0..k {
            let inv = 1.0 / sizes[c] as f64;
            centroids.col_mut(c).iter_mut().for_each(|v| *v *= inv);
        }
        ClusterAssignment { labels, num_clusters: k, centroids, sizes }
    }

    pub fn summary(&self, rand_index: Option<f64>) -> AssignmentSummary {
        AssignmentSummary {
            schema: "v1".into(),
            num_clusters: self.num_clusters,
            sizes: self.sizes.clone(),
            rand_index,
        }
    }

    /// `index,label` rows with 1-based point indices.
    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        use std::io::Write;
        let path = path.as_ref();
        let mut out = String::with_capacity(self.labels.len() * 8 + 16);
        out.push_str("index,label\n");
        for (i, l) in self.labels.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Clusters are the connected components of the edges whose endpoints
/// satisfy `‖x_i − x_j‖ ≤ tol · max(1, ‖x_i‖, ‖x_j‖)`.
pub fn extract_clusters(graph: &WeightGraph, x: &Mat, tol: f64) -> Result<ClusterAssignment> {
    if x.cols() != graph.num_nodes() {
        return Err(Error::DimensionMismatch(format!("X has {} columns for {} nodes", x.cols(), graph.num_nodes())));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument("tol must be nonnegative".into()));
    }
    let n = x.cols();
    let mut dsu = DisjointSets::new(n);
    for &(i, j) in graph.edges() {
        let (xi, xj) = (x.col(i), x.col(j));
        let scale = 1.0_f64.max(crate::matrix::norm2(xi)).max(crate::matrix::norm2(xj));
        if dist_sq(xi, xj).sqrt() <= tol * scale {
            dsu.union(i, j);
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| dsu.find(i)).collect();
    Ok(ClusterAssignment::from_labels(x, &roots))
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect(), rank: vec![0; n] }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}
