//! Recovery guarantees for the weighted model.
//!
//! Given a labeled partition `V_1 … V_K` of the points (labels `1..=K`), the
//! weighted model recovers it exactly for every `γ ∈ [γ_min, γ_max)`, where
//!
//! ```text
//! μ_ij   = Σ_{β≠α} |w_i^(β) − w_j^(β)|                      (i, j ∈ I_α)
//! γ_min  = max_α max_{i,j∈I_α} ‖a_i − a_j‖_q / (n_α w_ij − μ_ij)
//! γ_max  = min_{α<β} ‖a^(α) − a^(β)‖_q / ( (1/n_α) Σ_{l≠α} w^(α,l) + (1/n_β) Σ_{l≠β} w^(β,l) )
//! ```
//!
//! with `w_i^(β) = Σ_{j∈I_β} w_ij`, `w^(α,β) = Σ_{i∈I_α} w_i^(β)`, `a^(α)` the
//! cluster means and `q` the dual exponent of `p`. Below
//! `max_α n_α ‖c − a^(α)‖_q / Σ_{β≠α} w^(α,β)` (with `c` the global mean) the
//! solution is at least a non-trivial coarsening.

use serde::Serialize;

use crate::data::num_classes;
use crate::graph::WeightGraph;
use crate::matrix::Mat;
use crate::problem::{extract_clusters, ClusterProblem};
use crate::prox::NormKind;
use crate::ssnal::{solve_with, PathOptions, SolveReport, SolverKind};
use crate::{Error, Result};

/// `w_i^(β)` (n × K) and `w^(α,β)` (K × K). The diagonal `w^(α,α)` counts each
/// within-cluster edge twice, as the double sum does.
#[derive(Debug, Clone, PartialEq)]
pub struct Couplings {
    /// Row `i`, column `β`.
    pub point_cluster: Vec<Vec<f64>>,
    pub cluster_cluster: Vec<Vec<f64>>,
}

/// Cluster couplings for 1-based labels.
pub fn cluster_couplings(graph: &WeightGraph, labels: &[usize]) -> Result<Couplings> {
    if labels.len() != graph.num_nodes() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} nodes", labels.len(), graph.num_nodes())));
    }
    let k = num_classes(labels)?;
    let n = labels.len();
    let mut point_cluster = vec![vec![0.0; k]; n];
    for (i, j, w) in graph.triples() {
        point_cluster[i][labels[j] - 1] += w;
        point_cluster[j][labels[i] - 1] += w;
    }
    let mut cluster_cluster = vec![vec![0.0; k]; k];
    for i in 0..n {
        for b in 0..k {
            cluster_cluster[labels[i] - 1][b] += point_cluster[i][b];
        }
    }
    Ok(Couplings { point_cluster, cluster_cluster })
}

/// Binding pair of `γ_min`: points `i`, `j` (0-based) in cluster `cluster` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointPair {
    pub cluster: usize,
    pub i: usize,
    pub j: usize,
}

/// Binding cluster pair of `γ_max` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterPair {
    pub alpha: usize,
    pub beta: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Witnesses {
    pub gamma_min: Option<PointPair>,
    pub gamma_max: Option<ClusterPair>,
}

/// Infinite bounds serialize as `null`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryBounds {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub coarsening_upper: f64,
    pub feasible: bool,
    pub witnesses: Witnesses,
}

impl RecoveryBounds {
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("plain data");
        v["schema"] = "v1".into();
        v
    }

    pub fn contains(&self, gamma: f64) -> bool {
        self.gamma_min <= gamma && gamma < self.gamma_max
    }
}

struct Groups {
    k: usize,
    members: Vec<Vec<usize>>,
    means: Mat,
}

fn groups(points: &Mat, labels: &[usize]) -> Result<Groups> {
    if labels.len() != points.cols() {
        return Err(Error::DimensionMismatch(format!("{} labels for {} points", labels.len(), points.cols())));
    }
    let k = num_classes(labels)?;
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l - 1].push(i);
    }
    let means = Mat::from_columns(&members.iter().map(|m| centroid(points, m)).collect::<Vec<_>>());
    for a in 0..k {
        for b in a + 1..k {
            if means.col(a) == means.col(b) {
                return Err(Error::InvalidLabels(format!("clusters {} and {} have the same centroid", a + 1, b + 1)));
            }
        }
    }
    Ok(Groups { k, members, means })
}

fn diff_norm(q: NormKind, x: &[f64], y: &[f64]) -> f64 {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    q.norm(&d)
}

/// `c(S)`: mean of the columns in `members`.
pub fn centroid(points: &Mat, members: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; points.rows()];
    for &i in members {
        for (o, v) in c.iter_mut().zip(points.col(i)) {
            *o += v;
        }
    }
    let inv = 1.0 / members.len().max(1) as f64;
    c.iter_mut().for_each(|v| *v *= inv);
    c
}

/// `D_q(S)`: largest pairwise `q`-distance (0 for fewer than two points).
pub fn diameter(points: &Mat, members: &[usize], q: NormKind) -> f64 {
    let mut best = 0.0_f64;
    for (s, &i) in members.iter().enumerate() {
        for &j in &members[s + 1..] {
            best = best.max(diff_norm(q, points.col(i), points.col(j)));
        }
    }
    best
}

/// `d_q(S)`: smallest `q`-distance between distinct points; `None` if there are none.
pub fn separation(points: &Mat, members: &[usize], q: NormKind) -> Option<f64> {
    let mut best: Option<f64> = None;
    for (s, &i) in members.iter().enumerate() {
        for &j in &members[s + 1..] {
            let d = diff_norm(q, points.col(i), points.col(j));
            if d > 0.0 {
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
    }
    best
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Recovery interval for the model with exponent `norm` (the bounds use its dual `q`).
///
/// Fails with [`Error::AssumptionViolated`] when a within-cluster pair has
/// `w_ij = 0` or `n_α w_ij ≤ μ_ij`.
pub fn recovery_bounds(points: &Mat, labels: &[usize], graph: &WeightGraph, norm: NormKind) -> Result<RecoveryBounds> {
    if graph.num_nodes() != points.cols() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} nodes, data has {} points",
            graph.num_nodes(),
            points.cols()
        )));
    }
    let q = norm.conjugate();
    let g = groups(points, labels)?;
    let cp = cluster_couplings(graph, labels)?;
    let n = points.cols();

    let mut gamma_min = 0.0;
    let mut min_witness = None;
    for (alpha, members) in g.members.iter().enumerate() {
        let n_alpha = members.len() as f64;
        for (s, &i) in members.iter().enumerate() {
            for &j in &members[s + 1..] {
                let violated = |reason: String| Error::AssumptionViolated { i, j, cluster: alpha + 1, reason };
                let w = graph.edge_index(i, j).map_or(0.0, |l| graph.weights()[l]);
                if !(w > 0.0) {
                    return Err(violated("no edge between the pair (w_ij = 0)".into()));
                }
                let mu: f64 = (0..g.k)
                    .filter(|&b| b != alpha)
                    .map(|b| (cp.point_cluster[i][b] - cp.point_cluster[j][b]).abs())
                    .sum();
                let den = n_alpha * w - mu;
                if !(den > 0.0) {
                    return Err(violated(format!("n_α w_ij = {} does not exceed μ_ij = {mu}", n_alpha * w)));
                }
                let value = diff_norm(q, points.col(i), points.col(j)) / den;
                if value > gamma_min || min_witness.is_none() {
                    gamma_min = value.max(gamma_min);
                    min_witness = Some(PointPair { cluster: alpha + 1, i, j });
                }
            }
        }
    }

    let outflow: Vec<f64> =
        (0..g.k).map(|a| (0..g.k).filter(|&l| l != a).map(|l| cp.cluster_cluster[a][l]).sum()).collect();
    let sizes: Vec<f64> = g.members.iter().map(|m| m.len() as f64).collect();
    let mut gamma_max = f64::INFINITY;
    let mut max_witness = None;
    for a in 0..g.k {
        for b in a + 1..g.k {
            let den = outflow[a] / sizes[a] + outflow[b] / sizes[b];
            let value = ratio(diff_norm(q, g.means.col(a), g.means.col(b)), den);
            if value < gamma_max || max_witness.is_none() {
                gamma_max = value.min(gamma_max);
                max_witness = Some(ClusterPair { alpha: a + 1, beta: b + 1 });
            }
        }
    }

    let c = centroid(points, &(0..n).collect::<Vec<_>>());
    let coarsening_upper =
        (0..g.k).map(|a| ratio(sizes[a] * diff_norm(q, &c, g.means.col(a)), outflow[a])).fold(0.0, f64::max);

    Ok(RecoveryBounds {
        gamma_min,
        gamma_max,
        coarsening_upper,
        feasible: gamma_min < gamma_max,
        witnesses: Witnesses { gamma_min: min_witness, gamma_max: max_witness },
    })
}

/// The same bounds specialized to `w_ij = 1` for all pairs, from cluster
/// diameters and centroid distances alone.
pub fn uniform_weight_bounds(points: &Mat, labels: &[usize], norm: NormKind) -> Result<RecoveryBounds> {
    let q = norm.conjugate();
    let g = groups(points, labels)?;
    let n = points.cols() as f64;
    let sizes: Vec<f64> = g.members.iter().map(|m| m.len() as f64).collect();

    let mut gamma_min = 0.0;
    let mut min_witness = None;
    for (a, members) in g.members.iter().enumerate() {
        if members.len() < 2 {
            continue;
        }
        let v = diameter(points, members, q) / sizes[a];
        if v > gamma_min || min_witness.is_none() {
            gamma_min = v.max(gamma_min);
            min_witness = Some(PointPair { cluster: a + 1, i: members[0], j: members[1] });
        }
    }
    let mut gamma_max = f64::INFINITY;
    let mut max_witness = None;
    for a in 0..g.k {
        for b in a + 1..g.k {
            let v = diff_norm(q, g.means.col(a), g.means.col(b)) / (2.0 * n - sizes[a] - sizes[b]);
            if v < gamma_max {
                gamma_max = v;
                max_witness = Some(ClusterPair { alpha: a + 1, beta: b + 1 });
            }
        }
    }
    let all: Vec<usize> = (0..points.cols()).collect();
    let c = centroid(points, &all);
    let coarsening_upper = (0..g.k).map(|a| ratio(diff_norm(q, &c, g.means.col(a)), n - sizes[a])).fold(0.0, f64::max);
    Ok(RecoveryBounds {
        gamma_min,
        gamma_max,
        coarsening_upper,
        feasible: gamma_min < gamma_max,
        witnesses: Witnesses { gamma_min: min_witness, gamma_max: max_witness },
    })
}

fn options_for(norm: NormKind, kkt_tol: f64) -> PathOptions {
    let mut opts = PathOptions::default().with_tol(kkt_tol);
    if norm != NormKind::L2 {
        opts.solver = SolverKind::Admm;
        opts.admm.max_iters = 200_000;
    }
    opts
}

/// Solves the centroid problem
/// `min ½ Σ_α n_α ‖x^(α) − a^(α)‖² + γ Σ_{α<β} w^(α,β) ‖x^(α) − x^(β)‖_p`
/// and returns the `d × K` minimizer.
pub fn solve_centroid_problem(
    points: &Mat,
    labels: &[usize],
    graph: &WeightGraph,
    gamma: f64,
    norm: NormKind,
    kkt_tol: f64,
) -> Result<Mat> {
    let g = groups(points, labels)?;
    if !(gamma >= 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be nonnegative, got {gamma}")));
    }
    let cp = cluster_couplings(graph, labels)?;
    let triples =
        (0..g.k).flat_map(|a| (a + 1..g.k).map(move |b| (a, b))).map(|(a, b)| (a, b, cp.cluster_cluster[a][b]));
    let reduced = WeightGraph::from_edges(g.k, triples)?;
    if gamma == 0.0 || reduced.num_edges() == 0 {
        return Ok(g.means);
    }
    let sizes: Vec<f64> = g.members.iter().map(|m| m.len() as f64).collect();
    let prob = ClusterProblem::new(&g.means, &reduced, gamma, norm)?.with_fidelity(&sizes)?;
    let opts = options_for(norm, kkt_tol);
    let sol = solve_with(&prob, None, &opts)?;
    Ok(sol.state.x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryReport {
    pub gamma: f64,
    /// `‖X* − X̂‖` with `X̂` the centroid solution broadcast to the points.
    pub distance: f64,
    #[serde(rename = "K_found")]
    pub k_found: usize,
    #[serde(rename = "K_expected")]
    pub k_expected: usize,
    /// The extracted partition equals the given one.
    pub perfect: bool,
    #[serde(skip)]
    pub solve: Option<SolveReport>,
}

/// Solves the full problem and the centroid problem at `γ` and compares them.
pub fn verify_recovery(
    points: &Mat,
    labels: &[usize],
    graph: &WeightGraph,
    gamma: f64,
    norm: NormKind,
    kkt_tol: f64,
) -> Result<RecoveryReport> {
    let k = num_classes(labels)?;
    let prob = ClusterProblem::new(points, graph, gamma, norm)?;
    let opts = options_for(norm, kkt_tol);
    let full = solve_with(&prob, None, &opts)?;
    let centroids = solve_centroid_problem(points, labels, graph, gamma, norm, kkt_tol)?;
    let mut dist_sq = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        dist_sq += crate::matrix::dist_sq(full.state.x.col(i), centroids.col(l - 1));
    }
    let found = extract_clusters(graph, &full.state.x, opts.cluster_tol)?;
    let perfect = same_partition(&found.labels, labels);
    Ok(RecoveryReport {
        gamma,
        distance: dist_sq.sqrt(),
        k_found: found.num_clusters,
        k_expected: k,
        perfect,
        solve: Some(full.report),
    })
}

/// Partition equality: `a_i = a_j ⇔ b_i = b_j` for every pair.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd = std::collections::HashMap::new();
    let mut bwd = std::collections::HashMap::new();
    a.iter().zip(b).all(|(x, y)| *fwd.entry(*x).or_insert(*y) == *y && *bwd.entry(*y).or_insert(*x) == *x)
}
