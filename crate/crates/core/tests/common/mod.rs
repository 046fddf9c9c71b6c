// Independent oracles shared by the integration tests. Nothing here calls into
// the library's numerical kernels.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sonclust::{Mat, WeightGraph};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Erdős–Rényi style graph with random positive weights.
pub fn random_graph(rng: &mut impl Rng, n: usize, p: f64) -> WeightGraph {
    let mut triples = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                triples.push((i, j, rng.random_range(0.1..2.0)));
            }
        }
    }
    WeightGraph::from_edges(n, triples).unwrap()
}

/// Dense n × |E| node-arc incidence matrix: +1 at the tail, −1 at the head.
pub fn dense_incidence(g: &WeightGraph) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(g.num_nodes(), g.num_edges());
    for (l, &(a, b)) in g.edges().iter().enumerate() {
        j[(a, l)] = 1.0;
        j[(b, l)] = -1.0;
    }
    j
}

/// Unweighted Laplacian from the adjacency structure.
pub fn dense_laplacian(g: &WeightGraph) -> DMatrix<f64> {
    let n = g.num_nodes();
    let mut l = DMatrix::zeros(n, n);
    for &(a, b) in g.edges() {
        l[(a, a)] += 1.0;
        l[(b, b)] += 1.0;
        l[(a, b)] -= 1.0;
        l[(b, a)] -= 1.0;
    }
    l
}

pub fn lambda_max(l: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(l.clone()).eigenvalues.iter().copied().fold(0.0, f64::max)
}

pub fn to_dense(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_dense(m: &DMatrix<f64>) -> Mat {
    Mat::from_col_major(m.nrows(), m.ncols(), m.as_slice().to_vec())
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-300)
}

pub fn lp_norm(p: f64, x: &[f64]) -> f64 {
    if p.is_infinite() {
        x.iter().fold(0.0, |m, v| m.max(v.abs()))
    } else if p == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Golden-section minimization of a convex function on `[lo, hi]`.
pub fn golden_min(f: &mut dyn FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// argmin_u t‖u‖_p + ½‖u − x‖² by nested golden-section search, one level per
/// coordinate. Partial minimization of a jointly convex function is convex,
/// so each level searches a convex 1-D function.
pub fn brute_prox(p: f64, t: f64, x: &[f64]) -> Vec<f64> {
    let bound = x.iter().fold(0.0_f64, |m, v| m.max(v.abs())) + 1.0;
    let obj = |u: &[f64]| t * lp_norm(p, u) + 0.5 * u.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    fn level(k: usize, u: &mut Vec<f64>, bound: f64, obj: &dyn Fn(&[f64]) -> f64) -> f64 {
        if k == u.len() {
            return obj(u);
        }
        let mut f = |v: f64| {
            u[k] = v;
            level(k + 1, u, bound, obj)
        };
        let (best, _) = golden_min(&mut f, -bound, bound, 1e-11);
        u[k] = best;
        level(k + 1, u, bound, obj)
    }
    let mut u = vec![0.0; x.len()];
    level(0, &mut u, bound, &obj);
    u
}

/// Fraction of pairs on which two labelings agree, by enumeration.
pub fn brute_rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut agree = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            total += 1;
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / total as f64
}

/// Every set partition of `0..n` as a 1-based restricted growth string.
pub fn all_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for v in 1..=max + 1 {
            prefix.push(v);
            rec(prefix, max.max(v), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(n), 0, n, &mut out);
    out
}

/// Gaussian blobs around fixed centers, labels 1..=K, for theory tests.
pub fn labeled_blobs(rng: &mut impl Rng, centers: &[[f64; 2]], sizes: &[usize], std: f64) -> (Mat, Vec<usize>) {
    let mut cols = Vec::new();
    let mut labels = Vec::new();
    for (c, (&center, &m)) in centers.iter().zip(sizes).enumerate() {
        for _ in 0..m {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt() * std;
            let th = 2.0 * std::f64::consts::PI * u2;
            cols.push(vec![center[0] + r * th.cos(), center[1] + r * th.sin()]);
            labels.push(c + 1);
        }
    }
    (Mat::from_columns(&cols), labels)
}
