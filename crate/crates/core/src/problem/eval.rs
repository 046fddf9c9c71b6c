//! Partition comparison and the Lloyd k-means baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ClusterAssignment;
use crate::matrix::{dist_sq, Mat};
use crate::{Error, Result};

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERS: usize = 300;

/// Plain Rand index: the fraction of the `n(n−1)/2` point pairs on which the
/// two partitions agree (both together or both apart). Labels are arbitrary ids.
pub fn rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("label vectors of length {} and {}", a.len(), b.len())));
    }
    let n = a.len() as u128;
    if n < 2 {
        return Ok(1.0);
    }
    let pairs = |c: u128| c * c.saturating_sub(1) / 2;
    let mut joint = std::collections::HashMap::<(usize, usize), u128>::new();
    let mut rows = std::collections::HashMap::<usize, u128>::new();
    let mut cols = std::collections::HashMap::<usize, u128>::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let total = pairs(n);
    let both: u128 = joint.values().map(|&c| pairs(c)).sum();
    let in_a: u128 = rows.values().map(|&c| pairs(c)).sum();
    let in_b: u128 = cols.values().map(|&c| pairs(c)).sum();
    // Agreements = pairs together in both + pairs apart in both.
    let agree = total + 2 * both - in_a - in_b;
    Ok(agree as f64 / total as f64)
}

/// Lloyd's algorithm from k-means++ seeding, best of ten restarts by the
/// within-cluster sum of squares. Points are columns.
pub fn kmeans_lloyd(points: &Mat, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = points.cols();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n}, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let (obj, labels) = lloyd_run(points, k, &mut rng);
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, labels));
        }
    }
    let (_, labels) = best.expect("at least one restart");
    Ok(ClusterAssignment::from_labels(points, &labels))
}

fn lloyd_run(points: &Mat, k: usize, rng: &mut ChaCha8Rng) -> (f64, Vec<usize>) {
    let n = points.cols();
    let d = points.rows();
    let mut centers = seed_plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for i in 0..n {
            let c = nearest(&centers, points.col(i)).0;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = Mat::zeros(d, k);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[labels[i]] += 1;
            for (s, v) in sums.col_mut(labels[i]).iter_mut().zip(points.col(i)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed an empty cluster at the point farthest from its center.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = dist_sq(points.col(a), centers.col(labels[a]));
                        let db = dist_sq(points.col(b), centers.col(labels[b]));
                        da.total_cmp(&db)
                    })
                    .expect("n ≥ 1");
                centers.col_mut(c).copy_from_slice(points.col(far));
                labels[far] = c;
            } else {
                let inv = 1.0 / counts[c] as f64;
                for (o, s) in centers.col_mut(c).iter_mut().zip(sums.col(c)) {
                    *o = s * inv;
                }
            }
        }
    }
    let obj = (0..n).map(|i| dist_sq(points.col(i), centers.col(labels[i]))).sum();
    (obj, labels)
}

fn nearest(centers: &Mat, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, col) in centers.columns().enumerate() {
        let d = dist_sq(x, col);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_plus_plus(points: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let n = points.cols();
    let mut centers = Mat::zeros(points.rows(), k);
    let first = rng.random_range(0..n);
    centers.col_mut(0).copy_from_slice(points.col(first));
    let mut d2: Vec<f64> = (0..n).map(|i| dist_sq(points.col(i), points.col(first))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.col_mut(c).copy_from_slice(points.col(pick));
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(dist_sq(points.col(i), points.col(pick)));
        }
    }
    centers
}
