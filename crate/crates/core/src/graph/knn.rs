//! Exact k-nearest-neighbor search.
//!
//! Neighbors are ordered by `(squared distance, index)`, so ties go to the
//! smaller index in both the kd-tree (d ≤ 3) and the brute-force (d > 3) path.

use std::collections::BinaryHeap;

use ordered::Candidate;
use rayon::prelude::*;

use crate::matrix::{dist_sq, Mat};

mod ordered {
    /// `(squared distance, index)` with a total order; the heap keeps the worst on top.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Candidate(pub f64, pub usize);

    impl Eq for Candidate {}

    impl PartialOrd for Candidate {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    impl Ord for Candidate {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
        }
    }
}

/// For each point, its `k` nearest other points as `(squared distance, index)`,
/// nearest first.
pub fn knn_lists(points: &Mat, k: usize) -> Vec<Vec<(f64, usize)>> {
    let n = points.cols();
    let k = k.min(n.saturating_sub(1));
    if k == 0 {
        return vec![Vec::new(); n];
    }
    if points.rows() <= 3 {
        let tree = KdTree::build(points);
        (0..n).into_par_iter().map(|i| tree.query(i, k)).collect()
    } else {
        brute_force(points, k)
    }
}

fn finish(heap: BinaryHeap<Candidate>) -> Vec<(f64, usize)> {
    heap.into_sorted_vec().into_iter().map(|Candidate(d, j)| (d, j)).collect()
}

fn push(heap: &mut BinaryHeap<Candidate>, k: usize, cand: Candidate) {
    if heap.len() < k {
        heap.push(cand);
    } else if cand < *heap.peek().expect("nonempty") {
        heap.pop();
        heap.push(cand);
    }
}

const BLOCK: usize = 256;

fn brute_force(points: &Mat, k: usize) -> Vec<Vec<(f64, usize)>> {
    let n = points.cols();
    let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
    starts
        .into_par_iter()
        .flat_map_iter(|start| {
            let end = (start + BLOCK).min(n);
            let mut heaps: Vec<BinaryHeap<Candidate>> =
                (start..end).map(|_| BinaryHeap::with_capacity(k + 1)).collect();
            for jb in (0..n).step_by(BLOCK) {
                let jend = (jb + BLOCK).min(n);
                for i in start..end {
                    let pi = points.col(i);
                    let heap = &mut heaps[i - start];
                    for j in jb..jend {
                        if j != i {
                            push(heap, k, Candidate(dist_sq(pi, points.col(j)), j));
                        }
                    }
                }
            }
            heaps.into_iter().map(finish)
        })
        .collect()
}

struct KdTree<'a> {
    points: &'a Mat,
    /// Point indices, permuted so each node owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

const LEAF_SIZE: usize = 16;

impl<'a> KdTree<'a> {
    fn build(points: &'a Mat) -> Self {
        let mut tree = KdTree { points, order: (0..points.cols()).collect(), nodes: Vec::new() };
        let n = points.cols();
        tree.build_node(0, n);
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let d = self.points.rows();
        let mut best_axis = 0;
        let mut best_spread = -1.0;
        for axis in 0..d {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &p in &self.order[start..end] {
                let v = self.points.get(axis, p);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points.get(best_axis, a).total_cmp(&points.get(best_axis, b)).then(a.cmp(&b))
        });
        let value = points.get(best_axis, self.order[mid]);
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis: best_axis, value, left, right };
        id
    }

    fn query(&self, i: usize, k: usize) -> Vec<(f64, usize)> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, self.points.col(i), i, k, &mut heap);
        finish(heap)
    }

    fn search(&self, node: usize, q: &[f64], skip: usize, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j != skip {
                        push(heap, k, Candidate(dist_sq(q, self.points.col(j)), j));
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let delta = q[axis] - value;
                let (near, far) = if delta <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, k, heap);
                // Equal-distance candidates on the far side may still win on index.
                if heap.len() < k || delta * delta <= heap.peek().expect("nonempty").0 {
                    self.search(far, q, skip, k, heap);
                }
            }
        }
    }
}
