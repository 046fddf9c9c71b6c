//! Fixtures shared by the benchmarks.

use sonclust::{generate, Dataset, Mat, SyntheticKind, SyntheticSpec, WeightGraph};

/// Seeded half-moon data with its 10-NN graph.
pub fn half_moons(n: usize) -> (Dataset, WeightGraph) {
    let data = generate(&SyntheticSpec { kind: SyntheticKind::two_half_moons(), n, seed: 1 }).expect("valid spec");
    let graph = WeightGraph::knn(&data, 10, 0.5).expect("valid graph");
    (data, graph)
}

/// A deterministic `d×m` matrix with entries in [−1, 1].
pub fn filler(d: usize, m: usize) -> Mat {
    let data = (0..d * m).map(|k| ((k * 7919 % 1009) as f64 / 504.5) - 1.0).collect();
    Mat::from_col_major(d, m, data)
}
