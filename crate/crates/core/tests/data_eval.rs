mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sonclust::data::num_classes;
use sonclust::{
    generate, kmeans_lloyd, load_csv, rand_index, scale_unit_box, ClusterAssignment, CsvOrientation, Dataset, Error,
    Mat, SyntheticKind, SyntheticSpec,
};

fn spec(kind: SyntheticKind, n: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec { kind, n, seed }
}

#[test]
fn generators_are_deterministic() {
    let kinds = [
        SyntheticKind::two_half_moons(),
        SyntheticKind::UnbalancedGaussian,
        SyntheticKind::semi_spherical_shells(),
        SyntheticKind::GaussianBlobs { centers: vec![vec![0.0, 0.0], vec![3.0, 3.0]], std: 0.5, sizes: vec![] },
    ];
    for kind in kinds {
        let a = generate(&spec(kind.clone(), 650, 7)).unwrap();
        let b = generate(&spec(kind.clone(), 650, 7)).unwrap();
        let c = generate(&spec(kind, 650, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
    }
}

#[test]
fn half_moons_shape() {
    let d = generate(&spec(SyntheticKind::two_half_moons(), 1000, 7)).unwrap();
    assert_eq!((d.dim(), d.len()), (2, 1000));
    let labels = d.labels.unwrap();
    assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 500);
    assert_eq!(labels.iter().filter(|&&l| l == 2).count(), 500);
}

#[test]
fn shells_respect_radius_bands() {
    let d = generate(&spec(SyntheticKind::semi_spherical_shells(), 20_000, 1)).unwrap();
    assert_eq!(d.dim(), 3);
    let labels = d.labels.as_ref().unwrap();
    assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 10_000);
    for (i, c) in d.points.columns().enumerate() {
        let r = lp_norm(2.0, c);
        if labels[i] == 1 {
            assert!((1.0..=1.4).contains(&r), "{r}");
        } else {
            assert!((1.6..=2.0).contains(&r), "{r}");
        }
    }
}

#[test]
fn unbalanced_gaussian_is_scaled_and_imbalanced() {
    let d = generate(&spec(SyntheticKind::UnbalancedGaussian, 6500, 3)).unwrap();
    assert_eq!(d.len(), 6500);
    assert!(d.points.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    let labels = d.labels.unwrap();
    assert_eq!(num_classes(&labels).unwrap(), 8);
    let mut sizes = vec![0; 8];
    for l in labels {
        sizes[l - 1] += 1;
    }
    assert_eq!(sizes, vec![2000, 2000, 2000, 100, 100, 100, 100, 100]);
}

#[test]
fn scale_unit_box_examples() {
    let pts = Mat::from_columns(&[vec![-1.0, 3.0], vec![0.0, 3.0], vec![1.0, 3.0]]);
    let d = scale_unit_box(&Dataset::new(pts, None, "x").unwrap());
    assert_eq!(d.points.row(0), vec![0.0, 0.5, 1.0]);
    assert_eq!(d.points.row(1), vec![0.5, 0.5, 0.5]);
}

proptest! {
    #[test]
    fn scale_unit_box_is_idempotent(vals in prop::collection::vec(-1e3f64..1e3, 2..60)) {
        let n = vals.len() / 2;
        let pts = Mat::from_col_major(2, n, vals[..2 * n].to_vec());
        let once = scale_unit_box(&Dataset::new(pts, None, "x").unwrap());
        prop_assert!(once.points.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let twice = scale_unit_box(&once);
        for (a, b) in once.points.as_slice().iter().zip(twice.points.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn rand_index_symmetric_and_bounded(a in prop::collection::vec(1usize..4, 2..40), seed in any::<u64>()) {
        let mut r = rng(seed);
        let b: Vec<usize> = a.iter().map(|_| r.random_range(1..4)).collect();
        let ab = rand_index(&a, &b).unwrap();
        prop_assert!((ab - rand_index(&b, &a).unwrap()).abs() <= 1e-15);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(rand_index(&a, &a).unwrap(), 1.0);
        prop_assert!((ab - brute_rand_index(&a, &b)).abs() <= 1e-12);
    }
}

#[test]
fn rand_index_matches_enumeration_on_all_small_partitions() {
    for n in 1..=6 {
        let parts = all_partitions(n);
        for a in &parts {
            for b in &parts {
                assert!((rand_index(a, b).unwrap() - brute_rand_index(a, b)).abs() <= 1e-15);
            }
        }
    }
    // n = 7, 8: every partition against a sample of references.
    let mut r = rng(1);
    for n in 7..=8 {
        let parts = all_partitions(n);
        assert_eq!(parts.len(), if n == 7 { 877 } else { 4140 });
        for _ in 0..25 {
            let b = &parts[r.random_range(0..parts.len())];
            for a in &parts {
                assert!((rand_index(a, b).unwrap() - brute_rand_index(a, b)).abs() <= 1e-15);
            }
        }
    }
}

#[test]
fn rand_index_rejects_length_mismatch() {
    assert!(matches!(rand_index(&[1, 2], &[1]), Err(Error::DimensionMismatch(_))));
}

#[test]
fn kmeans_recovers_separated_blobs() {
    let mut r = rng(2);
    let (points, labels) = labeled_blobs(&mut r, &[[0.0, 0.0], [10.0, 0.0]], &[40, 60], 0.5);
    let fit = kmeans_lloyd(&points, 2, 0).unwrap();
    assert_eq!(fit.num_clusters, 2);
    assert_eq!(rand_index(&fit.labels, &labels).unwrap(), 1.0);
    assert_eq!(fit, kmeans_lloyd(&points, 2, 0).unwrap());
}

#[test]
fn assignment_labels_are_canonical() {
    let pts = Mat::from_columns(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
    let a = ClusterAssignment::from_labels(&pts, &[7, 3, 7, 9]);
    assert_eq!(a.labels, vec![1, 2, 1, 3]);
    assert_eq!(a.sizes, vec![2, 1, 1]);
    assert_eq!(a.centroids.col(0), &[1.0]);
}

#[test]
fn csv_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = generate(&spec(SyntheticKind::two_half_moons(), 50, 4)).unwrap();
    let path = dir.path().join("hm.csv");
    d.write_csv(&path).unwrap();
    let back = load_csv(&path, true, CsvOrientation::RowsArePoints).unwrap();
    assert_eq!(back.points, d.points);
    assert_eq!(back.labels, d.labels);

    let p = dir.path().join("three.csv");
    std::fs::write(&p, "0,0\n1,0\n0,1\n").unwrap();
    let t = load_csv(&p, false, CsvOrientation::RowsArePoints).unwrap();
    assert_eq!((t.dim(), t.len()), (2, 3));
    let c = load_csv(&p, false, CsvOrientation::ColumnsArePoints).unwrap();
    assert_eq!((c.dim(), c.len()), (3, 2));

    std::fs::write(&p, "").unwrap();
    assert!(matches!(load_csv(&p, false, CsvOrientation::RowsArePoints), Err(Error::Empty)));
    std::fs::write(&p, "1,2\n3,nan\n").unwrap();
    assert!(matches!(load_csv(&p, false, CsvOrientation::RowsArePoints), Err(Error::NonFiniteValue { .. })));
    std::fs::write(&p, "1,2\n3\n").unwrap();
    assert!(load_csv(&p, false, CsvOrientation::RowsArePoints).is_err());
    assert!(matches!(
        load_csv(dir.path().join("missing.csv"), false, CsvOrientation::RowsArePoints),
        Err(Error::Io { .. })
    ));
}
