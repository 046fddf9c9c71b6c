use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sonclust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sonclust")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Five well-separated labeled blobs.
fn blobs(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("blobs.csv");
    let out = sonclust(&[
        "generate",
        "--kind",
        "gaussian_blobs",
        "--n",
        "200",
        "--seed",
        "3",
        "--std",
        "0.1",
        "--centers",
        "0,0;3,0;0,3;3,3;6,0",
        "--out",
        p(&data),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    data
}

#[test]
fn generate_writes_csv_and_descriptor() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("hm.csv");
    let out = sonclust(&["generate", "--kind", "two_half_moons", "--n", "1000", "--seed", "7", "--out", p(&data)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body = std::fs::read_to_string(&data).unwrap();
    let mut lines = body.lines();
    assert_eq!(lines.next(), Some("x1,x2,label"));
    assert_eq!(lines.count(), 1000);
    let desc = read_json(&dir.path().join("hm.json"));
    assert_eq!(desc["n"], 1000);
    assert_eq!(desc["seed"], 7);
    assert_eq!(desc["spec"]["kind"], "two_half_moons");
}

#[test]
fn shells_are_three_dimensional() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("sh.csv");
    let out = sonclust(&["generate", "--kind", "semi_spherical_shells", "--n", "200000", "--out", p(&data)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let body = std::fs::read_to_string(&data).unwrap();
    assert_eq!(body.lines().next(), Some("x1,x2,x3,label"));
    assert_eq!(body.lines().count(), 200_001);
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = sonclust(&["generate", "--n", "10", "--out", p(&dir.path().join("x.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--kind"));
    assert_eq!(sonclust(&["path", "--data", "x.csv", "--gammas", "1:0:2"]).status.code(), Some(1));
    assert_eq!(sonclust(&["path", "--data", "x.csv", "--gammas", "2,1"]).status.code(), Some(1));
    assert_eq!(sonclust(&["solve", "--data", "x.csv", "--gamma", "1", "--p", "3"]).status.code(), Some(1));
    assert_eq!(sonclust(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = sonclust(&["solve", "--data", p(&dir.path().join("missing.csv")), "--gamma", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn half_moons_recovered_at_gamma_5() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("hm.csv");
    assert!(sonclust(&["generate", "--kind", "two_half_moons", "--n", "1000", "--seed", "7", "--out", p(&data)])
        .status
        .success());
    let out_dir = dir.path().join("out");
    let out = sonclust(&["solve", "--data", p(&data), "--gamma", "5", "--k", "20", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["K"], 2);
    assert_eq!(report["termination"], "kkt_tol_met");
    for key in ["etaP", "etaD", "eta"] {
        assert!(report["residuals"][key].as_f64().unwrap() <= 1e-6, "{key}");
    }
    assert_eq!(report["provenance"]["graph"]["source"]["knn"]["k"], 20);
    assert_eq!(report["provenance"]["dataset"]["seed"], 7);
    let assignment = std::fs::read_to_string(out_dir.join("assignment.csv")).unwrap();
    assert_eq!(assignment.lines().count(), 1001);
    let centroids = std::fs::read_to_string(out_dir.join("centroids.csv")).unwrap();
    assert_eq!(centroids.lines().count(), 3);
}

#[test]
fn admm_handles_the_infinity_norm() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path());
    let out_dir = dir.path().join("inf");
    let out = sonclust(&[
        "solve",
        "--data",
        p(&data),
        "--gamma",
        "0.05",
        "--solver",
        "admm",
        "--p",
        "inf",
        "--out-dir",
        p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = read_json(&out_dir.join("report.json"));
    assert_eq!(report["provenance"]["p"], "inf");
    assert_eq!(report["provenance"]["solver"], "admm");
    assert!(report["residuals"]["eta"].as_f64().unwrap() <= 1e-6);

    // The Newton solver only handles p = 2.
    let out = sonclust(&["solve", "--data", p(&data), "--gamma", "0.05", "--p", "inf", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unconverged_solve_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path());
    let out_dir = dir.path().join("loose");
    let out = sonclust(&["solve", "--data", p(&data), "--gamma", "0.05", "--tol", "1e-30", "--out-dir", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out_dir.join("report.json").exists());
}

#[test]
fn bounds_need_labels() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("plain.csv");
    std::fs::write(&data, "0,0\n1,0\n0,1\n5,5\n").unwrap();
    let out = sonclust(&["bounds", "--data", p(&data), "--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("labels required"));
}

#[test]
fn bounds_of_separated_blobs_are_feasible() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path());
    let json = dir.path().join("bounds.json");
    let out = sonclust(&["bounds", "--data", p(&data), "--k", "45", "--within-cluster", "--out", p(&json)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let b = read_json(&json);
    let (lo, hi) = (b["gamma_min"].as_f64().unwrap(), b["gamma_max"].as_f64().unwrap());
    assert!(0.0 < lo && lo < hi, "{b}");
    assert_eq!(b["feasible"], true);
}

#[test]
fn overlapping_blobs_are_not_recoverable() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("overlap.csv");
    let out = sonclust(&[
        "generate",
        "--kind",
        "gaussian_blobs",
        "--n",
        "100",
        "--std",
        "1",
        "--centers",
        "0,0;0.2,0",
        "--out",
        p(&data),
    ]);
    assert!(out.status.success());
    let out = sonclust(&["bounds", "--data", p(&data), "--k", "10", "--within-cluster"]);
    // Either the interval is empty or a within-cluster pair breaks the assumption.
    if out.status.success() {
        let b: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(b["feasible"], false, "{b}");
    } else {
        assert_eq!(out.status.code(), Some(1));
        assert!(stderr(&out).contains("assumption violated"), "{}", stderr(&out));
    }
}

#[test]
fn eval_identical_files_and_kmeans() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.csv");
    std::fs::write(&labels, "index,label\n1,2\n2,2\n3,1\n4,3\n").unwrap();
    let out = sonclust(&["eval", "--pred", p(&labels), "--truth", p(&labels)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rand_index"], 1.0);

    let data = dir.path().join("two.csv");
    let out = sonclust(&[
        "generate",
        "--kind",
        "gaussian_blobs",
        "--n",
        "100",
        "--std",
        "0.3",
        "--centers",
        "0,0;10,0",
        "--out",
        p(&data),
    ]);
    assert!(out.status.success());
    let out = sonclust(&["eval", "--truth", p(&data), "--kmeans", "2"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["kmeans"]["rand_index"], 1.0);

    let short = dir.path().join("short.csv");
    std::fs::write(&short, "index,label\n1,1\n").unwrap();
    assert_eq!(sonclust(&["eval", "--pred", p(&short), "--truth", p(&labels)]).status.code(), Some(2));
}

fn plot_rows(dir: &Path) -> Vec<(f64, usize)> {
    let body = std::fs::read_to_string(dir.join("plot.csv")).unwrap();
    body.lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn blob_path_has_a_plateau_at_the_true_k() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path());
    // Enough neighbors that every pair of blobs is linked.
    let bounds = sonclust(&["bounds", "--data", p(&data), "--k", "45", "--within-cluster"]);
    let b: Value = serde_json::from_slice(&bounds.stdout).unwrap();
    let (lo, hi) = (b["gamma_min"].as_f64().unwrap(), b["gamma_max"].as_f64().unwrap());

    // Geometric grid from γ_min/10 to 3γ_max.
    let grid: Vec<String> =
        (0..=20).map(|i| format!("{:.6e}", lo / 10.0 * (30.0 * hi / lo).powf(i as f64 / 20.0))).collect();
    let out_dir = dir.path().join("path");
    let out = sonclust(&[
        "path",
        "--data",
        p(&data),
        "--k",
        "45",
        "--within-cluster",
        "--gammas",
        &grid.join(","),
        "--out-dir",
        p(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = plot_rows(&out_dir);
    assert_eq!(rows.len(), 21);
    let inside: Vec<usize> = rows.iter().filter(|(g, _)| *g >= lo && *g < hi).map(|r| r.1).collect();
    assert!(inside.len() >= 2, "{rows:?}");
    assert!(inside.iter().all(|&k| k == 5), "{rows:?} on [{lo}, {hi})");
    assert!(rows[0].1 > 5, "{rows:?}");

    let doc = read_json(&out_dir.join("path.json"));
    assert_eq!(doc["records"].as_array().unwrap().len(), 21);
    assert_eq!(doc["failures"].as_array().unwrap().len(), 0);
    assert_eq!(doc["provenance"]["warm_start"], true);
    assert!(out_dir.join("gamma_020/assignment.csv").exists());
    let header = std::fs::read_to_string(out_dir.join("plot.csv")).unwrap();
    assert!(header.starts_with("gamma,K,primal_obj,rand_index\n"));
}

#[test]
fn gamma_ranges_expand_as_written() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path());
    let out_dir = dir.path().join("range");
    let out = sonclust(&["path", "--data", p(&data), "--gammas", "0.2:0.2:1", "--out-dir", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let gammas: Vec<f64> = plot_rows(&out_dir).iter().map(|r| r.0).collect();
    assert_eq!(gammas, vec![0.2, 0.4, 0.6, 0.8, 1.0]);
}

#[test]
fn single_gamma_path_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path());
    let solve_dir = dir.path().join("solve");
    let path_dir = dir.path().join("path");
    assert!(sonclust(&["solve", "--data", p(&data), "--gamma", "0.3", "--out-dir", p(&solve_dir)]).status.success());
    assert!(sonclust(&["path", "--data", p(&data), "--gammas", "0.3", "--out-dir", p(&path_dir)]).status.success());
    for file in ["assignment.csv", "centroids.csv"] {
        let a = std::fs::read(solve_dir.join(file)).unwrap();
        let b = std::fs::read(path_dir.join("gamma_000").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
    let a = read_json(&solve_dir.join("report.json"));
    let b = read_json(&path_dir.join("gamma_000/report.json"));
    assert_eq!(a["primal_obj"], b["primal_obj"]);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path());
    let run = |name: &str, extra: &[&str]| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["path", "--data", p(&data), "--gammas", "0.05,0.2,1", "--out-dir", p(&out_dir)];
        args.extend_from_slice(extra);
        assert!(sonclust(&args).status.success());
        out_dir
    };
    let a = run("a", &[]);
    let b = run("b", &[]);
    for file in ["plot.csv", "gamma_000/assignment.csv", "gamma_001/centroids.csv", "gamma_002/assignment.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    // Cold starts solved in parallel come back in order.
    let c = run("c", &["--no-warm-start"]);
    let d = run("d", &["--no-warm-start"]);
    assert_eq!(std::fs::read(c.join("plot.csv")).unwrap(), std::fs::read(d.join("plot.csv")).unwrap());
    let ks = |dir: &Path| plot_rows(dir).iter().map(|r| r.1).collect::<Vec<_>>();
    assert_eq!(ks(&a), ks(&c));

    let g1 = dir.path().join("g1.txt");
    let g2 = dir.path().join("g2.txt");
    assert!(sonclust(&["graph", "--data", p(&data), "--out", p(&g1)]).status.success());
    let out = sonclust(&["graph", "--data", p(&data), "--out", p(&g2)]);
    assert_eq!(std::fs::read(&g1).unwrap(), std::fs::read(&g2).unwrap());
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["n"], 200);
}

#[test]
fn edge_list_round_trips_through_solve() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path());
    let edges = dir.path().join("edges.txt");
    assert!(sonclust(&["graph", "--data", p(&data), "--k", "7", "--out", p(&edges)]).status.success());
    let a = dir.path().join("knn");
    let b = dir.path().join("file");
    assert!(sonclust(&["solve", "--data", p(&data), "--k", "7", "--gamma", "0.2", "--out-dir", p(&a)])
        .status
        .success());
    let out = sonclust(&["solve", "--data", p(&data), "--graph", p(&edges), "--gamma", "0.2", "--out-dir", p(&b)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read(a.join("assignment.csv")).unwrap(), std::fs::read(b.join("assignment.csv")).unwrap());
}
