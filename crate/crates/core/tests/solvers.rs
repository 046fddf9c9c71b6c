mod common;

use common::*;
use rand::Rng;
use sonclust::{
    extract_clusters, generate, iadmm_warm_start, kkt_residuals, primal_objective, solve, solve_admm, solve_path,
    ClusterProblem, IadmmConfig, LinearSolverKind, Mat, NormKind, PathOptions, SsnalConfig, SyntheticKind,
    SyntheticSpec, Termination, WeightGraph,
};

fn moons(n: usize, seed: u64) -> sonclust::Dataset {
    generate(&SyntheticSpec { kind: SyntheticKind::two_half_moons(), n, seed }).unwrap()
}

fn p_of(kind: NormKind) -> f64 {
    match kind {
        NormKind::L1 => 1.0,
        NormKind::L2 => 2.0,
        NormKind::Linf => f64::INFINITY,
    }
}

#[test]
fn two_points_match_closed_form() {
    // With one edge, x1 − x2 = Prox_{2γw‖·‖_p}(a1 − a2) and the mean is kept.
    let mut r = rng(17);
    for &kind in &[NormKind::L1, NormKind::L2, NormKind::Linf] {
        for _ in 0..10 {
            let d = r.random_range(1..=3);
            let a = random_mat(&mut r, d, 2);
            let w = r.random_range(0.2..1.5);
            let gamma = r.random_range(0.05..0.6);
            let g = WeightGraph::from_edges(2, [(0, 1, w)]).unwrap();
            let prob = ClusterProblem::new(&a, &g, gamma, kind).unwrap();
            let diff: Vec<f64> = a.col(0).iter().zip(a.col(1)).map(|(x, y)| x - y).collect();
            let delta = brute_prox(p_of(kind), 2.0 * gamma * w, &diff);
            let x = if kind == NormKind::L2 {
                solve(&prob, None, &SsnalConfig { kkt_tol: 1e-10, ..Default::default() }).unwrap().state.x
            } else {
                let cfg = IadmmConfig { tol: 1e-10, max_iters: 200_000, ..Default::default() };
                solve_admm(&prob, None, &cfg).unwrap().state.x
            };
            for k in 0..d {
                let m = 0.5 * (a.get(k, 0) + a.get(k, 1));
                assert!((x.get(k, 0) - (m + delta[k] / 2.0)).abs() <= 1e-6, "{kind:?}");
                assert!((x.get(k, 1) - (m - delta[k] / 2.0)).abs() <= 1e-6, "{kind:?}");
            }
        }
    }
}

#[test]
fn three_points_on_a_line_match_brute_force() {
    // In one dimension every p gives the same objective; minimize it by nested
    // golden-section search.
    let mut r = rng(23);
    for _ in 0..5 {
        let a = Mat::from_fn(1, 3, |_, _| r.random_range(-2.0..2.0));
        let g = WeightGraph::from_edges(3, [(0, 1, 1.0), (1, 2, 0.5), (0, 2, 0.25)]).unwrap();
        let gamma = r.random_range(0.05..0.5);
        let obj = |x: &[f64]| {
            0.5 * x.iter().zip(a.as_slice()).map(|(u, v)| (u - v).powi(2)).sum::<f64>()
                + gamma * g.triples().map(|(i, j, w)| w * (x[i] - x[j]).abs()).sum::<f64>()
        };
        let mut best = [0.0; 3];
        let mut f0 = |u: f64| {
            let mut f1 = |v: f64| {
                let mut f2 = |s: f64| obj(&[u, v, s]);
                golden_min(&mut f2, -3.0, 3.0, 1e-11).1
            };
            golden_min(&mut f1, -3.0, 3.0, 1e-11).1
        };
        best[0] = golden_min(&mut f0, -3.0, 3.0, 1e-11).0;
        let mut f1 = |v: f64| golden_min(&mut |s: f64| obj(&[best[0], v, s]), -3.0, 3.0, 1e-11).1;
        best[1] = golden_min(&mut f1, -3.0, 3.0, 1e-11).0;
        best[2] = golden_min(&mut |s: f64| obj(&[best[0], best[1], s]), -3.0, 3.0, 1e-11).0;
        for kind in [NormKind::L1, NormKind::L2, NormKind::Linf] {
            let prob = ClusterProblem::new(&a, &g, gamma, kind).unwrap();
            let x = if kind == NormKind::L2 {
                solve(&prob, None, &SsnalConfig { kkt_tol: 1e-10, ..Default::default() }).unwrap().state.x
            } else {
                let cfg = IadmmConfig { tol: 1e-10, max_iters: 200_000, ..Default::default() };
                solve_admm(&prob, None, &cfg).unwrap().state.x
            };
            for i in 0..3 {
                assert!((x.get(0, i) - best[i]).abs() <= 1e-6, "{kind:?}: {:?} vs {best:?}", x.as_slice());
            }
        }
    }
}

#[test]
fn ssnal_meets_kkt_contract() {
    let data = moons(300, 4);
    let g = WeightGraph::knn(&data, 10, 0.5).unwrap();
    for &gamma in &[0.2, 1.0, 5.0] {
        let prob = ClusterProblem::new(&data.points, &g, gamma, NormKind::L2).unwrap();
        let sol = solve(&prob, None, &SsnalConfig::default()).unwrap();
        assert_eq!(sol.report.termination, Termination::KktTolMet);
        let res = kkt_residuals(&prob, &sol.state).unwrap();
        assert!(res.max() <= 1e-6, "γ={gamma}: {res:?}");
        assert_eq!(res, sol.report.residuals);
        assert!(res.primal_obj >= res.dual_obj - 1e-6 * res.primal_obj.abs());
    }
}

#[test]
fn ssnal_and_admm_agree() {
    let data = moons(200, 8);
    let g = WeightGraph::knn(&data, 10, 0.5).unwrap();
    for &gamma in &[0.5, 2.0] {
        let prob = ClusterProblem::new(&data.points, &g, gamma, NormKind::L2).unwrap();
        let s = solve(&prob, None, &SsnalConfig { kkt_tol: 1e-8, ..Default::default() }).unwrap();
        let a = solve_admm(&prob, None, &IadmmConfig { tol: 1e-8, max_iters: 100_000, ..Default::default() }).unwrap();
        assert!(a.converged);
        let fs = primal_objective(&prob, &s.state.x).unwrap();
        let fa = primal_objective(&prob, &a.state.x).unwrap();
        assert!((fs - fa).abs() <= 1e-6 * fs.abs(), "γ={gamma}: {fs} vs {fa}");
    }
}

#[test]
fn admm_linear_solvers_agree() {
    let data = moons(150, 2);
    let g = WeightGraph::knn(&data, 8, 0.5).unwrap();
    let prob = ClusterProblem::new(&data.points, &g, 0.7, NormKind::L2).unwrap();
    let run = |kind| {
        let cfg = IadmmConfig { linear_solver: kind, tol: 1e-9, max_iters: 50_000, ..Default::default() };
        solve_admm(&prob, None, &cfg).unwrap()
    };
    let direct = run(LinearSolverKind::Direct);
    let cg = run(LinearSolverKind::Cg);
    assert!(direct.converged && cg.converged);
    let fd = primal_objective(&prob, &direct.state.x).unwrap();
    let fc = primal_objective(&prob, &cg.state.x).unwrap();
    assert!((fd - fc).abs() <= 1e-7 * fd.abs());
}

#[test]
fn ssnal_rejects_l1() {
    let data = moons(50, 1);
    let g = WeightGraph::knn(&data, 5, 0.5).unwrap();
    let prob = ClusterProblem::new(&data.points, &g, 1.0, NormKind::L1).unwrap();
    assert!(solve(&prob, None, &SsnalConfig::default()).is_err());
}

#[test]
fn tiny_gamma_returns_the_data() {
    let data = moons(100, 3);
    let g = WeightGraph::knn(&data, 10, 0.5).unwrap();
    let prob = ClusterProblem::new(&data.points, &g, 1e-12, NormKind::L2).unwrap();
    let sol = solve(&prob, None, &SsnalConfig::default()).unwrap();
    assert!(sol.state.x.sub(&data.points).norm() <= 1e-8);
}

#[test]
fn huge_gamma_collapses_to_the_mean() {
    let data = moons(100, 3);
    let g = WeightGraph::knn(&data, 10, 0.5).unwrap();
    let prob = ClusterProblem::new(&data.points, &g, 1e4, NormKind::L2).unwrap();
    let sol = solve(&prob, None, &SsnalConfig::default()).unwrap();
    let mean = data.points.column_mean();
    for x in sol.state.x.columns() {
        for (a, b) in x.iter().zip(&mean) {
            assert!((a - b).abs() <= 1e-6);
        }
    }
    assert_eq!(extract_clusters(&g, &sol.state.x, 1e-5).unwrap().num_clusters, 1);
}

#[test]
fn warm_started_path_uses_fewer_newton_steps() {
    let data = moons(400, 5);
    let g = WeightGraph::knn(&data, 10, 0.5).unwrap();
    // The usual 0.2-spaced sweep. On much coarser grids the 100 iADMM steps a
    // cold solve starts with can beat the previous γ's solution.
    let gammas: Vec<f64> = (1..=50).map(|k| 0.2 * k as f64).collect();
    let total = |warm: bool| {
        let opts = PathOptions { warm_start: warm, ..Default::default() };
        let path = solve_path(&data.points, &g, NormKind::L2, &gammas, &opts).unwrap();
        assert!(path.records.iter().all(|r| r.report.termination.converged()));
        path.records.iter().map(|r| r.report.newton_iters).sum::<usize>()
    };
    let (warm, cold) = (total(true), total(false));
    assert!(warm < cold, "warm {warm} vs cold {cold}");
}

#[test]
fn path_is_deterministic() {
    let data = moons(150, 6);
    let g = WeightGraph::knn(&data, 10, 0.5).unwrap();
    let gammas = [0.5, 1.0, 2.0];
    let a = solve_path(&data.points, &g, NormKind::L2, &gammas, &PathOptions::default()).unwrap();
    let b = solve_path(&data.points, &g, NormKind::L2, &gammas, &PathOptions::default()).unwrap();
    for (ra, rb) in a.records.iter().zip(&b.records) {
        assert_eq!(ra.x, rb.x);
        assert_eq!(ra.labels, rb.labels);
    }
}

#[test]
fn warm_start_iterates_are_finite_and_improve() {
    let data = moons(200, 9);
    let g = WeightGraph::knn(&data, 10, 0.5).unwrap();
    let prob = ClusterProblem::new(&data.points, &g, 1.0, NormKind::L2).unwrap();
    let early = kkt_residuals(&prob, &iadmm_warm_start(&prob, 5).unwrap()).unwrap();
    let late = kkt_residuals(&prob, &iadmm_warm_start(&prob, 200).unwrap()).unwrap();
    assert!(late.max().is_finite());
    assert!(late.max() < early.max());
}

#[test]
fn fidelity_weights_shift_the_solution() {
    // A heavy fidelity weight pins its point.
    let a = Mat::from_columns(&[vec![0.0], vec![1.0]]);
    let g = WeightGraph::from_edges(2, [(0, 1, 1.0)]).unwrap();
    let f = [100.0, 1.0];
    let prob = ClusterProblem::new(&a, &g, 10.0, NormKind::L2).unwrap().with_fidelity(&f).unwrap();
    let x = solve(&prob, None, &SsnalConfig { kkt_tol: 1e-10, ..Default::default() }).unwrap().state.x;
    // Fused at the weighted mean 1/101.
    assert!((x.get(0, 0) - 1.0 / 101.0).abs() <= 1e-7);
    assert!((x.get(0, 1) - 1.0 / 101.0).abs() <= 1e-7);
}

#[test]
fn admm_warm_start_helps_the_first_solve() {
    let data = moons(500, 12);
    let g = WeightGraph::knn(&data, 10, 0.5).unwrap();
    for &gamma in &[0.2, 1.0, 5.0] {
        let prob = ClusterProblem::new(&data.points, &g, gamma, NormKind::L2).unwrap();
        let warm = solve(&prob, None, &SsnalConfig::default()).unwrap().report;
        let cold = solve(&prob, None, &SsnalConfig { warm_start_iters: 0, ..Default::default() }).unwrap().report;
        assert!(warm.termination.converged() && cold.termination.converged());
        assert!(warm.newton_iters <= cold.newton_iters, "γ={gamma}: {} vs {}", warm.newton_iters, cold.newton_iters);
    }
}
