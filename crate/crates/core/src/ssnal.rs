//! Semismooth Newton augmented Lagrangian method (SSNAL) and the γ-path driver.
//!
//! Each outer iteration minimizes the augmented Lagrangian `φ(X)` at the current
//! multiplier `Z̃` with [`crate::ssncg`], then sets
//! `U = Prox_{p/σ}(D)`, `Z = σ(D − U) = σΠ(D)` with `D = B(X) + Z̃/σ`.
//! `Z` therefore always lies in the dual feasible set and `η_D = 0`.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::admm::{iadmm_warm_start, solve_admm, IadmmConfig};
use crate::graph::WeightGraph;
use crate::matrix::Mat;
use crate::problem::{extract_clusters, kkt_residuals, ClusterProblem, KktResiduals, PrimalDualState};
use crate::prox::NormKind;
use crate::ssncg::{self, NewtonStep, SsncgConfig, Subproblem};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsnalConfig {
    pub sigma0: f64,
    pub sigma_max: f64,
    /// `σ` is multiplied by this factor when `η_P` fails to drop by `eta_p_ratio`.
    pub sigma_factor: f64,
    pub eta_p_ratio: f64,
    /// Inner tolerance sequence `ε_k = eps0 · eps_decay^k`.
    pub eps0: f64,
    pub eps_decay: f64,
    /// The inner tolerance is also capped at `inner_cap · max(kkt_tol, η_P) · (1 + ‖A‖)`.
    pub inner_cap: f64,
    /// ...and never tighter than `inner_floor · kkt_tol · (1 + ‖A‖)`, since
    /// `η ≤ ‖∇φ‖ / (1 + ‖A‖)` once `Z` is updated.
    pub inner_floor: f64,
    pub kkt_tol: f64,
    pub max_outer: usize,
    /// Stop when the largest residual has not improved by `stagnation_rel`
    /// (relative) over this many outer iterations.
    pub stagnation_window: usize,
    pub stagnation_rel: f64,
    /// iADMM iterations used to initialize a cold solve; 0 starts from `X = A`.
    pub warm_start_iters: usize,
    pub ssncg: SsncgConfig,
}

impl Default for SsnalConfig {
    fn default() -> Self {
        SsnalConfig {
            sigma0: 1.0,
            sigma_max: 1e6,
            sigma_factor: 3.0,
            eta_p_ratio: 0.6,
            eps0: 1e-2,
            eps_decay: 0.7,
            inner_cap: 0.5,
            inner_floor: 0.2,
            kkt_tol: 1e-6,
            max_outer: 200,
            stagnation_window: 10,
            stagnation_rel: 1e-2,
            warm_start_iters: 100,
            ssncg: SsncgConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    KktTolMet,
    MaxIters,
    Stagnation,
}

impl Termination {
    pub fn converged(self) -> bool {
        self == Termination::KktTolMet
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub gamma: f64,
    pub outer_iters: usize,
    pub newton_iters: usize,
    pub cg_iters: usize,
    pub residuals: KktResiduals,
    pub time_s: f64,
    pub termination: Termination,
    /// Penalty parameter at exit; a warm-started solve of a nearby γ can reuse it.
    pub final_sigma: f64,
    /// Newton iterations of each outer iteration.
    pub newton_per_outer: Vec<usize>,
    /// Largest accepted change of `φ` over all Newton steps (negative when all decreased it).
    pub max_phi_increase: f64,
    /// Per-Newton-step trace, filled when [`SsncgConfig::trace`] is set.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub newton_trace: Vec<NewtonStep>,
}

impl SolveReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "schema": "v1",
            "gamma": self.gamma,
            "iters": { "outer": self.outer_iters, "newton": self.newton_iters, "cg": self.cg_iters },
            "residuals": { "etaP": self.residuals.eta_p, "etaD": self.residuals.eta_d, "eta": self.residuals.eta },
            "primal_obj": self.residuals.primal_obj,
            "dual_obj": self.residuals.dual_obj,
            "time_s": self.time_s,
            "termination": self.termination,
        })
    }

    /// `j,grad_norm,phi,cg_iters,active_edges,step` rows of the Newton trace.
    pub fn newton_trace_csv(&self) -> String {
        let mut out = String::from("j,grad_norm,phi,cg_iters,active_edges,step\n");
        for s in &self.newton_trace {
            out.push_str(&format!(
                "{},{:e},{:e},{},{},{:e}\n",
                s.iteration, s.grad_norm, s.phi, s.cg_iters, s.active_edges, s.step
            ));
        }
        out
    }
}

/// Solution of one γ.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub state: PrimalDualState,
    pub report: SolveReport,
}

/// Solves the problem with SSNAL (`p = 2`). `init` is used as given; without
/// it the solve starts from `cfg.warm_start_iters` iADMM iterations.
pub fn solve(prob: &ClusterProblem<'_>, init: Option<PrimalDualState>, cfg: &SsnalConfig) -> Result<Solution> {
    if prob.norm != NormKind::L2 {
        return Err(Error::UnsupportedNorm("SSNAL"));
    }
    let start = Instant::now();
    let mut state = match init {
        Some(s) => {
            s.check(prob)?;
            s
        }
        None => iadmm_warm_start(prob, cfg.warm_start_iters)?,
    };
    let norm_a = prob.data_norm();
    let mut sigma = cfg.sigma0;
    let mut report = SolveReport {
        gamma: prob.gamma,
        outer_iters: 0,
        newton_iters: 0,
        cg_iters: 0,
        residuals: kkt_residuals(prob, &state)?,
        time_s: 0.0,
        termination: Termination::MaxIters,
        final_sigma: sigma,
        newton_per_outer: Vec::new(),
        max_phi_increase: f64::NEG_INFINITY,
        newton_trace: Vec::new(),
    };
    // The warm start may carry an infeasible Z (iADMM does not project); SSNAL
    // starts from its projection.
    state.z = prob.project_dual(&state.z)?;
    let mut eta_p_prev = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut best_at = 0;

    for k in 0..cfg.max_outer {
        let eps_k = cfg.eps0 * cfg.eps_decay.powi(k as i32);
        let inner_tol = (eps_k / sigma.sqrt().max(1.0))
            .min(cfg.inner_cap * cfg.kkt_tol.max(eta_p_prev) * (1.0 + norm_a))
            .max(cfg.inner_floor * cfg.kkt_tol * (1.0 + norm_a));
        let z_tilde = state.z.clone();
        let sub = Subproblem::new(prob, sigma, &z_tilde)?;
        let (stats, at) = ssncg::minimize(&sub, &mut state.x, inner_tol, &cfg.ssncg)?;
        report.outer_iters += 1;
        report.newton_iters += stats.newton_iters;
        report.cg_iters += stats.cg_iters;
        report.newton_per_outer.push(stats.newton_iters);
        report.max_phi_increase = report.max_phi_increase.max(stats.max_phi_increase);
        report.newton_trace.extend(stats.steps.iter().copied());

        // U = D − Π(D), Z = σΠ(D)
        let mut u = at.d;
        u.axpy(-1.0, &at.proj);
        state.u = u;
        let mut z = at.proj;
        z.scale(sigma);
        state.z = z;
        prob.graph.apply_bstar_into(&state.z, &mut state.v);
        if !(state.x.is_finite() && state.z.is_finite()) {
            return Err(Error::NonFiniteIterate("SSNAL"));
        }

        let res = kkt_residuals(prob, &state)?;
        report.residuals = res;
        let worst = res.max();
        if worst <= cfg.kkt_tol {
            report.termination = Termination::KktTolMet;
            break;
        }
        if worst < best * (1.0 - cfg.stagnation_rel) {
            best = worst;
            best_at = k;
        } else if k - best_at >= cfg.stagnation_window {
            report.termination = Termination::Stagnation;
            break;
        }
        if res.eta_p > cfg.eta_p_ratio * eta_p_prev {
            sigma = (sigma * cfg.sigma_factor).min(cfg.sigma_max);
        }
        eta_p_prev = res.eta_p;
    }
    report.final_sigma = sigma;
    report.time_s = start.elapsed().as_secs_f64();
    Ok(Solution { state, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Ssnal,
    Admm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    pub solver: SolverKind,
    pub ssnal: SsnalConfig,
    pub admm: IadmmConfig,
    /// Start each γ from the previous solution.
    pub warm_start: bool,
    /// Relative merge tolerance for [`extract_clusters`].
    pub cluster_tol: f64,
    /// On warm starts the next γ begins at the previous final σ, clipped to
    /// this value. A very large carried σ makes the first subproblem badly
    /// conditioned.
    pub sigma_carry_cap: f64,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions {
            solver: SolverKind::Ssnal,
            ssnal: SsnalConfig::default(),
            admm: IadmmConfig::default(),
            warm_start: true,
            cluster_tol: 1e-5,
            sigma_carry_cap: 1e2,
        }
    }
}

impl PathOptions {
    /// Sets the KKT tolerance of both solvers.
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.ssnal.kkt_tol = tol;
        self.admm.tol = tol;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub gamma: f64,
    pub num_clusters: usize,
    /// 1-based cluster labels from [`extract_clusters`].
    pub labels: Vec<usize>,
    pub centroids: Mat,
    pub report: SolveReport,
    /// The solution `X` (one column per point).
    pub x: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringPath {
    pub records: Vec<PathRecord>,
}

impl ClusteringPath {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "schema": "v1",
            "gammas": self.records.iter().map(|r| r.gamma).collect::<Vec<_>>(),
            "records": self.records.iter().map(|r| {
                let mut v = r.report.to_json();
                v["K"] = json!(r.num_clusters);
                v
            }).collect::<Vec<_>>(),
        })
    }
}

/// Solves one γ with the configured solver.
pub fn solve_with(prob: &ClusterProblem<'_>, init: Option<PrimalDualState>, opts: &PathOptions) -> Result<Solution> {
    match opts.solver {
        SolverKind::Ssnal => solve(prob, init, &opts.ssnal),
        SolverKind::Admm => {
            let start = Instant::now();
            let out = solve_admm(prob, init, &opts.admm)?;
            Ok(Solution {
                report: SolveReport {
                    gamma: prob.gamma,
                    outer_iters: out.iterations,
                    newton_iters: 0,
                    cg_iters: out.cg_iterations,
                    residuals: out.residuals,
                    time_s: start.elapsed().as_secs_f64(),
                    termination: if out.converged { Termination::KktTolMet } else { Termination::MaxIters },
                    final_sigma: out.sigma,
                    newton_per_outer: Vec::new(),
                    max_phi_increase: f64::NEG_INFINITY,
                    newton_trace: Vec::new(),
                },
                state: out.state,
            })
        }
    }
}

/// Solves a sequence of γ values. With `warm_start`, every γ after the first
/// starts from the previous solution.
pub fn solve_path(
    points: &Mat,
    graph: &WeightGraph,
    norm: NormKind,
    gammas: &[f64],
    opts: &PathOptions,
) -> Result<ClusteringPath> {
    let mut runner = PathRunner::new(points, graph, norm, opts);
    let records = gammas.iter().map(|&g| runner.solve(g)).collect::<Result<Vec<_>>>()?;
    Ok(ClusteringPath { records })
}

/// One γ at a time, carrying the warm start between calls. A failed γ
/// returns its error and the next call starts cold.
pub struct PathRunner<'a> {
    points: &'a Mat,
    graph: &'a WeightGraph,
    norm: NormKind,
    opts: PathOptions,
    sigma0: f64,
    prev: Option<PrimalDualState>,
}

impl<'a> PathRunner<'a> {
    pub fn new(points: &'a Mat, graph: &'a WeightGraph, norm: NormKind, opts: &PathOptions) -> Self {
        PathRunner { points, graph, norm, opts: *opts, sigma0: opts.ssnal.sigma0, prev: None }
    }

    pub fn solve(&mut self, gamma: f64) -> Result<PathRecord> {
        let at = |e: Error| Error::AtGamma { gamma, source: Box::new(e) };
        let prob = ClusterProblem::new(self.points, self.graph, gamma, self.norm).map_err(at)?;
        let init = if self.opts.warm_start { self.prev.take() } else { None };
        let sol = match solve_with(&prob, init, &self.opts) {
            Ok(sol) => sol,
            Err(e) => {
                self.opts.ssnal.sigma0 = self.sigma0;
                return Err(at(e));
            }
        };
        if self.opts.warm_start && self.opts.solver == SolverKind::Ssnal {
            self.opts.ssnal.sigma0 = sol.report.final_sigma.min(self.opts.sigma_carry_cap).max(self.sigma0);
        }
        let clusters = extract_clusters(self.graph, &sol.state.x, self.opts.cluster_tol).map_err(at)?;
        let record = PathRecord {
            gamma,
            num_clusters: clusters.num_clusters,
            labels: clusters.labels,
            centroids: clusters.centroids,
            report: sol.report,
            x: sol.state.x.clone(),
        };
        self.prev = Some(sol.state);
        Ok(record)
    }
}
