//! Weighted sum-of-norms convex clustering.
//!
//! The model is
//!
//! ```text
//! min_X  ½ Σ_i f_i ‖x_i − a_i‖²  +  γ Σ_{(i,j)∈E} w_ij ‖x_i − x_j‖_p
//! ```
//!
//! over centroids `X ∈ R^{d×n}`, where `A = [a_1 … a_n]` holds the observations,
//! `E` is a sparse weighted edge set (usually a Gaussian-weighted k-NN graph) and
//! `f_i` are optional fidelity weights (1 by default). Points whose centroids
//! coincide belong to the same cluster.
//!
//! Solvers:
//!
//! * [`ssnal`]: an inexact augmented Lagrangian method whose subproblems are
//!   solved by a semismooth Newton-CG method ([`ssncg`]). `p = 2` only.
//! * [`admm`]: an inexact ADMM, used as a warm-starter and as the solver for
//!   `p ∈ {1, ∞}`.
//!
//! [`theory`] computes the interval `[γ_min, γ_max)` on which the weighted model
//! provably recovers a given partition and checks it against actual solves.

pub mod admm;
pub mod data;
mod error;
pub mod graph;
pub mod linsolve;
pub mod matrix;
pub mod problem;
pub mod prox;
pub mod ssnal;
pub mod ssncg;
pub mod theory;

pub use admm::{iadmm_step, iadmm_warm_start, solve_admm, AdmmOutcome, IadmmConfig, IadmmSolver, LinearSolverKind};
pub use data::{generate, load_csv, scale_unit_box, CsvOrientation, Dataset, SyntheticKind, SyntheticSpec};
pub use error::{Error, Result};
pub use graph::{LaplacianSpectrum, WeightGraph};
pub use matrix::Mat;
pub use problem::eval::{kmeans_lloyd, rand_index};
pub use problem::{
    dual_objective, extract_clusters, kkt_residuals, primal_objective, ClusterAssignment, ClusterProblem, KktResiduals,
    PrimalDualState,
};
pub use prox::NormKind;
pub use ssnal::{
    solve, solve_path, solve_with, ClusteringPath, PathOptions, PathRecord, PathRunner, Solution, SolveReport,
    SolverKind, SsnalConfig, Termination,
};
pub use ssncg::{jacobian_matvec, minimize_phi, phi_gradient, phi_value, NewtonStep, SsncgConfig, SsncgStats};
pub use theory::{
    cluster_couplings, recovery_bounds, solve_centroid_problem, uniform_weight_bounds, verify_recovery, RecoveryBounds,
    RecoveryReport,
};
