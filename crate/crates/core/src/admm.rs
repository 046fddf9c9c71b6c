//! Inexact ADMM on the splitting `B(X) = U`:
//!
//! ```text
//! X ← argmin ½‖(X − A)F^{1/2}‖² + σ/2 ‖B(X) − U + Z/σ‖²     i.e.  X (F + σL_G) = AF + σ B*(U − Z/σ)
//! U ← Prox_{p/σ}(B(X) + Z/σ)
//! Z ← Z + τσ (B(X) − U)
//! ```
//!
//! The `X`-step is solved by a sparse Cholesky factor when its envelope is
//! small enough and by warm-started PCG otherwise, with a summable tolerance
//! sequence.

use serde::{Deserialize, Serialize};

use crate::linsolve::{pcg, EnvelopeCholesky, EnvelopePattern, DEFAULT_ENVELOPE_LIMIT};
use crate::problem::{kkt_residuals, ClusterProblem, KktResiduals, PrimalDualState};
use crate::prox;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverKind {
    /// Direct when the envelope has at most `envelope_limit` entries.
    #[default]
    Auto,
    Direct,
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IadmmConfig {
    pub sigma: f64,
    /// Dual step length factor, in `(0, (1 + √5)/2)`.
    pub tau: f64,
    pub max_iters: usize,
    /// Stop when `max{η_P, η_D, η} ≤ tol`.
    pub tol: f64,
    pub linear_solver: LinearSolverKind,
    pub envelope_limit: usize,
    /// PCG tolerance at iteration `k` is `eps0 · eps_decay^k`, floored relative to the right-hand side.
    pub eps0: f64,
    pub eps_decay: f64,
    pub max_cg: usize,
    /// Rescale `σ` when the primal and dual residuals drift apart by more than 10×.
    pub adaptive_sigma: bool,
    /// Residuals are checked every this many iterations in [`solve_admm`].
    pub check_every: usize,
}

impl Default for IadmmConfig {
    fn default() -> Self {
        IadmmConfig {
            sigma: 1.0,
            tau: 1.618,
            max_iters: 20_000,
            tol: 1e-6,
            linear_solver: LinearSolverKind::Auto,
            envelope_limit: DEFAULT_ENVELOPE_LIMIT,
            eps0: 1e-4,
            eps_decay: 0.9,
            max_cg: 1000,
            adaptive_sigma: true,
            check_every: 1,
        }
    }
}

/// Multiply-adds above which the direct factorization is skipped in `Auto` mode.
const MAX_FACTOR_COST: f64 = 1e10;

// One per solver, so boxing the factor buys nothing.
#[allow(clippy::large_enum_variant)]
enum XSolver {
    Direct { pattern: EnvelopePattern, factor: EnvelopeCholesky },
    Cg { diag: Vec<f64> },
}

/// Reusable iADMM state: owns the factorization (or preconditioner) of
/// `F + σ L_G` for the current `σ`.
pub struct IadmmSolver<'p, 'a> {
    prob: &'p ClusterProblem<'a>,
    cfg: IadmmConfig,
    sigma: f64,
    xsolver: XSolver,
    iterations: usize,
    cg_iterations: usize,
    thresholds: Vec<f64>,
}

impl<'p, 'a> IadmmSolver<'p, 'a> {
    pub fn new(prob: &'p ClusterProblem<'a>, cfg: IadmmConfig) -> Result<Self> {
        if !(cfg.sigma > 0.0) || !(cfg.tau > 0.0 && cfg.tau < 0.5 * (1.0 + 5f64.sqrt())) {
            return Err(Error::InvalidArgument(format!(
                "need σ > 0 and τ in (0, 1.618…), got σ = {}, τ = {}",
                cfg.sigma, cfg.tau
            )));
        }
        let pattern = match cfg.linear_solver {
            LinearSolverKind::Cg => None,
            LinearSolverKind::Direct => Some(EnvelopePattern::new(prob.graph)),
            LinearSolverKind::Auto => Some(EnvelopePattern::new(prob.graph))
                .filter(|p| p.envelope_size() <= cfg.envelope_limit && p.factor_cost() <= MAX_FACTOR_COST),
        };
        let xsolver = match pattern {
            Some(pattern) => {
                let factor = pattern.factor(&|i| prob.fidelity_at(i), cfg.sigma, prob.graph.degrees())?;
                XSolver::Direct { pattern, factor }
            }
            None => XSolver::Cg { diag: Self::diag(prob, cfg.sigma) },
        };
        Ok(IadmmSolver {
            prob,
            cfg,
            sigma: cfg.sigma,
            xsolver,
            iterations: 0,
            cg_iterations: 0,
            thresholds: prob.thresholds(),
        })
    }

    fn diag(prob: &ClusterProblem<'_>, sigma: f64) -> Vec<f64> {
        (0..prob.num_points()).map(|i| prob.fidelity_at(i) + sigma * prob.graph.degrees()[i] as f64).collect()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn cg_iterations(&self) -> usize {
        self.cg_iterations
    }

    /// Changes `σ`, refactoring the `X`-step system.
    pub fn set_sigma(&mut self, sigma: f64) -> Result<()> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        self.sigma = sigma;
        match &mut self.xsolver {
            XSolver::Direct { pattern, factor } => {
                *factor = pattern.factor(&|i| self.prob.fidelity_at(i), sigma, self.prob.graph.degrees())?;
            }
            XSolver::Cg { diag } => *diag = Self::diag(self.prob, sigma),
        }
        Ok(())
    }

    /// One iteration; `state.v` is refreshed to `B*(Z)`.
    pub fn step(&mut self, state: &mut PrimalDualState) -> Result<()> {
        let prob = self.prob;
        let sigma = self.sigma;
        state.check(prob)?;
        let (d, n) = (prob.dim(), prob.num_points());

        // R = AF + σ B*(U − Z/σ)
        let mut rhs = prob.points.clone();
        prob.apply_fidelity(&mut rhs);
        let mut w = state.u.clone();
        w.axpy(-1.0 / sigma, &state.z);
        prob.graph.accumulate_bstar(&w, sigma, &mut rhs);

        let graph = prob.graph;
        match &self.xsolver {
            XSolver::Direct { factor, .. } => {
                for k in 0..d {
                    let mut row = rhs.row(k);
                    factor.solve_in_place(&mut row);
                    state.x.set_row(k, &row);
                }
            }
            XSolver::Cg { diag } => {
                let eps = (self.cfg.eps0 * self.cfg.eps_decay.powi(self.iterations.min(i32::MAX as usize) as i32))
                    .max(1e-12 * rhs.norm());
                for k in 0..d {
                    let b = rhs.row(k);
                    let mut xk = state.x.row(k);
                    let out = pcg(
                        |v, out| {
                            for i in 0..n {
                                out[i] = diag[i] * v[i];
                            }
                            for &(i, j) in graph.edges() {
                                out[i] -= sigma * v[j];
                                out[j] -= sigma * v[i];
                            }
                        },
                        diag,
                        &b,
                        &mut xk,
                        eps / (d as f64).sqrt(),
                        self.cfg.max_cg,
                    );
                    self.cg_iterations += out.iterations;
                    state.x.set_row(k, &xk);
                }
            }
        }

        // U = Prox_{p/σ}(B(X) + Z/σ), Z += τσ(B(X) − U)
        let bx = graph.apply_b(&state.x)?;
        let mut u = bx.clone();
        u.axpy(1.0 / sigma, &state.z);
        let radii: Vec<f64> = self.thresholds.iter().map(|t| t / sigma).collect();
        prox::prox_block_in_place(prob.norm, &mut u, &radii);
        let mut r = bx;
        r.axpy(-1.0, &u);
        state.z.axpy(self.cfg.tau * sigma, &r);
        state.u = u;
        graph.apply_bstar_into(&state.z, &mut state.v);
        self.iterations += 1;
        if !(state.x.is_finite() && state.z.is_finite()) {
            return Err(Error::NonFiniteIterate("iADMM"));
        }
        Ok(())
    }
}

/// One iADMM iteration with a freshly built solver. Prefer [`IadmmSolver`] in loops.
pub fn iadmm_step(prob: &ClusterProblem<'_>, state: &mut PrimalDualState, cfg: &IadmmConfig) -> Result<()> {
    IadmmSolver::new(prob, *cfg)?.step(state)
}

/// `iters` iADMM iterations from `X = A, U = B(A), Z = 0`.
pub fn iadmm_warm_start(prob: &ClusterProblem<'_>, iters: usize) -> Result<PrimalDualState> {
    let mut state = PrimalDualState::initial(prob);
    let mut solver = IadmmSolver::new(prob, IadmmConfig { adaptive_sigma: false, ..Default::default() })?;
    for _ in 0..iters {
        solver.step(&mut state)?;
    }
    Ok(state)
}

/// Outcome of [`solve_admm`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome {
    pub state: PrimalDualState,
    pub residuals: KktResiduals,
    pub iterations: usize,
    pub cg_iterations: usize,
    pub converged: bool,
    /// `σ` at exit (differs from the configured one with `adaptive_sigma`).
    pub sigma: f64,
}

/// Runs iADMM until `max{η_P, η_D, η} ≤ cfg.tol` or `cfg.max_iters`.
pub fn solve_admm(prob: &ClusterProblem<'_>, init: Option<PrimalDualState>, cfg: &IadmmConfig) -> Result<AdmmOutcome> {
    let mut state = init.unwrap_or_else(|| PrimalDualState::initial(prob));
    state.check(prob)?;
    let mut solver = IadmmSolver::new(prob, *cfg)?;
    let check_every = cfg.check_every.max(1);
    let mut residuals = kkt_residuals(prob, &state)?;
    let mut converged = residuals.max() <= cfg.tol && residuals.eta_p + residuals.eta > 0.0;
    let mut last_rescale = 0;
    while !converged && solver.iterations() < cfg.max_iters {
        solver.step(&mut state)?;
        let it = solver.iterations();
        if it % check_every != 0 {
            continue;
        }
        residuals = kkt_residuals(prob, &state)?;
        converged = residuals.max() <= cfg.tol;
        if cfg.adaptive_sigma && !converged && it - last_rescale >= 50 {
            let (rp, rd) = (residuals.eta_p, residuals.eta);
            let factor = if rp > 10.0 * rd {
                2.0
            } else if rd > 10.0 * rp {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                let s = (solver.sigma() * factor).clamp(1e-6, 1e6);
                solver.set_sigma(s)?;
                last_rescale = it;
            }
        }
    }
    if !converged {
        residuals = kkt_residuals(prob, &state)?;
    }
    Ok(AdmmOutcome {
        residuals,
        iterations: solver.iterations(),
        cg_iterations: solver.cg_iterations(),
        converged,
        sigma: solver.sigma(),
        state,
    })
}
