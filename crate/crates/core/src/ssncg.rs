//! Semismooth Newton-CG for the augmented Lagrangian subproblem
//!
//! ```text
//! min_X φ(X) = ½‖(X − A)F^{1/2}‖² + Σ_l σ·M_l(D^l) − ‖Z̃‖²/(2σ),   D = B(X) + Z̃/σ,
//! ```
//!
//! where `M_l` is the Moreau envelope of `(γw_l/σ)‖·‖₂` (a Huber function).
//! With `Π_l` the projection onto the ball of radius `t_l = γw_l/σ`,
//!
//! ```text
//! ∇φ(X) = F(X − A) + σ B*(Π(D)),
//! V(H)  = HF + σ B*(J(B(H))),   J_l = I if ‖D^l‖ ≤ t_l, else α_l (I − D^l D^lᵀ/‖D^l‖²), α_l = t_l/‖D^l‖.
//! ```
//!
//! `V` is a generalized Jacobian of `∇φ` and satisfies `F ⪯ V ⪯ F + σ L_G`.

use serde::{Deserialize, Serialize};

use crate::matrix::{dot, norm2, Mat};
use crate::problem::ClusterProblem;
use crate::prox::NormKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsncgConfig {
    /// Armijo constant.
    pub mu: f64,
    /// Backtracking factor.
    pub delta: f64,
    /// CG stops once `‖V(H) + ∇φ‖ ≤ min(η̄, ‖∇φ‖^{1+τ})`.
    pub tau: f64,
    pub eta_bar: f64,
    pub max_cg: usize,
    pub max_newton: usize,
    pub max_backtracks: usize,
    /// Diagonal preconditioning of CG.
    pub jacobi: bool,
    /// Keep one [`NewtonStep`] per iteration in the stats.
    pub trace: bool,
}

impl Default for SsncgConfig {
    fn default() -> Self {
        SsncgConfig {
            mu: 1e-4,
            delta: 0.5,
            tau: 0.5,
            eta_bar: 1e-2,
            max_cg: 300,
            max_newton: 200,
            max_backtracks: 50,
            jacobi: false,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonStep {
    pub iteration: usize,
    pub grad_norm: f64,
    pub phi: f64,
    pub cg_iters: usize,
    pub active_edges: usize,
    pub step: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SsncgStats {
    pub newton_iters: usize,
    pub cg_iters: usize,
    pub grad_norm: f64,
    pub phi: f64,
    /// Largest accepted increase of φ; nonpositive when every step decreased it.
    pub max_phi_increase: f64,
    pub converged: bool,
    pub steps: Vec<NewtonStep>,
}

/// Everything derived from one evaluation point `X`.
#[derive(Debug, Clone)]
pub(crate) struct PhiPoint {
    /// `D = B(X) + Z̃/σ`.
    pub d: Mat,
    /// `‖D^l‖`.
    pub d_norms: Vec<f64>,
    /// `Π(D)`; the multiplier update is `σ Π(D)`.
    pub proj: Mat,
    pub grad: Mat,
    pub phi: f64,
}

/// The subproblem at fixed `(σ, Z̃)`.
pub(crate) struct Subproblem<'p, 'a> {
    pub prob: &'p ClusterProblem<'a>,
    pub sigma: f64,
    pub z_tilde: &'p Mat,
    /// `t_l = γ w_l / σ`.
    pub radii: Vec<f64>,
    z_tilde_sq: f64,
}

impl<'p, 'a> Subproblem<'p, 'a> {
    pub fn new(prob: &'p ClusterProblem<'a>, sigma: f64, z_tilde: &'p Mat) -> Result<Self> {
        if prob.norm != NormKind::L2 {
            return Err(Error::UnsupportedNorm("the semismooth Newton-CG solver"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        prob.check_edge_mat("Z", z_tilde)?;
        let radii = prob.graph.weights().iter().map(|w| prob.gamma * w / sigma).collect();
        Ok(Subproblem { prob, sigma, z_tilde, radii, z_tilde_sq: z_tilde.norm_sq() })
    }

    /// `σ M_l(D)` from the norm of `D`.
    #[inline]
    fn envelope(&self, l: usize, norm: f64) -> f64 {
        let t = self.radii[l];
        if norm <= t {
            0.5 * self.sigma * norm * norm
        } else {
            self.sigma * t * (norm - 0.5 * t)
        }
    }

    pub fn eval(&self, x: &Mat) -> PhiPoint {
        let prob = self.prob;
        let mut d = prob.graph.apply_b(x).expect("shape checked by caller");
        d.axpy(1.0 / self.sigma, self.z_tilde);
        let mut proj = d.clone();
        let mut d_norms = Vec::with_capacity(d.cols());
        let mut envelope_sum = 0.0;
        for l in 0..d.cols() {
            let nl = norm2(d.col(l));
            d_norms.push(nl);
            envelope_sum += self.envelope(l, nl);
            let t = self.radii[l];
            if nl > t {
                let s = t / nl;
                proj.col_mut(l).iter_mut().for_each(|v| *v *= s);
            }
        }
        let mut grad = x.sub(prob.points);
        prob.apply_fidelity(&mut grad);
        prob.graph.accumulate_bstar(&proj, self.sigma, &mut grad);
        let phi = prob.fidelity_term(x) + envelope_sum - self.z_tilde_sq / (2.0 * self.sigma);
        PhiPoint { d, d_norms, proj, grad, phi }
    }

    pub fn phi(&self, x: &Mat) -> f64 {
        self.eval(x).phi
    }

    /// `φ(X + s·H) − φ(X)` evaluated edge by edge to avoid cancellation.
    fn phi_change(&self, at: &PhiPoint, fx_minus_a: &Mat, h: &Mat, bh: &Mat, h_fh: f64, s: f64) -> f64 {
        let mut delta = s * fx_minus_a.dot(h) + 0.5 * s * s * h_fh;
        let d_dim = at.d.rows();
        let mut buf = vec![0.0; d_dim];
        for l in 0..at.d.cols() {
            let (dl, bl) = (at.d.col(l), bh.col(l));
            for k in 0..d_dim {
                buf[k] = dl[k] + s * bl[k];
            }
            let new_norm = norm2(&buf);
            let t = self.radii[l];
            let old_norm = at.d_norms[l];
            delta += if new_norm <= t && old_norm <= t {
                // ½σ(‖D + sBh‖² − ‖D‖²) without forming both squares.
                self.sigma * (s * dot(dl, bl) + 0.5 * s * s * dot(bl, bl))
            } else if new_norm > t && old_norm > t {
                self.sigma * t * (new_norm - old_norm)
            } else {
                self.envelope(l, new_norm) - self.envelope(l, old_norm)
            };
        }
        delta
    }

    fn fidelity_quadratic(&self, h: &Mat) -> f64 {
        (0..h.cols()).map(|i| self.prob.fidelity_at(i) * dot(h.col(i), h.col(i))).sum()
    }
}

/// Generalized Jacobian of `∇φ` frozen at one point.
pub(crate) struct Jacobian<'s, 'p, 'a> {
    sub: &'s Subproblem<'p, 'a>,
    /// Per edge: `None` when `J_l = I`, else `(α_l, D^l/‖D^l‖)`.
    edge_ops: Vec<Option<(f64, Vec<f64>)>>,
}

impl<'s, 'p, 'a> Jacobian<'s, 'p, 'a> {
    pub fn new(sub: &'s Subproblem<'p, 'a>, at: &PhiPoint) -> Self {
        let edge_ops = (0..at.d.cols())
            .map(|l| {
                let nl = at.d_norms[l];
                let t = sub.radii[l];
                let alpha = if nl > 0.0 { t / nl } else { f64::INFINITY };
                (alpha < 1.0).then(|| (alpha, at.d.col(l).iter().map(|v| v / nl).collect()))
            })
            .collect();
        Jacobian { sub, edge_ops }
    }

    /// `|Ê|`, the edges where the projection is active.
    pub fn active_edges(&self) -> usize {
        self.edge_ops.iter().filter(|e| e.is_some()).count()
    }

    pub fn apply(&self, h: &Mat, out: &mut Mat) {
        let prob = self.sub.prob;
        let sigma = self.sub.sigma;
        out.as_mut_slice().copy_from_slice(h.as_slice());
        prob.apply_fidelity(out);
        let d = h.rows();
        let mut c = vec![0.0; d];
        for (l, &(i, j)) in prob.graph.edges().iter().enumerate() {
            let (hi, hj) = (h.col(i), h.col(j));
            for k in 0..d {
                c[k] = hi[k] - hj[k];
            }
            if let Some((alpha, u)) = &self.edge_ops[l] {
                let proj = dot(u, &c);
                for k in 0..d {
                    c[k] = alpha * (c[k] - proj * u[k]);
                }
            }
            let oi = out.col_mut(i);
            for k in 0..d {
                oi[k] += sigma * c[k];
            }
            let oj = out.col_mut(j);
            for k in 0..d {
                oj[k] -= sigma * c[k];
            }
        }
    }

    /// Diagonal of `V` in the column-major layout of `X`.
    pub fn diagonal(&self) -> Mat {
        let prob = self.sub.prob;
        let sigma = self.sub.sigma;
        let d = prob.dim();
        let mut diag = Mat::from_fn(d, prob.num_points(), |_, i| prob.fidelity_at(i));
        for (l, &(i, j)) in prob.graph.edges().iter().enumerate() {
            for k in 0..d {
                let jkk = match &self.edge_ops[l] {
                    None => 1.0,
                    Some((alpha, u)) => alpha * (1.0 - u[k] * u[k]),
                };
                diag.col_mut(i)[k] += sigma * jkk;
                diag.col_mut(j)[k] += sigma * jkk;
            }
        }
        diag
    }
}

/// Solves `V(H) = rhs` by (optionally Jacobi-preconditioned) CG from `H = 0`.
/// Returns the CG iteration count.
fn conjugate_gradient(
    jac: &Jacobian<'_, '_, '_>,
    rhs: &Mat,
    h: &mut Mat,
    tol: f64,
    max_iter: usize,
    precond: Option<&Mat>,
) -> Result<usize> {
    h.fill(0.0);
    let mut r = rhs.clone();
    let apply_precond = |r: &Mat| -> Mat {
        match precond {
            None => r.clone(),
            Some(m) => Mat::from_col_major(
                r.rows(),
                r.cols(),
                r.as_slice().iter().zip(m.as_slice()).map(|(a, b)| a / b).collect(),
            ),
        }
    };
    if r.norm() <= tol {
        return Ok(0);
    }
    let mut z = apply_precond(&r);
    let mut p = z.clone();
    let mut rz = r.dot(&z);
    let mut q = Mat::zeros(rhs.rows(), rhs.cols());
    for it in 1..=max_iter {
        jac.apply(&p, &mut q);
        let pq = p.dot(&q);
        if !(pq > 0.0) {
            return Err(Error::NotPositiveDefinite { iteration: it, curvature: pq });
        }
        let alpha = rz / pq;
        h.axpy(alpha, &p);
        r.axpy(-alpha, &q);
        if r.norm() <= tol {
            return Ok(it);
        }
        z = apply_precond(&r);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.scale(beta);
        p.axpy(1.0, &z);
    }
    Ok(max_iter)
}

/// Minimizes `φ` in place from the given `X` until `‖∇φ(X)‖ ≤ tol`.
///
/// The returned point is the last evaluation of `φ` at `X`, so the caller can
/// form `Z = σΠ(D)` without re-evaluating.
pub(crate) fn minimize(
    sub: &Subproblem<'_, '_>,
    x: &mut Mat,
    tol: f64,
    cfg: &SsncgConfig,
) -> Result<(SsncgStats, PhiPoint)> {
    sub.prob.check_x(x)?;
    let mut stats = SsncgStats { max_phi_increase: f64::NEG_INFINITY, ..Default::default() };
    let mut at = sub.eval(x);
    let mut h = Mat::zeros(x.rows(), x.cols());
    loop {
        let gnorm = at.grad.norm();
        stats.grad_norm = gnorm;
        stats.phi = at.phi;
        if !gnorm.is_finite() || !at.phi.is_finite() {
            return Err(Error::NonFiniteIterate("semismooth Newton-CG"));
        }
        if gnorm <= tol {
            stats.converged = true;
            break;
        }
        if stats.newton_iters >= cfg.max_newton {
            break;
        }
        let jac = Jacobian::new(sub, &at);
        let precond = cfg.jacobi.then(|| jac.diagonal());
        let cg_tol = cfg.eta_bar.min(gnorm.powf(1.0 + cfg.tau));
        let mut rhs = at.grad.clone();
        rhs.scale(-1.0);
        let cg_iters = conjugate_gradient(&jac, &rhs, &mut h, cg_tol, cfg.max_cg, precond.as_ref())?;
        stats.cg_iters += cg_iters;

        let mut slope = at.grad.dot(&h);
        if !(slope < 0.0) {
            h.as_mut_slice().copy_from_slice(rhs.as_slice());
            slope = -gnorm * gnorm;
        }
        let mut fx_minus_a = x.sub(sub.prob.points);
        sub.prob.apply_fidelity(&mut fx_minus_a);
        let bh = sub.prob.graph.apply_b(&h)?;
        let h_fh = sub.fidelity_quadratic(&h);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_backtracks {
            let change = sub.phi_change(&at, &fx_minus_a, &h, &bh, h_fh, step);
            if change <= cfg.mu * step * slope && change < 0.0 {
                accepted = Some(change);
                break;
            }
            step *= cfg.delta;
        }
        let Some(change) = accepted else {
            return Err(Error::LineSearchFailed { backtracks: cfg.max_backtracks, grad_norm: gnorm });
        };
        stats.max_phi_increase = stats.max_phi_increase.max(change);
        x.axpy(step, &h);
        stats.newton_iters += 1;
        at = sub.eval(x);
        if cfg.trace {
            stats.steps.push(NewtonStep {
                iteration: stats.newton_iters,
                grad_norm: at.grad.norm(),
                phi: at.phi,
                cg_iters,
                active_edges: jac.active_edges(),
                step,
            });
        }
    }
    Ok((stats, at))
}

/// Minimizes the subproblem `φ` for the given `σ` and multiplier `Z̃`,
/// overwriting `x`. Requires `p = 2`.
pub fn minimize_phi(
    prob: &ClusterProblem<'_>,
    sigma: f64,
    z_tilde: &Mat,
    x: &mut Mat,
    tol: f64,
    cfg: &SsncgConfig,
) -> Result<SsncgStats> {
    let sub = Subproblem::new(prob, sigma, z_tilde)?;
    minimize(&sub, x, tol, cfg).map(|(s, _)| s)
}

/// `φ(X)` for the given `σ`, `Z̃`.
pub fn phi_value(prob: &ClusterProblem<'_>, sigma: f64, z_tilde: &Mat, x: &Mat) -> Result<f64> {
    prob.check_x(x)?;
    Ok(Subproblem::new(prob, sigma, z_tilde)?.phi(x))
}

/// `∇φ(X)` for the given `σ`, `Z̃`.
pub fn phi_gradient(prob: &ClusterProblem<'_>, sigma: f64, z_tilde: &Mat, x: &Mat) -> Result<Mat> {
    prob.check_x(x)?;
    Ok(Subproblem::new(prob, sigma, z_tilde)?.eval(x).grad)
}

/// `V(H)` with `V` the generalized Jacobian of `∇φ` at `X`.
pub fn jacobian_matvec(prob: &ClusterProblem<'_>, sigma: f64, z_tilde: &Mat, x: &Mat, h: &Mat) -> Result<Mat> {
    prob.check_x(x)?;
    prob.check_x(h)?;
    let sub = Subproblem::new(prob, sigma, z_tilde)?;
    let at = sub.eval(x);
    let jac = Jacobian::new(&sub, &at);
    let mut out = Mat::zeros(h.rows(), h.cols());
    jac.apply(h, &mut out);
    Ok(out)
}
