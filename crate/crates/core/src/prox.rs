//! Proximal maps of `t‖·‖_p` for `p ∈ {1, 2, ∞}` and projections onto the
//! dual-norm balls.
//!
//! `Prox_{tp}(x) = argmin_u t‖u‖_p + ½‖u − x‖²`. The conjugate of a norm is
//! the indicator of the unit dual-norm ball, so by the Moreau identity
//! `x − Prox_{tp}(x)` is the projection of `x` onto `{‖y‖_q ≤ t}`.

use serde::{Deserialize, Serialize};

use crate::matrix::{norm2, Mat};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormKind {
    #[serde(rename = "1")]
    L1,
    #[serde(rename = "2")]
    L2,
    #[serde(rename = "inf")]
    Linf,
}

impl NormKind {
    /// The conjugate index `q` with `1/p + 1/q = 1`.
    pub fn conjugate(self) -> NormKind {
        match self {
            NormKind::L1 => NormKind::Linf,
            NormKind::L2 => NormKind::L2,
            NormKind::Linf => NormKind::L1,
        }
    }

    pub fn norm(self, x: &[f64]) -> f64 {
        match self {
            NormKind::L1 => x.iter().map(|v| v.abs()).sum(),
            NormKind::L2 => norm2(x),
            NormKind::Linf => x.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }

    /// Norm of the conjugate index.
    pub fn dual_norm(self, x: &[f64]) -> f64 {
        self.conjugate().norm(x)
    }

    pub fn label(self) -> &'static str {
        match self {
            NormKind::L1 => "1",
            NormKind::L2 => "2",
            NormKind::Linf => "inf",
        }
    }
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "l1" | "one" => Ok(NormKind::L1),
            "2" | "l2" | "two" => Ok(NormKind::L2),
            "inf" | "linf" | "infinity" => Ok(NormKind::Linf),
            other => Err(Error::InvalidArgument(format!("unknown norm {other:?}; expected 1, 2 or inf"))),
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

fn check_positive(name: &str, t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {t}")));
    }
    Ok(())
}

/// `Prox_{t‖·‖_p}(x)`.
pub fn prox_norm(kind: NormKind, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_positive("t", t)?;
    let mut out = x.to_vec();
    prox_in_place(kind, t, &mut out);
    Ok(out)
}

/// `x − Prox_{t‖·‖_p}(x)`, i.e. the projection onto `{‖y‖_q ≤ t}`.
pub fn prox_conjugate(kind: NormKind, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_positive("t", t)?;
    let mut out = x.to_vec();
    project_dual_ball_in_place(kind, t, &mut out);
    Ok(out)
}

/// Euclidean projection onto `{y : ‖y‖₁ ≤ radius}`.
pub fn project_l1_ball(radius: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_positive("radius", radius)?;
    let mut out = x.to_vec();
    project_l1_in_place(radius, &mut out);
    Ok(out)
}

/// Column-wise prox: column `l` of the result is `Prox_{t_l‖·‖_p}(U^l)`.
pub fn prox_block(kind: NormKind, u: &Mat, thresholds: &[f64]) -> Result<Mat> {
    if thresholds.len() != u.cols() {
        return Err(Error::DimensionMismatch(format!("{} thresholds for {} columns", thresholds.len(), u.cols())));
    }
    if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("thresholds must be positive, got {t}")));
    }
    let mut out = u.clone();
    prox_block_in_place(kind, &mut out, thresholds);
    Ok(out)
}

pub(crate) fn prox_block_in_place(kind: NormKind, u: &mut Mat, thresholds: &[f64]) {
    for (l, &t) in thresholds.iter().enumerate() {
        prox_in_place(kind, t, u.col_mut(l));
    }
}

/// Table-1 formulas. `t ≥ 0`; `t = 0` is the identity.
pub(crate) fn prox_in_place(kind: NormKind, t: f64, x: &mut [f64]) {
    match kind {
        NormKind::L1 => {
            for v in x.iter_mut() {
                let a = v.abs();
                *v = if a > t { *v * (1.0 - t / a) } else { 0.0 };
            }
        }
        NormKind::L2 => {
            let nrm = norm2(x);
            if nrm <= t {
                x.iter_mut().for_each(|v| *v = 0.0);
            } else {
                let s = 1.0 - t / nrm;
                x.iter_mut().for_each(|v| *v *= s);
            }
        }
        NormKind::Linf => {
            let mut proj = x.to_vec();
            project_l1_in_place(t, &mut proj);
            for (v, p) in x.iter_mut().zip(&proj) {
                *v -= p;
            }
        }
    }
}

/// Projection onto `{‖y‖_q ≤ t}` with `q` conjugate to `kind`.
pub(crate) fn project_dual_ball_in_place(kind: NormKind, t: f64, x: &mut [f64]) {
    match kind {
        NormKind::L1 => x.iter_mut().for_each(|v| *v = v.clamp(-t, t)),
        NormKind::L2 => {
            let nrm = norm2(x);
            if nrm > t {
                let s = t / nrm;
                x.iter_mut().for_each(|v| *v *= s);
            }
        }
        NormKind::Linf => project_l1_in_place(t, x),
    }
}

/// Sort-based l1-ball projection: find θ with `Σ max(|x_i| − θ, 0) = radius`.
pub(crate) fn project_l1_in_place(radius: f64, x: &mut [f64]) {
    let l1: f64 = x.iter().map(|v| v.abs()).sum();
    if l1 <= radius {
        return;
    }
    if radius <= 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - radius) / (k + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    for v in x.iter_mut() {
        let a = (v.abs() - theta).max(0.0);
        *v = a.copysign(*v);
    }
}
