//! Truncated conjugate gradient on an implicit symmetric positive definite
//! operator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::losses::BatchHessian;

/// A symmetric linear map applied matrix-free.
pub trait HessianOperator {
    fn dim(&self) -> usize;

    /// `out = A v`; `out` has length `dim()` and may hold garbage on entry.
    fn apply_into(&self, v: &[f64], out: &mut [f64]);
}

impl HessianOperator for BatchHessian<'_> {
    fn dim(&self) -> usize {
        BatchHessian::dim(self)
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        BatchHessian::apply_into(self, v, out)
    }
}

impl HessianOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            *o = self.row(r).iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }
}

/// Adapts a closure `v -> A v`.
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64])> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64], &mut [f64])> HessianOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        (self.f)(v, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CgConfig {
    /// Relative residual target `|b - A x| / |b|`.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Iteration cap; `None` means `min(d, 100)`.
    #[serde(default)]
    pub max_iter: Option<usize>,
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for CgConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: None,
        }
    }
}

impl CgConfig {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter: Some(max_iter),
        }
    }

    pub fn max_iter_for(&self, d: usize) -> usize {
        self.max_iter.unwrap_or_else(|| d.min(100)).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub direction: Vec<f64>,
    pub iterations: usize,
    /// `|b - A x| / |b|`, recomputed from the returned direction.
    pub relative_residual: f64,
}

pub fn truncated_cg<A: HessianOperator + ?Sized>(
    op: &A,
    rhs: &[f64],
    cfg: &CgConfig,
) -> Result<CgResult> {
    truncated_cg_observed(op, rhs, cfg, |_, _| {})
}

/// CG from a zero initial guess. `observe(k, x_k)` runs after every
/// iteration.
///
/// Stops once the recursive residual meets `cfg.tol` or after the
/// iteration cap. A non-positive curvature `p.Ap` ends the solve early;
/// if that happens on the first iteration the right-hand side itself is
/// returned so the result stays a descent direction.
pub fn truncated_cg_observed<A, F>(
    op: &A,
    rhs: &[f64],
    cfg: &CgConfig,
    mut observe: F,
) -> Result<CgResult>
where
    A: HessianOperator + ?Sized,
    F: FnMut(usize, &[f64]),
{
    let d = op.dim();
    if rhs.len() != d {
        return Err(Error::Dimension {
            expected: d,
            got: rhs.len(),
        });
    }
    if !(cfg.tol >= 0.0) {
        return Err(invalid("CG tolerance must be nonnegative"));
    }
    crate::linalg::ensure_finite(rhs, "CG right-hand side")?;
    let b_norm = norm(rhs);
    if b_norm == 0.0 {
        return Ok(CgResult {
            direction: vec![0.0; d],
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let max_iter = cfg.max_iter_for(d);
    let target = cfg.tol * b_norm;

    let mut x = vec![0.0; d];
    let mut r = rhs.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; d];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;

    while iterations < max_iter {
        op.apply_into(&p, &mut ap);
        let curv = dot(&p, &ap);
        if !curv.is_finite() {
            return Err(Error::NonFinite("CG curvature"));
        }
        if curv <= 0.0 {
            if iterations == 0 {
                x.copy_from_slice(rhs);
            }
            break;
        }
        let alpha = rr / curv;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        iterations += 1;
        observe(iterations, &x);
        let rr_next = dot(&r, &r);
        if !rr_next.is_finite() {
            return Err(Error::NonFinite("CG residual"));
        }
        if rr_next.sqrt() <= target || rr_next == 0.0 {
            break;
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }

    op.apply_into(&x, &mut ap);
    let resid: Vec<f64> = rhs.iter().zip(&ap).map(|(b, a)| b - a).collect();
    let relative_residual = norm(&resid) / b_norm;
    if !relative_residual.is_finite() {
        return Err(Error::NonFinite("CG solution"));
    }
    Ok(CgResult {
        direction: x,
        iterations,
        relative_residual,
    })
}
