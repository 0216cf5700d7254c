//! Per-sample margin losses `f_i(w) = l(y_i x_i . w)` for linear models.
//!
//! Every loss here is a generalized linear model, so
//! `grad f_i = l'(z_i) y_i x_i` and `hess f_i = l''(z_i) x_i x_i^T`. The
//! batch routines sum samples in batch order, which makes all results
//! reproducible bit-for-bit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sampling::Batch;

/// Largest dimension [`dense_hessian`] will assemble by default.
pub const DEFAULT_DENSE_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `ln(1 + exp(-z))`
    Logistic,
    /// `max(0, 1 - z)^2`
    SquaredHinge,
}

impl LossKind {
    /// `l(z)`
    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            LossKind::Logistic => {
                if z > 0.0 {
                    (-z).exp().ln_1p()
                } else {
                    -z + z.exp().ln_1p()
                }
            }
            LossKind::SquaredHinge => {
                let m = 1.0 - z;
                if m > 0.0 {
                    m * m
                } else {
                    0.0
                }
            }
        }
    }

    /// `l'(z)`
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            LossKind::Logistic => -sigmoid(-z),
            LossKind::SquaredHinge => {
                let m = 1.0 - z;
                if m > 0.0 {
                    -2.0 * m
                } else {
                    0.0
                }
            }
        }
    }

    /// `l''(z)`; for the squared hinge the kink at `z = 1` takes the
    /// inactive-side value 0.
    #[inline]
    pub fn curvature(self, z: f64) -> f64 {
        match self {
            LossKind::Logistic => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            LossKind::SquaredHinge => {
                if z < 1.0 {
                    2.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Upper bound on `l''`.
    pub fn max_curvature(self) -> f64 {
        match self {
            LossKind::Logistic => 0.25,
            LossKind::SquaredHinge => 2.0,
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_inputs(data: &Dataset, batch: &Batch, w: &[f64]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if w.len() != data.d() {
        return Err(Error::Dimension {
            expected: data.d(),
            got: w.len(),
        });
    }
    if let Some(&last) = batch.indices().last() {
        if last >= data.n() {
            return Err(Error::BatchIndex {
                index: last,
                n: data.n(),
            });
        }
    }
    linalg::ensure_finite(w, "weights")
}

/// Margins `z_i = y_i x_i . w` over the batch.
pub fn margins(data: &Dataset, batch: &Batch, w: &[f64]) -> Vec<f64> {
    batch
        .indices()
        .iter()
        .map(|&i| data.label(i) * data.row(i).dot(w))
        .collect()
}

/// `f_B(w) = (1/|B|) sum_{i in B} f_i(w)`
pub fn loss_value(loss: LossKind, data: &Dataset, batch: &Batch, w: &[f64]) -> Result<f64> {
    check_inputs(data, batch, w)?;
    let total: f64 = batch
        .indices()
        .iter()
        .map(|&i| loss.value(data.label(i) * data.row(i).dot(w)))
        .sum();
    Ok(total / batch.len() as f64)
}

/// Loss and gradient in one pass over the batch.
pub fn loss_and_gradient(
    loss: LossKind,
    data: &Dataset,
    batch: &Batch,
    w: &[f64],
) -> Result<(f64, Vec<f64>)> {
    check_inputs(data, batch, w)?;
    let inv = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; data.d()];
    let mut total = 0.0;
    for &i in batch.indices() {
        let row = data.row(i);
        let y = data.label(i);
        let z = y * row.dot(w);
        total += loss.value(z);
        let dz = loss.derivative(z);
        if dz != 0.0 {
            row.axpy_into(inv * dz * y, &mut grad);
        }
    }
    Ok((total * inv, grad))
}

/// `(1/|B|) sum_{i in B} grad f_i(w)`
pub fn loss_gradient(loss: LossKind, data: &Dataset, batch: &Batch, w: &[f64]) -> Result<Vec<f64>> {
    loss_and_gradient(loss, data, batch, w).map(|(_, g)| g)
}

/// Gradient of a single sample.
pub fn sample_gradient(loss: LossKind, data: &Dataset, i: usize, w: &[f64]) -> Vec<f64> {
    let row = data.row(i);
    let y = data.label(i);
    let mut g = vec![0.0; data.d()];
    row.axpy_into(loss.derivative(y * row.dot(w)) * y, &mut g);
    g
}

/// Subsampled Hessian `[hess f_S(w) + tau I]` frozen at a point.
///
/// The per-sample curvatures `l''(z_i)` are computed once, so repeated
/// products inside CG cost one pass over the batch rows each.
#[derive(Debug, Clone)]
pub struct BatchHessian<'a> {
    data: &'a Dataset,
    batch: &'a Batch,
    /// `l''(z_i) / |S|`, aligned with the batch.
    weights: Vec<f64>,
    tau: f64,
}

impl<'a> BatchHessian<'a> {
    pub fn new(
        loss: LossKind,
        data: &'a Dataset,
        batch: &'a Batch,
        w: &[f64],
        tau: f64,
    ) -> Result<Self> {
        check_inputs(data, batch, w)?;
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "regularization must be finite and nonnegative, got {tau}"
            )));
        }
        let inv = 1.0 / batch.len() as f64;
        let weights = batch
            .indices()
            .iter()
            .map(|&i| inv * loss.curvature(data.label(i) * data.row(i).dot(w)))
            .collect();
        Ok(Self {
            data,
            batch,
            weights,
            tau,
        })
    }

    pub fn dim(&self) -> usize {
        self.data.d()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `out = [hess f_S + tau I] v`
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().zip(v).for_each(|(o, vi)| *o = self.tau * vi);
        for (&i, &c) in self.batch.indices().iter().zip(&self.weights) {
            if c != 0.0 {
                let row = self.data.row(i);
                row.axpy_into(c * row.dot(v), out);
            }
        }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; v.len()];
        self.apply_into(v, &mut out);
        out
    }
}

/// `[hess f_S(w) + tau I] v`
pub fn hessian_vector_product(
    loss: LossKind,
    data: &Dataset,
    batch: &Batch,
    w: &[f64],
    tau: f64,
    v: &[f64],
) -> Result<Vec<f64>> {
    if v.len() != data.d() {
        return Err(Error::Dimension {
            expected: data.d(),
            got: v.len(),
        });
    }
    Ok(BatchHessian::new(loss, data, batch, w, tau)?.apply(v))
}

/// Explicit `d x d` matrix `hess f_S(w) + tau I`, for `d <= DEFAULT_DENSE_CAP`.
pub fn dense_hessian(
    loss: LossKind,
    data: &Dataset,
    batch: &Batch,
    w: &[f64],
    tau: f64,
) -> Result<DMatrix<f64>> {
    dense_hessian_capped(loss, data, batch, w, tau, DEFAULT_DENSE_CAP)
}

pub fn dense_hessian_capped(
    loss: LossKind,
    data: &Dataset,
    batch: &Batch,
    w: &[f64],
    tau: f64,
    cap: usize,
) -> Result<DMatrix<f64>> {
    let d = data.d();
    if d > cap {
        return Err(Error::DenseCap { d, cap });
    }
    let op = BatchHessian::new(loss, data, batch, w, tau)?;
    let mut h = DMatrix::<f64>::from_diagonal_element(d, d, tau);
    let mut x = vec![0.0; d];
    for (&i, &c) in batch.indices().iter().zip(&op.weights) {
        if c == 0.0 {
            continue;
        }
        x.iter_mut().for_each(|v| *v = 0.0);
        data.row(i).axpy_into(1.0, &mut x);
        for a in 0..d {
            let ca = c * x[a];
            if ca == 0.0 {
                continue;
            }
            for b in 0..d {
                h[(a, b)] += ca * x[b];
            }
        }
    }
    Ok(h)
}
