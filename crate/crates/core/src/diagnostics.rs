//! Empirical checks of the growth, variance and decrement assumptions, and
//! rate fitting for error sequences.

use std::ops::Range;

use itertools::Itertools;
use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, dot, norm};
use crate::losses::{dense_hessian, loss_gradient, sample_gradient, LossKind};
use crate::sampling::{Batch, BatchSampler, SsnRng};
use crate::solvers::{SelfConcordantConstants, StepConstants};

/// Probes with a full gradient at or below this norm are skipped.
pub const STATIONARY_TOL: f64 = 1e-12;

/// Largest `n` for which batch enumeration is allowed.
pub const MAX_ENUMERATION_N: usize = 12;

/// Exact strong-growth ratio `mean_i |grad f_i|^2 / |grad f|^2`, maximized
/// over the probe points.
pub fn estimate_sgc_rho(loss: LossKind, data: &Dataset, probes: &[Vec<f64>]) -> Result<f64> {
    let full = Batch::full(data.n());
    let mut rho: Option<f64> = None;
    for (p, w) in probes.iter().enumerate() {
        let ratio = sgc_ratio(loss, data, &full, w)?;
        match ratio {
            Some(r) => rho = Some(rho.map_or(r, |cur| cur.max(r))),
            None => warn!("probe {p} is stationary, skipped"),
        }
    }
    rho.ok_or_else(|| invalid("every probe point is stationary"))
}

fn sgc_ratio(loss: LossKind, data: &Dataset, full: &Batch, w: &[f64]) -> Result<Option<f64>> {
    if w.len() != data.d() {
        return Err(Error::Dimension {
            expected: data.d(),
            got: w.len(),
        });
    }
    let g = loss_gradient(loss, data, full, w)?;
    let g2 = dot(&g, &g);
    if g2.sqrt() <= STATIONARY_TOL {
        return Ok(None);
    }
    let n = data.n();
    let mean_sq = (0..n)
        .map(|i| {
            let gi = sample_gradient(loss, data, i, w);
            dot(&gi, &gi)
        })
        .sum::<f64>()
        / n as f64;
    Ok(Some(mean_sq / g2))
}

/// Both sides of the minibatch variance identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceCheck {
    /// `E |y_B - ybar|^2` by enumeration over every batch of size `b`.
    pub lhs: f64,
    /// `(n - b) / (n b (n - 1)) * sum_i |y_i - ybar|^2`.
    pub rhs: f64,
}

fn check_vectors(ys: &[Vec<f64>], b: usize) -> Result<(usize, usize)> {
    let n = ys.len();
    if n == 0 {
        return Err(invalid("no vectors"));
    }
    if n > MAX_ENUMERATION_N {
        return Err(invalid(format!(
            "enumeration needs n <= {MAX_ENUMERATION_N}, got {n}"
        )));
    }
    if b == 0 || b > n {
        return Err(invalid(format!("batch size {b} outside [1, {n}]")));
    }
    let d = ys[0].len();
    for y in ys {
        if y.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: y.len(),
            });
        }
        linalg::ensure_finite(y, "vector")?;
    }
    Ok((n, d))
}

fn mean_vector(ys: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for y in ys {
        linalg::axpy(1.0, y, &mut m);
    }
    linalg::scale(1.0 / ys.len() as f64, &mut m);
    m
}

/// Mean squared batch error over all `C(n, b)` batches.
fn enumerate_batch_error(ys: &[Vec<f64>], b: usize, ybar: &[f64]) -> f64 {
    let d = ybar.len();
    let mut total = 0.0;
    let mut count = 0usize;
    let mut yb = vec![0.0; d];
    for batch in (0..ys.len()).combinations(b) {
        yb.iter_mut().for_each(|v| *v = 0.0);
        for &i in &batch {
            linalg::axpy(1.0, &ys[i], &mut yb);
        }
        linalg::scale(1.0 / b as f64, &mut yb);
        let e = linalg::sub(&yb, ybar);
        total += dot(&e, &e);
        count += 1;
    }
    total / count as f64
}

pub fn variance_identity_check(ys: &[Vec<f64>], b: usize) -> Result<VarianceCheck> {
    let (n, d) = check_vectors(ys, b)?;
    let ybar = mean_vector(ys, d);
    let lhs = enumerate_batch_error(ys, b, &ybar);
    let spread: f64 = ys
        .iter()
        .map(|y| {
            let e = linalg::sub(y, &ybar);
            dot(&e, &e)
        })
        .sum();
    let rhs = if n == 1 {
        0.0
    } else {
        (n - b) as f64 / (n as f64 * b as f64 * (n - 1) as f64) * spread
    };
    Ok(VarianceCheck { lhs, rhs })
}

/// Growth bound `(n - b)(c - 1) / ((n - 1) b) |ybar|^2`, valid whenever
/// `mean_i |y_i|^2 <= c |ybar|^2`.
pub fn growth_variance_bound(n: usize, b: usize, c: f64, ybar_sq: f64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    (n - b) as f64 * (c - 1.0) / ((n - 1) as f64 * b as f64) * ybar_sq
}

/// Enumerated error against the quartic growth bound
/// `(n - b) c / ((n - 1) b) |ybar|^4`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuarticGrowthCheck {
    pub lhs: f64,
    pub bound: f64,
    /// Whether `mean_i |y_i|^2 <= c |ybar|^4` holds, i.e. whether the bound applies.
    pub premise: bool,
}

pub fn quartic_growth_check(ys: &[Vec<f64>], b: usize, c: f64) -> Result<QuarticGrowthCheck> {
    let (n, d) = check_vectors(ys, b)?;
    let ybar = mean_vector(ys, d);
    let ybar_sq = dot(&ybar, &ybar);
    let mean_sq = ys.iter().map(|y| dot(y, y)).sum::<f64>() / n as f64;
    let lhs = enumerate_batch_error(ys, b, &ybar);
    let bound = if n == 1 {
        0.0
    } else {
        (n - b) as f64 * c / ((n - 1) as f64 * b as f64) * ybar_sq * ybar_sq
    };
    Ok(QuarticGrowthCheck {
        lhs,
        bound,
        premise: mean_sq <= c * ybar_sq * ybar_sq,
    })
}

/// Smallest and largest eigenvalue of `hess f_S(w) + tau I`.
pub fn hessian_eigen_bounds(
    loss: LossKind,
    data: &Dataset,
    batch: &Batch,
    w: &[f64],
    tau: f64,
) -> Result<(f64, f64)> {
    let h = dense_hessian(loss, data, batch, w, tau)?;
    let ev = linalg::sym_eigenvalues(&h);
    Ok((ev[0], ev[ev.len() - 1]))
}

/// Single-sample decrements against the full regularized Hessian, and the
/// bound implied by the growth constant and the Hessian conditioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecrementCheck {
    /// `mean_i g_i^T [H + tau I]^{-1} g_i`.
    pub lhs: f64,
    /// `rho * (lambda_max / lambda_min) * lambda^2`.
    pub rhs_bound: f64,
    /// Squared full decrement `g^T [H + tau I]^{-1} g`.
    pub decrement_sq: f64,
    pub rho: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl DecrementCheck {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs_bound * (1.0 + 1e-12)
    }
}

pub fn newton_decrement_sgc_check(
    loss: LossKind,
    data: &Dataset,
    w: &[f64],
    tau: f64,
) -> Result<DecrementCheck> {
    let full = Batch::full(data.n());
    let rho = sgc_ratio(loss, data, &full, w)?
        .ok_or_else(|| invalid("decrement check needs a non-stationary point"))?;
    let h = dense_hessian(loss, data, &full, w, tau)?;
    let ev = linalg::sym_eigenvalues(&h);
    let (lambda_min, lambda_max) = (ev[0], ev[ev.len() - 1]);
    if !(lambda_min > 0.0) {
        return Err(invalid("regularized Hessian is not positive definite"));
    }
    let chol = h
        .cholesky()
        .ok_or_else(|| invalid("regularized Hessian is not positive definite"))?;
    let quad = |v: &[f64]| {
        let x = chol.solve(&nalgebra::DVector::from_column_slice(v));
        dot(v, x.as_slice())
    };
    let g = loss_gradient(loss, data, &full, w)?;
    let decrement_sq = quad(&g);
    let n = data.n();
    let lhs = (0..n)
        .map(|i| quad(&sample_gradient(loss, data, i, w)))
        .sum::<f64>()
        / n as f64;
    Ok(DecrementCheck {
        lhs,
        rhs_bound: rho * lambda_max / lambda_min * decrement_sq,
        decrement_sq,
        rho,
        lambda_min,
        lambda_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    QLinearFactor,
    OrderQ,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate {
    pub kind: RateKind,
    pub value: f64,
    pub window: Range<usize>,
}

/// Fits a rate to `errors[window]`. The Q-linear factor is the geometric mean
/// of successive ratios; the order is the mean of `ln e_{k+1} / ln e_k`.
pub fn convergence_order(errors: &[f64], window: Range<usize>, kind: RateKind) -> Result<RateEstimate> {
    if window.end > errors.len() || window.len() < 3 {
        return Err(invalid(format!(
            "window {window:?} must hold at least 3 of {} errors",
            errors.len()
        )));
    }
    let e = &errors[window.clone()];
    if let Some(bad) = e.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(invalid(format!("errors must be positive and finite, got {bad}")));
    }
    let pairs = e.len() - 1;
    let value = match kind {
        RateKind::QLinearFactor => {
            let log_sum: f64 = e.windows(2).map(|p| (p[1] / p[0]).ln()).sum();
            (log_sum / pairs as f64).exp()
        }
        RateKind::OrderQ => {
            if let Some(big) = e[..pairs].iter().find(|v| **v >= 1.0) {
                return Err(invalid(format!("order fitting needs errors below 1, got {big}")));
            }
            e.windows(2).map(|p| p[1].ln() / p[0].ln()).sum::<f64>() / pairs as f64
        }
    };
    Ok(RateEstimate { kind, value, window })
}

/// Window covering the last `len` errors above `10 * eps * scale`, where
/// `scale` is the magnitude of the reference point.
pub fn tail_window(errors: &[f64], len: usize, scale: f64) -> Option<Range<usize>> {
    let floor = 10.0 * f64::EPSILON * scale.max(1.0);
    let end = errors.iter().position(|e| *e <= floor).unwrap_or(errors.len());
    (end >= len).then(|| end - len..end)
}

/// Least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid("line fit needs two or more paired points"));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("line fit needs distinct x values"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Curvature constants measured at the probe points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureEstimate {
    /// Smallest eigenvalue over sampled batch Hessians.
    pub mu_s: f64,
    /// Largest eigenvalue over sampled batch Hessians.
    pub l_s: f64,
    /// Mean smallest eigenvalue of the sampled batch Hessians.
    pub mu_bar: f64,
    /// Largest eigenvalue over single-sample Hessians.
    pub l_tilde: f64,
    /// Smallest eigenvalue of the full Hessian.
    pub mu_full: f64,
    /// Largest eigenvalue of the full Hessian.
    pub l_full: f64,
    pub rho: f64,
}

/// Measures Hessian spectra (without regularization) at each probe over
/// `batches` random batches of size `b`, plus every single sample.
pub fn estimate_curvature(
    loss: LossKind,
    data: &Dataset,
    probes: &[Vec<f64>],
    b: usize,
    batches: usize,
    rng: &mut SsnRng,
) -> Result<CurvatureEstimate> {
    if probes.is_empty() || batches == 0 {
        return Err(invalid("curvature estimate needs probes and batches"));
    }
    let n = data.n();
    let full = Batch::full(n);
    let mut sampler = BatchSampler::new(n);
    let mut est = CurvatureEstimate {
        mu_s: f64::INFINITY,
        l_s: 0.0,
        mu_bar: 0.0,
        l_tilde: 0.0,
        mu_full: f64::INFINITY,
        l_full: 0.0,
        rho: estimate_sgc_rho(loss, data, probes)?,
    };
    let mut mu_count = 0usize;
    for w in probes {
        let (lo, hi) = hessian_eigen_bounds(loss, data, &full, w, 0.0)?;
        est.mu_full = est.mu_full.min(lo);
        est.l_full = est.l_full.max(hi);
        for _ in 0..batches {
            let batch = sampler.draw(b, rng)?;
            let (lo, hi) = hessian_eigen_bounds(loss, data, &batch, w, 0.0)?;
            est.mu_s = est.mu_s.min(lo);
            est.l_s = est.l_s.max(hi);
            est.mu_bar += lo;
            mu_count += 1;
        }
        // a rank-one Hessian has its only nonzero eigenvalue at l'' |x|^2
        for i in 0..n {
            let row = data.row(i);
            let z = data.label(i) * row.dot(w);
            est.l_tilde = est.l_tilde.max(loss.curvature(z) * row.squared_norm());
        }
    }
    est.mu_bar /= mu_count as f64;
    let clip = |v: f64| v.max(0.0);
    est.mu_s = clip(est.mu_s);
    est.mu_bar = clip(est.mu_bar);
    est.mu_full = clip(est.mu_full);
    Ok(est)
}

impl CurvatureEstimate {
    pub fn step_constants(&self, tau: f64) -> StepConstants {
        StepConstants {
            mu_s: self.mu_s,
            l_s: self.l_s.max(self.mu_s),
            mu_bar: self.mu_bar,
            l_tilde: self.l_tilde.max(self.l_full),
            l: self.l_full.max(f64::MIN_POSITIVE),
            rho: self.rho.max(1.0),
            tau,
        }
    }

    /// Constants for the damped update with `mu~` and `L~` taken from the
    /// full Hessian and distance bound `d_bound`.
    pub fn self_concordant(&self, tau: f64, d_bound: f64) -> SelfConcordantConstants {
        SelfConcordantConstants::derive(
            self.mu_full,
            self.l_full,
            self.l_full,
            d_bound,
            tau,
            self.rho.max(1.0),
        )
    }
}

/// `count` points with i.i.d. normal coordinates of standard deviation `scale`.
pub fn random_probes(d: usize, count: usize, scale: f64, rng: &mut SsnRng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            (0..d)
                .map(|_| scale * rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect()
        })
        .collect()
}

/// Decrement `g^T [H_S + tau I]^{-1} g` by dense Cholesky, for cross-checking
/// the CG-based value.
pub fn dense_decrement_sq(
    loss: LossKind,
    data: &Dataset,
    batch: &Batch,
    w: &[f64],
    tau: f64,
    g: &[f64],
) -> Result<f64> {
    let h = dense_hessian(loss, data, batch, w, tau)?;
    let x = linalg::spd_solve(&h, g)?;
    Ok(dot(g, &x))
}

/// Norm of the difference, relative to `|reference|` (absolute when the
/// reference is zero).
pub fn relative_error(value: &[f64], reference: &[f64]) -> f64 {
    let diff = norm(&linalg::sub(value, reference));
    let scale = norm(reference);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_margin_dataset, MarginSpec};
    use crate::sampling::rng_from_seed;
    use proptest::prelude::*;

    fn random_vectors(n: usize, d: usize, rng: &mut SsnRng) -> Vec<Vec<f64>> {
        random_probes(d, n, 1.0, rng)
    }

    #[test]
    fn single_sample_rho_is_one() {
        let data = Dataset::dense(3, vec![0.5, -1.0, 2.0], vec![1.0]).unwrap();
        let rho = estimate_sgc_rho(LossKind::Logistic, &data, &[vec![0.1, 0.2, 0.3]]).unwrap();
        assert_eq!(rho, 1.0);
    }

    #[test]
    fn duplicated_samples_rho_is_one() {
        let row = [0.3, -0.7];
        let data = Dataset::dense(2, row.repeat(5), vec![-1.0; 5]).unwrap();
        let rho = estimate_sgc_rho(LossKind::SquaredHinge, &data, &[vec![0.2, 0.1]]).unwrap();
        assert!((rho - 1.0).abs() < 1e-14, "{rho}");
    }

    #[test]
    fn stationary_probes_are_skipped() {
        let data = Dataset::dense(1, vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        // w = 2 leaves every hinge inactive
        assert!(estimate_sgc_rho(LossKind::SquaredHinge, &data, &[vec![2.0]]).is_err());
        let rho =
            estimate_sgc_rho(LossKind::SquaredHinge, &data, &[vec![2.0], vec![0.0]]).unwrap();
        assert_eq!(rho, 1.0);
    }

    #[test]
    fn separable_rho_is_finite_and_at_least_one() {
        let (data, _) = generate_margin_dataset(&MarginSpec {
            n: 50,
            d: 5,
            margin: 0.1,
            seed: 11,
        })
        .unwrap();
        let mut rng = rng_from_seed(1);
        let probes = random_probes(5, 20, 1.0, &mut rng);
        // independent oracle: per probe ratio from an explicit loop
        let mut oracle: f64 = 0.0;
        for w in &probes {
            let mut g = vec![0.0; 5];
            let mut sq = 0.0;
            for i in 0..50 {
                let x = data.row(i).to_dense(5);
                let y = data.label(i);
                let z = y * dot(&x, w);
                let c = if z < 1.0 { -2.0 * (1.0 - z) * y } else { 0.0 };
                let gi: Vec<f64> = x.iter().map(|v| c * v).collect();
                sq += dot(&gi, &gi);
                linalg::axpy(1.0 / 50.0, &gi, &mut g);
            }
            oracle = oracle.max(sq / 50.0 / dot(&g, &g));
        }
        let rho = estimate_sgc_rho(LossKind::SquaredHinge, &data, &probes).unwrap();
        assert!(rho >= 1.0 && rho.is_finite());
        assert!((rho - oracle).abs() <= 1e-10 * oracle);
    }

    #[test]
    fn rho_invariant_to_feature_scaling_when_all_active() {
        let (data, _) = generate_margin_dataset(&MarginSpec {
            n: 20,
            d: 3,
            margin: 0.1,
            seed: 2,
        })
        .unwrap();
        let scaled = Dataset::dense(
            3,
            (0..20).flat_map(|i| data.row(i).to_dense(3)).map(|v| 3.0 * v).collect(),
            data.labels().to_vec(),
        )
        .unwrap();
        // at w = 0 every margin is 0 < 1, so all hinges are active
        let w = vec![0.0; 3];
        let a = estimate_sgc_rho(LossKind::SquaredHinge, &data, std::slice::from_ref(&w)).unwrap();
        let b = estimate_sgc_rho(LossKind::SquaredHinge, &scaled, &[w]).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn variance_full_batch_is_zero() {
        let mut rng = rng_from_seed(3);
        let ys = random_vectors(5, 2, &mut rng);
        let c = variance_identity_check(&ys, 5).unwrap();
        assert!(c.lhs.abs() < 1e-28);
        assert_eq!(c.rhs, 0.0);
    }

    #[test]
    fn variance_two_point_case() {
        let ys = vec![vec![1.0, 0.0], vec![-1.0, 0.0]];
        let c = variance_identity_check(&ys, 1).unwrap();
        assert_eq!(c.lhs, 1.0);
        assert_eq!(c.rhs, 1.0);
    }

    #[test]
    fn variance_random_six_choose_two() {
        let mut rng = rng_from_seed(4);
        let ys = random_vectors(6, 3, &mut rng);
        let c = variance_identity_check(&ys, 2).unwrap();
        assert!((c.lhs - c.rhs).abs() < 1e-12);
    }

    #[test]
    fn variance_rejects_bad_batch() {
        let ys = vec![vec![1.0]; 3];
        assert!(variance_identity_check(&ys, 4).is_err());
        assert!(variance_identity_check(&ys, 0).is_err());
        assert!(variance_identity_check(&vec![vec![1.0]; 13], 2).is_err());
    }

    proptest! {
        #[test]
        fn variance_identity_exact(n in 1usize..=8, d in 1usize..=4, seed in 0u64..1000, bf in 0.0f64..1.0) {
            let b = 1 + ((n as f64 - 1.0) * bf).round() as usize;
            let mut rng = rng_from_seed(seed);
            let ys = random_vectors(n, d, &mut rng);
            let c = variance_identity_check(&ys, b).unwrap();
            prop_assert!((c.lhs - c.rhs).abs() < 1e-12);
        }

        #[test]
        fn growth_bounds_hold(n in 2usize..=8, d in 1usize..=3, seed in 0u64..1000, bf in 0.0f64..1.0) {
            let b = 1 + ((n as f64 - 1.0) * bf).round() as usize;
            let mut rng = rng_from_seed(seed);
            let mut ys = random_vectors(n, d, &mut rng);
            // shift so the mean is away from zero
            for y in &mut ys { y[0] += 2.0; }
            let ybar = mean_vector(&ys, d);
            let ybar_sq = dot(&ybar, &ybar);
            let mean_sq = ys.iter().map(|y| dot(y, y)).sum::<f64>() / n as f64;
            let c = mean_sq / ybar_sq;
            let check = variance_identity_check(&ys, b).unwrap();
            let bound = growth_variance_bound(n, b, c, ybar_sq);
            prop_assert!(check.lhs <= bound * (1.0 + 1e-10) + 1e-14);

            let c4 = mean_sq / (ybar_sq * ybar_sq);
            let q = quartic_growth_check(&ys, b, c4).unwrap();
            prop_assert!(q.premise || (mean_sq - c4 * ybar_sq * ybar_sq).abs() < 1e-12);
            prop_assert!(q.lhs <= q.bound * (1.0 + 1e-10) + 1e-14);
        }

        #[test]
        fn q_linear_scale_invariant(a in 0.01f64..100.0, r in 0.05f64..0.95) {
            let e: Vec<f64> = (0..8).map(|k| r.powi(k)).collect();
            let scaled: Vec<f64> = e.iter().map(|v| a * v).collect();
            let x = convergence_order(&e, 0..8, RateKind::QLinearFactor).unwrap();
            let y = convergence_order(&scaled, 0..8, RateKind::QLinearFactor).unwrap();
            prop_assert!((x.value - y.value).abs() < 1e-12);
            prop_assert!((x.value - r).abs() < 1e-12);
        }
    }

    #[test]
    fn decrement_single_sample_equals_full() {
        let data = Dataset::dense(2, vec![0.4, -0.9], vec![1.0]).unwrap();
        let c = newton_decrement_sgc_check(LossKind::Logistic, &data, &[0.2, 0.3], 0.1).unwrap();
        assert!((c.lhs - c.decrement_sq).abs() <= 1e-14 * c.lhs);
        assert!(c.holds());
    }

    #[test]
    fn decrement_duplicates_equal_full() {
        let data = Dataset::dense(2, [0.4, -0.9].repeat(4), vec![-1.0; 4]).unwrap();
        let c = newton_decrement_sgc_check(LossKind::Logistic, &data, &[0.2, 0.3], 0.1).unwrap();
        assert!((c.lhs - c.decrement_sq).abs() <= 1e-12 * c.lhs);
    }

    #[test]
    fn decrement_bound_logistic() {
        let (data, _) = generate_margin_dataset(&MarginSpec {
            n: 30,
            d: 5,
            margin: 0.1,
            seed: 5,
        })
        .unwrap();
        let mut rng = rng_from_seed(9);
        for w in random_probes(5, 5, 1.0, &mut rng) {
            let c = newton_decrement_sgc_check(LossKind::Logistic, &data, &w, 0.1).unwrap();
            assert!(c.holds(), "{c:?}");
        }
    }

    #[test]
    fn order_examples() {
        let quad: Vec<f64> = (0..6).map(|k| 0.5f64.powi(1 << k)).collect();
        let r = convergence_order(&quad, 1..6, RateKind::OrderQ).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);

        let r = convergence_order(&[0.3, 0.09, 0.0081], 0..3, RateKind::OrderQ).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9);

        let geo: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k)).collect();
        let f = convergence_order(&geo, 4..12, RateKind::QLinearFactor).unwrap();
        assert!((f.value - 0.5).abs() < 1e-14);
        // ln e_{k+1} / ln e_k = (k + 1) / k, so the order approaches 1 slowly
        let o = convergence_order(&geo, 10..20, RateKind::OrderQ).unwrap();
        assert!((0.9..=1.1).contains(&o.value), "{}", o.value);
    }

    #[test]
    fn order_rejects_bad_input() {
        assert!(convergence_order(&[0.5, 0.25], 0..2, RateKind::OrderQ).is_err());
        assert!(convergence_order(&[0.5, 0.0, 0.1], 0..3, RateKind::QLinearFactor).is_err());
        assert!(convergence_order(&[2.0, 0.5, 0.1], 0..3, RateKind::OrderQ).is_err());
        assert!(convergence_order(&[2.0, 0.5, 0.1], 0..3, RateKind::QLinearFactor).is_ok());
    }

    #[test]
    fn tail_window_stops_at_floor() {
        let e = [1e-1, 1e-2, 1e-4, 1e-8, 1e-16, 0.0];
        assert_eq!(tail_window(&e, 4, 1.0), Some(0..4));
        assert_eq!(tail_window(&e, 5, 1.0), None);
    }

    #[test]
    fn line_fit_exact() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, -1.0, -3.0, -5.0];
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14);
        assert!((f.intercept - 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn curvature_estimate_is_ordered() {
        let (data, _) = generate_margin_dataset(&MarginSpec {
            n: 40,
            d: 4,
            margin: 0.1,
            seed: 6,
        })
        .unwrap();
        let mut rng = rng_from_seed(7);
        let probes = random_probes(4, 3, 0.5, &mut rng);
        let est = estimate_curvature(LossKind::Logistic, &data, &probes, 10, 4, &mut rng).unwrap();
        assert!(est.mu_s <= est.mu_bar && est.mu_bar <= est.l_s);
        assert!(est.mu_full <= est.l_full);
        assert!(est.l_full <= est.l_tilde + 1e-12);
        est.step_constants(0.1).validate().unwrap();
    }
}
