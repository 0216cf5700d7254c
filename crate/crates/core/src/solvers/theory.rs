//! Step sizes and constants prescribed by the convergence theory.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `omega(t) = t - ln(1 + t)`
pub fn omega(t: f64) -> f64 {
    t - t.ln_1p()
}

/// Constants for the adaptive step size of constant-batch R-SSN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConstants {
    /// Smallest eigenvalue of the subsampled Hessian.
    pub mu_s: f64,
    /// Largest eigenvalue of the subsampled Hessian.
    pub l_s: f64,
    /// Expected `mu_s` over batches.
    pub mu_bar: f64,
    /// Uniform bound on the subsampled Hessian eigenvalues.
    pub l_tilde: f64,
    /// Smoothness of the full objective.
    pub l: f64,
    /// Strong growth constant.
    pub rho: f64,
    pub tau: f64,
}

impl StepConstants {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mu_s, self.l_s, self.mu_bar, self.l_tilde, self.l, self.rho, self.tau]
            .iter()
            .all(|v| *v >= 0.0 && v.is_finite());
        if finite
            && self.mu_s + self.tau > 0.0
            && self.l > 0.0
            && self.mu_s <= self.l_s
            && self.l >= self.mu_bar
            && self.rho >= 1.0
        {
            Ok(())
        } else {
            Err(invalid(format!("invalid step-size constants {self:?}")))
        }
    }
}

/// Gradient-noise factor `(rho - 1)(n - b_g) / ((n - 1) b_g)`; zero for a
/// full batch or a single sample.
pub fn gradient_noise_factor(rho: f64, n: usize, b_g: usize) -> f64 {
    if n <= 1 || b_g >= n {
        return 0.0;
    }
    (rho - 1.0) * (n - b_g) as f64 / ((n - 1) as f64 * b_g as f64)
}

/// `(mu_s + tau)^2 / (L ((mu_s + tau) + (L_s + tau) c_g))`
pub fn adaptive_step_size(c: &StepConstants, n: usize, b_g: usize) -> f64 {
    let c_g = gradient_noise_factor(c.rho, n, b_g);
    let lo = c.mu_s + c.tau;
    let hi = c.l_s + c.tau;
    lo * lo / (c.l * (lo + hi * c_g))
}

/// Parameters of the decrement-damped update
/// `w - (c eta / (1 + eta lambda)) [H_S + tau I]^{-1} g_G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelfConcordantConstants {
    pub c: f64,
    pub eta: f64,
    pub mu_tilde: f64,
    pub l_tilde: f64,
    pub l: f64,
    /// Bound on `|w_k - w*|`.
    pub d_bound: f64,
    pub tau: f64,
    pub rho: f64,
}

impl SelfConcordantConstants {
    /// Derive `c = sqrt((mu~ + tau) / L)` (capped at 1) and the largest
    /// admissible `eta = c / (rho_nd (1 + L~ D / (mu~ + tau)))`, capped at 1,
    /// where `rho_nd = max(1, rho L / (mu~ + tau))`.
    pub fn derive(mu_tilde: f64, l_tilde: f64, l: f64, d_bound: f64, tau: f64, rho: f64) -> Self {
        let floor = mu_tilde + tau;
        let c = (floor / l).sqrt().min(1.0);
        let eta = Self::max_eta(c, mu_tilde, l_tilde, l, d_bound, tau, rho).min(1.0);
        Self {
            c,
            eta,
            mu_tilde,
            l_tilde,
            l,
            d_bound,
            tau,
            rho,
        }
    }

    fn max_eta(c: f64, mu: f64, lt: f64, l: f64, dd: f64, tau: f64, rho: f64) -> f64 {
        let floor = mu + tau;
        let rho_nd = (rho * l / floor).max(1.0);
        c / (rho_nd * (1.0 + lt * dd / floor))
    }

    /// `rho L / (mu~ + tau)`, floored at 1.
    pub fn rho_nd(&self) -> f64 {
        (self.rho * self.l / (self.mu_tilde + self.tau)).max(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c > 0.0
            && self.c <= 1.0
            && self.eta > 0.0
            && self.eta <= 1.0
            && self.mu_tilde >= 0.0
            && self.tau >= 0.0
            && self.mu_tilde + self.tau > 0.0
            && self.l > 0.0
            && self.l_tilde >= self.mu_tilde
            && self.d_bound >= 0.0
            && self.rho >= 1.0;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid self-concordant constants {self:?}")))
        }
    }

    /// Whether `eta` lies in the admissible interval for these estimates.
    pub fn eta_admissible(&self) -> bool {
        self.eta
            <= Self::max_eta(
                self.c,
                self.mu_tilde,
                self.l_tilde,
                self.l,
                self.d_bound,
                self.tau,
                self.rho,
            ) * (1.0 + 1e-12)
    }

    /// `c eta / (1 + eta lambda)`
    pub fn damping(&self, decrement: f64) -> f64 {
        self.c * self.eta / (1.0 + self.eta * decrement)
    }
}
