//! Backtracking Armijo line search on a minibatch objective.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineSearchConfig {
    /// Sufficient-decrease constant `c` in (0, 1).
    pub armijo_c: f64,
    /// Backtracking factor in (0, 1).
    pub backtrack_factor: f64,
    pub eta_init: f64,
    pub eta_min: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self {
            armijo_c: 0.1,
            backtrack_factor: 0.8,
            eta_init: 1.0,
            eta_min: 1e-8,
            max_backtracks: 50,
        }
    }
}

impl LineSearchConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.eta_init > 0.0
            && self.eta_min > 0.0
            && self.eta_min <= self.eta_init
            && self.max_backtracks >= 1;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid line search config {self:?}")))
        }
    }
}

/// How the trial step is chosen at the start of each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepReset {
    /// Always start from `eta_init`.
    Fixed,
    /// Start from `min(factor * previous_step, cap)`.
    Grow { factor: f64, cap: f64 },
}

impl StepReset {
    /// Warm start used for first-order methods.
    pub const SGD: StepReset = StepReset::Grow {
        factor: 2.0,
        cap: 10.0,
    };

    pub fn trial(&self, eta_init: f64, previous: Option<f64>) -> f64 {
        match (*self, previous) {
            (StepReset::Grow { factor, cap }, Some(prev)) => (factor * prev).min(cap),
            _ => eta_init,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub step: f64,
    /// Number of batch-loss evaluations performed.
    pub evals: usize,
    /// `false` when the search ran out of backtracks and fell back to `eta_min`.
    pub accepted: bool,
}

/// Finds the first `eta = eta_init * beta^j`, `j = 0..=max_backtracks`, with
/// `batch_loss(eta) <= f0 - c * eta * g_dot_dir`, falling back to `eta_min`.
///
/// `batch_loss(eta)` must evaluate the minibatch objective at `w - eta * dir`;
/// non-finite values count as a rejected trial.
pub fn stochastic_armijo<F>(
    mut batch_loss: F,
    f0: f64,
    g_dot_dir: f64,
    cfg: &LineSearchConfig,
) -> Result<LineSearchOutcome>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(g_dot_dir > 0.0) {
        return Err(invalid(format!(
            "line search needs a descent direction, got g.dir = {g_dot_dir}"
        )));
    }
    cfg.validate()?;
    let mut eta = cfg.eta_init;
    let mut evals = 0;
    for _ in 0..=cfg.max_backtracks {
        if eta < cfg.eta_min {
            break;
        }
        let f = batch_loss(eta)?;
        evals += 1;
        if f.is_finite() && f <= f0 - cfg.armijo_c * eta * g_dot_dir {
            return Ok(LineSearchOutcome {
                step: eta,
                evals,
                accepted: true,
            });
        }
        eta *= cfg.backtrack_factor;
    }
    Ok(LineSearchOutcome {
        step: cfg.eta_min,
        evals,
        accepted: false,
    })
}
