//! Regularized subsampled Newton.
//!
//! Each iteration solves `[hess f_S(w) + tau I] d = grad f_G(w)` with
//! truncated CG and moves `w <- w - eta d`. By default `S = G` (one shared
//! batch); configuring a separate Hessian schedule draws an independent `S`.

use serde::{Deserialize, Serialize};

use super::state::{Problem, SolverState, StepInfo};
use super::theory::{adaptive_step_size, SelfConcordantConstants, StepConstants};
use crate::cg::{truncated_cg, CgConfig};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm};
use crate::linesearch::{stochastic_armijo, LineSearchConfig};
use crate::losses::BatchHessian;
use crate::sampling::{Batch, BatchSchedule, RegularizationSchedule};

/// How the step length along the Newton direction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepRule {
    /// Armijo backtracking on the gradient batch, restarted from
    /// `eta_init` every iteration.
    LineSearch {
        #[serde(flatten)]
        config: LineSearchConfig,
    },
    Fixed {
        eta: f64,
    },
    /// Adaptive step from known problem constants.
    Adaptive {
        #[serde(flatten)]
        constants: StepConstants,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::LineSearch {
            config: LineSearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RssnConfig {
    pub grad_schedule: BatchSchedule,
    /// `Some` draws an independent Hessian batch with this schedule.
    pub hess_schedule: Option<BatchSchedule>,
    pub tau: RegularizationSchedule,
    pub cg: CgConfig,
    pub step: StepRule,
}

struct Batches {
    grad: Batch,
    hess: Option<Batch>,
}

fn draw_batches(
    state: &mut SolverState,
    grad_schedule: &BatchSchedule,
    hess_schedule: Option<&BatchSchedule>,
) -> Result<Batches> {
    let n = state.n;
    let b_g = grad_schedule.next_batch_size(state.k, state.grad_norm_estimate, n);
    let grad = state.draw(b_g)?;
    let hess = match hess_schedule {
        Some(s) => {
            let b_s = s.next_batch_size(state.k, state.grad_norm_estimate, n);
            Some(state.draw(b_s)?)
        }
        None => None,
    };
    state.b_g = b_g;
    state.b_s = hess.as_ref().map_or(b_g, Batch::len);
    state.samples_seen += b_g as u64 + hess.as_ref().map_or(0, |b| b.len() as u64);
    Ok(Batches { grad, hess })
}

fn apply_update(state: &mut SolverState, direction: &[f64], scale: f64) -> Result<()> {
    let mut next = state.w.clone();
    linalg::axpy(-scale, direction, &mut next);
    linalg::ensure_finite(&next, "iterate")?;
    state.w = next;
    Ok(())
}

/// One R-SSN iteration. Mutates `state` in place and reports what happened.
pub fn rssn_step(state: &mut SolverState, problem: &Problem<'_>, cfg: &RssnConfig) -> Result<StepInfo> {
    let batches = draw_batches(state, &cfg.grad_schedule, cfg.hess_schedule.as_ref())?;
    let (f_g, g) = problem.batch_loss_and_gradient(&batches.grad, &state.w)?;
    if !f_g.is_finite() {
        return Err(Error::NonFinite("batch loss"));
    }
    let g_norm = norm(&g);
    let tau = cfg.tau.next_tau(g_norm);
    let hess_batch = batches.hess.as_ref().unwrap_or(&batches.grad);
    let op = BatchHessian::new(problem.loss, problem.data, hess_batch, &state.w, tau)?;
    let cg = truncated_cg(&op, &g, &cfg.cg)?;
    let mut direction = cg.direction;
    let mut g_dot_d = dot(&g, &direction);
    if g_norm > 0.0 && !(g_dot_d > 0.0) {
        // only reachable with tau = 0 on a singular batch Hessian
        direction = g.clone();
        g_dot_d = g_norm * g_norm;
    }

    let mut ls_evals = 0;
    let eta = if g_norm == 0.0 {
        0.0
    } else {
        match &cfg.step {
            StepRule::LineSearch { config } => {
                let w = &state.w;
                let mut trial = w.clone();
                let out = stochastic_armijo(
                    |eta| {
                        trial.copy_from_slice(w);
                        linalg::axpy(-eta, &direction, &mut trial);
                        problem.batch_loss(&batches.grad, &trial)
                    },
                    f_g,
                    g_dot_d,
                    config,
                )?;
                ls_evals = out.evals;
                out.step
            }
            StepRule::Fixed { eta } => *eta,
            StepRule::Adaptive { constants } => adaptive_step_size(constants, state.n, state.b_g),
        }
    };
    if eta != 0.0 {
        apply_update(state, &direction, eta)?;
    }
    state.k += 1;
    state.tau = tau;
    state.step_size = eta;
    state.grad_norm_estimate = g_norm;
    Ok(StepInfo {
        batch_loss: f_g,
        batch_grad_norm: g_norm,
        step_size: eta,
        cg_iters: cg.iterations,
        ls_evals,
        decrement: Some(g_dot_d.max(0.0).sqrt()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScRssnConfig {
    pub grad_schedule: BatchSchedule,
    pub hess_schedule: Option<BatchSchedule>,
    pub constants: SelfConcordantConstants,
    pub cg: CgConfig,
}

/// One decrement-damped R-SSN iteration:
/// `w <- w - (c eta / (1 + eta lambda)) d` with `lambda = sqrt(g . d)`.
pub fn sc_rssn_step(
    state: &mut SolverState,
    problem: &Problem<'_>,
    cfg: &ScRssnConfig,
) -> Result<StepInfo> {
    cfg.constants.validate()?;
    let batches = draw_batches(state, &cfg.grad_schedule, cfg.hess_schedule.as_ref())?;
    let (f_g, g) = problem.batch_loss_and_gradient(&batches.grad, &state.w)?;
    if !f_g.is_finite() {
        return Err(Error::NonFinite("batch loss"));
    }
    let tau = cfg.constants.tau;
    let hess_batch = batches.hess.as_ref().unwrap_or(&batches.grad);
    let op = BatchHessian::new(problem.loss, problem.data, hess_batch, &state.w, tau)?;
    let cg = truncated_cg(&op, &g, &cfg.cg)?;
    let decrement = dot(&g, &cg.direction).max(0.0).sqrt();
    let scale = cfg.constants.damping(decrement);
    apply_update(state, &cg.direction, scale)?;
    let g_norm = norm(&g);
    state.k += 1;
    state.tau = tau;
    state.step_size = scale;
    state.grad_norm_estimate = g_norm;
    Ok(StepInfo {
        batch_loss: f_g,
        batch_grad_norm: g_norm,
        step_size: scale,
        cg_iters: cg.iterations,
        ls_evals: 0,
        decrement: Some(decrement),
    })
}
