//! Limited-memory BFGS: two-loop recursion, curvature-pair memory and the
//! stochastic (minibatch, full-overlap) variant.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::state::{Problem, SolverState, StepInfo};
use crate::error::Result;
use crate::linalg::{self, dot, norm};
use crate::linesearch::{stochastic_armijo, LineSearchConfig};
use crate::sampling::BatchSchedule;

#[derive(Debug, Clone, PartialEq)]
struct CurvaturePair {
    s: Vec<f64>,
    y: Vec<f64>,
    /// `1 / (y . s)`
    inv_curv: f64,
}

/// Most recent `(s, y)` pairs, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsMemory {
    pairs: VecDeque<CurvaturePair>,
    capacity: usize,
}

impl LbfgsMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            pairs: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Initial inverse-Hessian scaling `(s . y) / (y . y)` from the newest pair,
    /// or 1 when empty.
    pub fn initial_scaling(&self) -> f64 {
        match self.pairs.back() {
            Some(p) => {
                let yy = dot(&p.y, &p.y);
                if yy > 0.0 {
                    1.0 / (p.inv_curv * yy)
                } else {
                    1.0
                }
            }
            None => 1.0,
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.pairs.iter().map(|p| (p.s.as_slice(), p.y.as_slice()))
    }
}

/// `B g` by the two-loop recursion with initial matrix `gamma0 I`.
pub fn lbfgs_direction(mem: &LbfgsMemory, g: &[f64], gamma0: f64) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for p in mem.pairs.iter().rev() {
        let a = p.inv_curv * dot(&p.s, &q);
        linalg::axpy(-a, &p.y, &mut q);
        alphas.push(a);
    }
    linalg::scale(gamma0, &mut q);
    for (p, a) in mem.pairs.iter().zip(alphas.into_iter().rev()) {
        let b = p.inv_curv * dot(&p.y, &q);
        linalg::axpy(a - b, &p.s, &mut q);
    }
    q
}

/// Stores `(s, y + lambda_reg s)` if its curvature passes
/// `y . s > eps_curv |s| |y|`, evicting the oldest pair beyond capacity.
/// Returns whether the pair was kept.
pub fn lbfgs_update_memory(
    mem: &mut LbfgsMemory,
    s: Vec<f64>,
    mut y: Vec<f64>,
    eps_curv: f64,
    lambda_reg: f64,
) -> bool {
    if mem.capacity == 0 {
        return false;
    }
    if lambda_reg != 0.0 {
        linalg::axpy(lambda_reg, &s, &mut y);
    }
    let ys = dot(&y, &s);
    if !(ys > eps_curv * norm(&s) * norm(&y)) || !ys.is_finite() {
        return false;
    }
    if mem.pairs.len() == mem.capacity {
        mem.pairs.pop_front();
    }
    mem.pairs.push_back(CurvaturePair {
        s,
        y,
        inv_curv: 1.0 / ys,
    });
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LbfgsStep {
    /// Armijo on the sampled batch, restarted from `eta_init` each iteration.
    LineSearch {
        #[serde(flatten)]
        config: LineSearchConfig,
    },
    Fixed { eta: f64 },
    /// Constant step picked by running every candidate and keeping the best
    /// final training loss. Resolved by the experiment harness.
    Grid {
        #[serde(default = "default_grid")]
        steps: Vec<f64>,
    },
}

pub fn default_grid() -> Vec<f64> {
    vec![1e-4, 1e-3, 1e-2, 1e-1, 0.5, 1.0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlbfgsConfig {
    pub batch: BatchSchedule,
    pub eps_curv: f64,
    pub lambda_reg: f64,
    pub step: LbfgsStep,
}

impl SlbfgsConfig {
    pub fn new(batch: BatchSchedule, step: LbfgsStep) -> Self {
        Self {
            batch,
            eps_curv: 1e-8,
            lambda_reg: 1e-4,
            step,
        }
    }
}

/// One stochastic L-BFGS iteration; both gradients of the curvature pair use
/// the same minibatch.
pub fn slbfgs_step(
    state: &mut SolverState,
    mem: &mut LbfgsMemory,
    problem: &Problem<'_>,
    cfg: &SlbfgsConfig,
) -> Result<StepInfo> {
    let b = cfg
        .batch
        .next_batch_size(state.k, state.grad_norm_estimate, state.n);
    let batch = state.draw(b)?;
    state.b_g = b;
    state.b_s = b;
    state.samples_seen += b as u64;

    let (f_b, g) = problem.batch_loss_and_gradient(&batch, &state.w)?;
    let g_norm = norm(&g);
    let mut direction = lbfgs_direction(mem, &g, mem.initial_scaling());
    let mut g_dot_d = dot(&g, &direction);
    if g_norm > 0.0 && !(g_dot_d > 0.0) {
        direction = g.clone();
        g_dot_d = g_norm * g_norm;
    }

    let mut ls_evals = 0;
    let eta = if g_norm == 0.0 {
        0.0
    } else {
        match &cfg.step {
            LbfgsStep::LineSearch { config } => {
                let w = &state.w;
                let mut trial = w.clone();
                let out = stochastic_armijo(
                    |eta| {
                        trial.copy_from_slice(w);
                        linalg::axpy(-eta, &direction, &mut trial);
                        problem.batch_loss(&batch, &trial)
                    },
                    f_b,
                    g_dot_d,
                    config,
                )?;
                ls_evals = out.evals;
                out.step
            }
            LbfgsStep::Fixed { eta } => *eta,
            LbfgsStep::Grid { .. } => {
                return Err(crate::error::invalid(
                    "grid step must be resolved to a fixed step before stepping",
                ))
            }
        }
    };

    if eta != 0.0 {
        let mut next = state.w.clone();
        linalg::axpy(-eta, &direction, &mut next);
        linalg::ensure_finite(&next, "iterate")?;
        let g_next = problem.batch_loss_and_gradient(&batch, &next)?.1;
        let s = linalg::sub(&next, &state.w);
        let y = linalg::sub(&g_next, &g);
        lbfgs_update_memory(mem, s, y, cfg.eps_curv, cfg.lambda_reg);
        state.w = next;
    }
    state.k += 1;
    state.step_size = eta;
    state.grad_norm_estimate = g_norm;
    Ok(StepInfo {
        batch_loss: f_b,
        batch_grad_norm: g_norm,
        step_size: eta,
        cg_iters: 0,
        ls_evals,
        decrement: None,
    })
}

/// Deterministic full-batch L-BFGS iteration with Armijo backtracking.
pub fn lbfgs_full_step(
    state: &mut SolverState,
    mem: &mut LbfgsMemory,
    problem: &Problem<'_>,
    ls: &LineSearchConfig,
) -> Result<StepInfo> {
    let cfg = SlbfgsConfig::new(
        BatchSchedule::Constant { b: state.n },
        LbfgsStep::LineSearch { config: *ls },
    );
    let cfg = SlbfgsConfig {
        lambda_reg: 0.0,
        ..cfg
    };
    slbfgs_step(state, mem, problem, &cfg)
}
