//! First-order baselines: SGD (plain and heavy-ball), SVRG, Adam, Adagrad.

use serde::{Deserialize, Serialize};

use super::state::{Problem, SolverState, StepInfo};
use crate::error::{Error, Result};
use crate::linalg::{self, norm};
use crate::linesearch::{stochastic_armijo, LineSearchConfig, StepReset};
use crate::sampling::{Batch, BatchSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SgdStep {
    /// Armijo on the batch; the trial step warm-starts from
    /// `min(2 * previous, 10)`.
    LineSearch {
        #[serde(flatten)]
        config: LineSearchConfig,
    },
    Fixed { eta: f64 },
}

impl Default for SgdStep {
    fn default() -> Self {
        SgdStep::LineSearch {
            config: LineSearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FirstOrderKind {
    Sgd { step: SgdStep },
    /// Heavy ball: `w - eta g + momentum (w - w_prev)`.
    SgdPolyak { step: SgdStep, momentum: f64 },
    /// `inner = None` refreshes the snapshot every `n / b` steps.
    Svrg { eta: f64, inner: Option<usize> },
    Adam {
        eta: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    Adagrad { eta: f64, eps: f64 },
}

impl FirstOrderKind {
    pub fn adam_default() -> Self {
        FirstOrderKind::Adam {
            eta: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn adagrad_default() -> Self {
        FirstOrderKind::Adagrad {
            eta: 1e-2,
            eps: 1e-10,
        }
    }
}

/// Per-method buffers carried between iterations.
#[derive(Debug, Clone, Default)]
pub struct FirstOrderState {
    prev_w: Option<Vec<f64>>,
    prev_step: Option<f64>,
    snapshot: Option<Snapshot>,
    inner_done: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

#[derive(Debug, Clone)]
struct Snapshot {
    w: Vec<f64>,
    full_grad: Vec<f64>,
}

impl FirstOrderState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// SVRG estimate `g_B(w) - g_B(w_snap) + grad f(w_snap)`.
pub fn svrg_gradient(
    problem: &Problem<'_>,
    batch: &Batch,
    w: &[f64],
    snapshot_w: &[f64],
    snapshot_full_grad: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let (f, mut g) = problem.batch_loss_and_gradient(batch, w)?;
    let g_snap = problem.batch_loss_and_gradient(batch, snapshot_w)?.1;
    for ((gi, si), mi) in g.iter_mut().zip(&g_snap).zip(snapshot_full_grad) {
        *gi = *gi - si + mi;
    }
    Ok((f, g))
}

fn sgd_eta(
    step: &SgdStep,
    aux: &mut FirstOrderState,
    problem: &Problem<'_>,
    batch: &Batch,
    w: &[f64],
    f: f64,
    g: &[f64],
) -> Result<(f64, usize)> {
    match step {
        SgdStep::Fixed { eta } => Ok((*eta, 0)),
        SgdStep::LineSearch { config } => {
            let gg = linalg::dot(g, g);
            if gg == 0.0 {
                return Ok((0.0, 0));
            }
            let eta_init = StepReset::SGD.trial(config.eta_init, aux.prev_step);
            let cfg = LineSearchConfig {
                eta_init,
                eta_min: config.eta_min.min(eta_init),
                ..*config
            };
            let mut trial = w.to_vec();
            let out = stochastic_armijo(
                |eta| {
                    trial.copy_from_slice(w);
                    linalg::axpy(-eta, g, &mut trial);
                    problem.batch_loss(batch, &trial)
                },
                f,
                gg,
                &cfg,
            )?;
            aux.prev_step = Some(out.step);
            Ok((out.step, out.evals))
        }
    }
}

/// One iteration of the chosen first-order method.
pub fn first_order_step(
    state: &mut SolverState,
    aux: &mut FirstOrderState,
    problem: &Problem<'_>,
    schedule: &BatchSchedule,
    kind: &FirstOrderKind,
) -> Result<StepInfo> {
    let n = state.n;
    let d = state.w.len();

    if let FirstOrderKind::Svrg { .. } = kind {
        if aux.snapshot.is_none() {
            let full_grad = problem.gradient(&state.w)?;
            aux.snapshot = Some(Snapshot {
                w: state.w.clone(),
                full_grad,
            });
            aux.inner_done = 0;
            state.samples_seen += n as u64;
        }
    }

    let b = schedule.next_batch_size(state.k, state.grad_norm_estimate, n);
    let batch = state.draw(b)?;
    state.b_g = b;
    state.b_s = 0;
    state.samples_seen += b as u64;

    let (f, g) = match (kind, &aux.snapshot) {
        (FirstOrderKind::Svrg { .. }, Some(snap)) => {
            svrg_gradient(problem, &batch, &state.w, &snap.w, &snap.full_grad)?
        }
        _ => problem.batch_loss_and_gradient(&batch, &state.w)?,
    };
    let g_norm = norm(&g);
    let mut next = state.w.clone();
    let mut ls_evals = 0;
    let eta;

    match *kind {
        FirstOrderKind::Sgd { step } => {
            let (e, evals) = sgd_eta(&step, aux, problem, &batch, &state.w, f, &g)?;
            eta = e;
            ls_evals = evals;
            linalg::axpy(-eta, &g, &mut next);
        }
        FirstOrderKind::SgdPolyak { step, momentum } => {
            let (e, evals) = sgd_eta(&step, aux, problem, &batch, &state.w, f, &g)?;
            eta = e;
            ls_evals = evals;
            linalg::axpy(-eta, &g, &mut next);
            if let Some(prev) = &aux.prev_w {
                for ((x, w), p) in next.iter_mut().zip(&state.w).zip(prev) {
                    *x += momentum * (w - p);
                }
            }
            aux.prev_w = Some(state.w.clone());
        }
        FirstOrderKind::Svrg { eta: e, inner } => {
            eta = e;
            linalg::axpy(-eta, &g, &mut next);
            aux.inner_done += 1;
            let m = inner.unwrap_or_else(|| (n / b).max(1));
            if aux.inner_done >= m {
                aux.snapshot = None;
            }
        }
        FirstOrderKind::Adam {
            eta: e,
            beta1,
            beta2,
            eps,
        } => {
            eta = e;
            if aux.m.len() != d {
                aux.m = vec![0.0; d];
                aux.v = vec![0.0; d];
                aux.t = 0;
            }
            aux.t += 1;
            let bc1 = 1.0 - beta1.powf(aux.t as f64);
            let bc2 = 1.0 - beta2.powf(aux.t as f64);
            for j in 0..d {
                aux.m[j] = beta1 * aux.m[j] + (1.0 - beta1) * g[j];
                aux.v[j] = beta2 * aux.v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = aux.m[j] / bc1;
                let v_hat = aux.v[j] / bc2;
                next[j] -= eta * m_hat / (v_hat.sqrt() + eps);
            }
        }
        FirstOrderKind::Adagrad { eta: e, eps } => {
            eta = e;
            if aux.v.len() != d {
                aux.v = vec![0.0; d];
            }
            for j in 0..d {
                aux.v[j] += g[j] * g[j];
                next[j] -= eta * g[j] / (aux.v[j].sqrt() + eps);
            }
        }
    }

    if !linalg::all_finite(&next) {
        return Err(Error::NonFinite("first-order update"));
    }
    state.w = next;
    state.k += 1;
    state.step_size = eta;
    state.grad_norm_estimate = g_norm;
    Ok(StepInfo {
        batch_loss: f,
        batch_grad_norm: g_norm,
        step_size: eta,
        cg_iters: 0,
        ls_evals,
        decrement: None,
    })
}
