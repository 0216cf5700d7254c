//! Full-batch damped Newton with dense factorization. Serves as the
//! deterministic baseline and as the reference minimizer for error curves.

use super::state::{Problem, SolverState, StepInfo};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm};
use crate::linesearch::{stochastic_armijo, LineSearchConfig};
use crate::losses::dense_hessian;

const MAX_NEWTON_ITERS: usize = 500;

fn newton_line_search() -> LineSearchConfig {
    LineSearchConfig {
        armijo_c: 1e-4,
        backtrack_factor: 0.5,
        eta_init: 1.0,
        eta_min: 1e-12,
        max_backtracks: 60,
    }
}

/// `[H + tau I]^{-1} g`, adding jitter if the factorization fails.
fn newton_direction(problem: &Problem<'_>, w: &[f64], tau: f64, g: &[f64]) -> Result<Vec<f64>> {
    let batch = problem.full_batch();
    let mut h = dense_hessian(problem.loss, problem.data, &batch, w, tau)?;
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..12 {
        if let Ok(d) = linalg::spd_solve(&h, g) {
            if linalg::all_finite(&d) {
                return Ok(d);
            }
        }
        let next = if jitter == 0.0 { 1e-14 * scale } else { jitter * 10.0 };
        for i in 0..h.nrows() {
            h[(i, i)] += next - jitter;
        }
        jitter = next;
    }
    Err(Error::NoConvergence(
        "Hessian could not be factorized".into(),
    ))
}

/// Outcome of [`full_newton_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSolution {
    pub w: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub loss: f64,
}

/// Newton iterations from `w = 0` with Hessian `hess f + tau_floor I` and
/// Armijo backtracking, until `|grad f| <= tol`.
pub fn full_newton_solve(problem: &Problem<'_>, tau_floor: f64, tol: f64) -> Result<NewtonSolution> {
    full_newton_solve_from(problem, vec![0.0; problem.d()], tau_floor, tol)
}

pub fn full_newton_solve_from(
    problem: &Problem<'_>,
    w0: Vec<f64>,
    tau_floor: f64,
    tol: f64,
) -> Result<NewtonSolution> {
    let ls = newton_line_search();
    let mut w = w0;
    for iterations in 0..=MAX_NEWTON_ITERS {
        let (f, g) = problem.loss_and_gradient(&w)?;
        let g_norm = norm(&g);
        if g_norm <= tol {
            return Ok(NewtonSolution {
                w,
                iterations,
                grad_norm: g_norm,
                loss: f,
            });
        }
        if iterations == MAX_NEWTON_ITERS {
            break;
        }
        let mut d = newton_direction(problem, &w, tau_floor, &g)?;
        let mut gd = dot(&g, &d);
        if !(gd > 0.0) {
            d = g.clone();
            gd = g_norm * g_norm;
        }
        let mut trial = w.clone();
        let out = stochastic_armijo(
            |eta| {
                trial.copy_from_slice(&w);
                linalg::axpy(-eta, &d, &mut trial);
                problem.loss(&trial)
            },
            f,
            gd,
            &ls,
        )?;
        if !out.accepted {
            return Err(Error::NoConvergence(format!(
                "line search stalled at |grad| = {g_norm:e}"
            )));
        }
        linalg::axpy(-out.step, &d, &mut w);
    }
    Err(Error::NoConvergence(format!(
        "Newton did not reach |grad| <= {tol:e} in {MAX_NEWTON_ITERS} iterations"
    )))
}

/// One deterministic Newton iteration for the experiment harness; counts a
/// full pass over the data.
pub fn newton_full_step(state: &mut SolverState, problem: &Problem<'_>, tau_floor: f64) -> Result<StepInfo> {
    let n = state.n;
    state.b_g = n;
    state.b_s = n;
    state.samples_seen += n as u64;
    let (f, g) = problem.loss_and_gradient(&state.w)?;
    let g_norm = norm(&g);
    let mut info = StepInfo {
        batch_loss: f,
        batch_grad_norm: g_norm,
        ..Default::default()
    };
    if g_norm > 0.0 {
        let mut d = newton_direction(problem, &state.w, tau_floor, &g)?;
        let mut gd = dot(&g, &d);
        if !(gd > 0.0) {
            d = g.clone();
            gd = g_norm * g_norm;
        }
        let w = &state.w;
        let mut trial = w.clone();
        let out = stochastic_armijo(
            |eta| {
                trial.copy_from_slice(w);
                linalg::axpy(-eta, &d, &mut trial);
                problem.loss(&trial)
            },
            f,
            gd,
            &newton_line_search(),
        )?;
        if out.accepted {
            linalg::axpy(-out.step, &d, &mut state.w);
            info.step_size = out.step;
        }
        info.ls_evals = out.evals;
        info.decrement = Some(gd.sqrt());
    }
    state.k += 1;
    state.tau = tau_floor;
    state.step_size = info.step_size;
    state.grad_norm_estimate = g_norm;
    Ok(info)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_margin_dataset, Dataset, MarginSpec};
    use crate::losses::{sample_gradient, LossKind};

    #[test]
    fn quadratic_in_one_step() {
        // 2(1 - w)^2 + (1 + w)^2 over three samples; minimizer 1/3
        let data = Dataset::dense(1, vec![1.0, 1.0, 1.0], vec![1.0, 1.0, -1.0]).unwrap();
        let problem = Problem::new(LossKind::SquaredHinge, &data);
        let sol = full_newton_solve(&problem, 0.0, 1e-14).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!((sol.w[0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn separable_logistic_reaches_interpolation() {
        let spec = MarginSpec {
            n: 30,
            d: 5,
            margin: 0.1,
            seed: 3,
        };
        let (data, _) = generate_margin_dataset(&spec).unwrap();
        let problem = Problem::new(LossKind::Logistic, &data);
        let sol = full_newton_solve(&problem, 0.0, 1e-10).unwrap();
        assert!(sol.grad_norm <= 1e-10);
        let worst = (0..data.n())
            .map(|i| norm(&sample_gradient(LossKind::Logistic, &data, i, &sol.w)))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-8, "worst per-sample gradient {worst:e}");
        let again = full_newton_solve(&problem, 0.0, 1e-10).unwrap();
        assert_eq!(sol, again);
    }

    #[test]
    fn separable_hinge_reaches_zero_loss() {
        let spec = MarginSpec {
            n: 200,
            d: 10,
            margin: 0.1,
            seed: 4,
        };
        let (data, _) = generate_margin_dataset(&spec).unwrap();
        let problem = Problem::new(LossKind::SquaredHinge, &data);
        let sol = full_newton_solve(&problem, 0.0, 1e-12).unwrap();
        assert!(sol.loss < 1e-10);
    }
}
