//! Self-checks of the numerical kernels against independent dense or
//! closed-form values, on small fixed problems.

use ssn_core::data::{generate_margin_dataset, Dataset, MarginSpec};
use ssn_core::diagnostics::{
    convergence_order, estimate_sgc_rho, newton_decrement_sgc_check, quartic_growth_check, random_probes,
    relative_error, variance_identity_check, RateKind,
};
use ssn_core::linalg::{mat_vec, norm, spd_solve};
use ssn_core::losses::{dense_hessian, hessian_vector_product, loss_and_gradient, loss_value};
use ssn_core::sampling::rng_from_seed;
use ssn_core::solvers::full_newton_solve;
use ssn_core::{truncated_cg, Batch, CgConfig, LossKind, Problem, Result};

pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: impl Into<String>, outcome: Result<(bool, String)>) -> Check {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    Check {
        name: name.into(),
        passed,
        detail,
    }
}

fn small_data(seed: u64) -> Result<Dataset> {
    Ok(generate_margin_dataset(&MarginSpec {
        n: 40,
        d: 6,
        margin: 0.1,
        seed,
    })?
    .0)
}

const LOSSES: [(LossKind, &str); 2] = [(LossKind::Logistic, "logistic"), (LossKind::SquaredHinge, "squared_hinge")];

fn gradient_fd(loss: LossKind) -> Result<(bool, String)> {
    let data = small_data(1)?;
    let full = Batch::full(data.n());
    let mut rng = rng_from_seed(11);
    let w = random_probes(data.d(), 1, 1.0, &mut rng).remove(0);
    let (_, g) = loss_and_gradient(loss, &data, &full, &w)?;
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for j in 0..data.d() {
        let (mut wp, mut wm) = (w.clone(), w.clone());
        wp[j] += h;
        wm[j] -= h;
        let fd = (loss_value(loss, &data, &full, &wp)? - loss_value(loss, &data, &full, &wm)?) / (2.0 * h);
        worst = worst.max((fd - g[j]).abs());
    }
    Ok((worst < 1e-7, format!("max |fd - grad| = {worst:.2e}")))
}

fn hvp_dense(loss: LossKind) -> Result<(bool, String)> {
    let data = small_data(2)?;
    let full = Batch::full(data.n());
    let mut rng = rng_from_seed(12);
    let mut p = random_probes(data.d(), 2, 1.0, &mut rng);
    let (v, w) = (p.pop().unwrap(), p.pop().unwrap());
    let hv = hessian_vector_product(loss, &data, &full, &w, 0.1, &v)?;
    let h = dense_hessian(loss, &data, &full, &w, 0.1)?;
    let err = relative_error(&hv, &mat_vec(&h, &v));
    Ok((err < 1e-12, format!("relative error {err:.2e}")))
}

fn cg_dense() -> Result<(bool, String)> {
    let data = small_data(3)?;
    let full = Batch::full(data.n());
    let mut rng = rng_from_seed(13);
    let mut p = random_probes(data.d(), 2, 1.0, &mut rng);
    let (rhs, w) = (p.pop().unwrap(), p.pop().unwrap());
    let h = dense_hessian(LossKind::Logistic, &data, &full, &w, 0.5)?;
    let cg = truncated_cg(&h, &rhs, &CgConfig::new(1e-12, 50))?;
    let err = relative_error(&cg.direction, &spd_solve(&h, &rhs)?);
    Ok((err < 1e-8, format!("relative error {err:.2e} after {} iterations", cg.iterations)))
}

fn variance_identity() -> Result<(bool, String)> {
    let mut rng = rng_from_seed(14);
    let ys = random_probes(3, 7, 1.0, &mut rng);
    let mut worst: f64 = 0.0;
    for b in 1..=ys.len() {
        let c = variance_identity_check(&ys, b)?;
        worst = worst.max((c.lhs - c.rhs).abs() / c.rhs.abs().max(1e-300));
        if b == ys.len() {
            worst = worst.max(c.lhs.abs());
        }
    }
    Ok((worst < 1e-12, format!("max relative gap {worst:.2e} over b = 1..7")))
}

fn quartic_bound() -> Result<(bool, String)> {
    let mut rng = rng_from_seed(15);
    let ys: Vec<Vec<f64>> = random_probes(2, 6, 0.3, &mut rng)
        .into_iter()
        .map(|y| vec![1.0 + y[0], 0.5 + y[1]])
        .collect();
    let mean_sq = ys.iter().map(|y| y[0] * y[0] + y[1] * y[1]).sum::<f64>() / ys.len() as f64;
    let ybar = [
        ys.iter().map(|y| y[0]).sum::<f64>() / 6.0,
        ys.iter().map(|y| y[1]).sum::<f64>() / 6.0,
    ];
    let ybar_sq = ybar[0] * ybar[0] + ybar[1] * ybar[1];
    let c = mean_sq / (ybar_sq * ybar_sq) * (1.0 + 1e-12);
    let mut ok = true;
    for b in 1..=6 {
        let q = quartic_growth_check(&ys, b, c)?;
        ok &= q.premise && q.lhs <= q.bound * (1.0 + 1e-12);
    }
    Ok((ok, format!("c = {c:.3}, b = 1..6")))
}

fn single_sample_rho() -> Result<(bool, String)> {
    let data = Dataset::dense(2, vec![0.3, -1.2], vec![1.0])?;
    let rho = estimate_sgc_rho(LossKind::Logistic, &data, &[vec![0.5, 0.25]])?;
    Ok(((rho - 1.0).abs() < 1e-14, format!("rho = {rho}")))
}

fn decrement_bound() -> Result<(bool, String)> {
    let data = small_data(4)?;
    let mut rng = rng_from_seed(16);
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for w in random_probes(data.d(), 5, 1.0, &mut rng) {
        let c = newton_decrement_sgc_check(LossKind::Logistic, &data, &w, 1e-3)?;
        ok &= c.holds();
        worst = worst.max(c.lhs / c.rhs_bound);
    }
    Ok((ok, format!("max lhs / bound = {worst:.3}")))
}

fn rate_fitting() -> Result<(bool, String)> {
    let linear: Vec<f64> = (0..12).map(|k| 0.5f64.powi(k)).collect();
    let quad: Vec<f64> = (0..5).map(|k| 0.1f64.powi(1 << k)).collect();
    let q = convergence_order(&linear, 0..12, RateKind::QLinearFactor)?.value;
    let p = convergence_order(&quad, 0..5, RateKind::OrderQ)?.value;
    Ok((
        (q - 0.5).abs() < 1e-12 && (p - 2.0).abs() < 1e-12,
        format!("factor {q:.6}, order {p:.6}"),
    ))
}

fn newton_stationary() -> Result<(bool, String)> {
    let data = small_data(5)?;
    let problem = Problem::new(LossKind::SquaredHinge, &data);
    let sol = full_newton_solve(&problem, 1e-12, 1e-10)?;
    let (_, g) = problem.loss_and_gradient(&sol.w)?;
    let gn = norm(&g);
    Ok((gn <= 1e-10, format!("|grad| = {gn:.2e} after {} iterations", sol.iterations)))
}

pub fn run_all() -> Vec<Check> {
    let mut out = Vec::new();
    for (loss, name) in LOSSES {
        out.push(check(format!("gradient vs finite differences ({name})"), gradient_fd(loss)));
        out.push(check(format!("Hessian-vector product ({name})"), hvp_dense(loss)));
    }
    out.push(check("CG vs dense solve", cg_dense()));
    out.push(check("batch variance identity", variance_identity()));
    out.push(check("quartic growth bound", quartic_bound()));
    out.push(check("growth constant with n = 1", single_sample_rho()));
    out.push(check("decrement bound", decrement_bound()));
    out.push(check("rate fitting", rate_fitting()));
    out.push(check("full Newton stationarity", newton_stationary()));
    out
}
