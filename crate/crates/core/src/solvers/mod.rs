//! Optimization methods and a uniform driver over them.

pub mod first_order;
pub mod lbfgs;
pub mod newton;
pub mod rssn;
pub mod state;
pub mod theory;

pub use first_order::{first_order_step, svrg_gradient, FirstOrderKind, FirstOrderState, SgdStep};
pub use lbfgs::{
    lbfgs_direction, lbfgs_full_step, lbfgs_update_memory, slbfgs_step, LbfgsMemory, LbfgsStep,
    SlbfgsConfig,
};
pub use newton::{full_newton_solve, full_newton_solve_from, newton_full_step, NewtonSolution};
pub use rssn::{rssn_step, sc_rssn_step, RssnConfig, ScRssnConfig, StepRule};
pub use state::{Problem, SolverState, StepInfo};
pub use theory::{
    gradient_noise_factor, omega, adaptive_step_size, SelfConcordantConstants, StepConstants,
};

use crate::error::Result;
use crate::linesearch::LineSearchConfig;
use crate::sampling::BatchSchedule;

/// A fully resolved method with all hyperparameters fixed.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Rssn(RssnConfig),
    ScRssn(ScRssnConfig),
    Slbfgs { config: SlbfgsConfig, memory: usize },
    FirstOrder {
        schedule: BatchSchedule,
        kind: FirstOrderKind,
    },
    /// Deterministic full-batch Newton.
    Newton { tau_floor: f64 },
    /// Deterministic full-batch L-BFGS.
    Lbfgs {
        memory: usize,
        line_search: LineSearchConfig,
    },
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Memory(LbfgsMemory),
    FirstOrder(FirstOrderState),
}

/// Owns the iterate and method-specific buffers for one run.
#[derive(Debug, Clone)]
pub struct Optimizer {
    method: Method,
    state: SolverState,
    aux: Aux,
}

impl Optimizer {
    pub fn new(method: Method, w0: Vec<f64>, n: usize, seed: u64) -> Self {
        let aux = match &method {
            Method::Slbfgs { memory, .. } | Method::Lbfgs { memory, .. } => {
                Aux::Memory(LbfgsMemory::new(*memory))
            }
            Method::FirstOrder { .. } => Aux::FirstOrder(FirstOrderState::new()),
            _ => Aux::None,
        };
        let mut state = SolverState::new(w0, n, seed);
        if let Method::Rssn(cfg) = &method {
            state.tau = cfg.tau.tau0();
        }
        Self { method, state, aux }
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut SolverState {
        &mut self.state
    }

    pub fn method(&self) -> &Method {
        &self.method
    }

    pub fn step(&mut self, problem: &Problem<'_>) -> Result<StepInfo> {
        match (&self.method, &mut self.aux) {
            (Method::Rssn(cfg), _) => rssn_step(&mut self.state, problem, cfg),
            (Method::ScRssn(cfg), _) => sc_rssn_step(&mut self.state, problem, cfg),
            (Method::Slbfgs { config, .. }, Aux::Memory(mem)) => {
                slbfgs_step(&mut self.state, mem, problem, config)
            }
            (Method::FirstOrder { schedule, kind }, Aux::FirstOrder(aux)) => {
                first_order_step(&mut self.state, aux, problem, schedule, kind)
            }
            (Method::Newton { tau_floor }, _) => newton_full_step(&mut self.state, problem, *tau_floor),
            (Method::Lbfgs { line_search, .. }, Aux::Memory(mem)) => {
                lbfgs_full_step(&mut self.state, mem, problem, line_search)
            }
            _ => unreachable!("auxiliary state always matches the method"),
        }
    }
}
