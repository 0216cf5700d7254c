use crate::data::Dataset;
use crate::error::Result;
use crate::losses::{self, LossKind};
use crate::sampling::{rng_from_seed, Batch, BatchSampler, SsnRng};

/// A loss family bound to a training set.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub loss: LossKind,
    pub data: &'a Dataset,
}

impl<'a> Problem<'a> {
    pub fn new(loss: LossKind, data: &'a Dataset) -> Self {
        Self { loss, data }
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn d(&self) -> usize {
        self.data.d()
    }

    pub fn full_batch(&self) -> Batch {
        Batch::full(self.n())
    }

    pub fn loss(&self, w: &[f64]) -> Result<f64> {
        losses::loss_value(self.loss, self.data, &self.full_batch(), w)
    }

    pub fn gradient(&self, w: &[f64]) -> Result<Vec<f64>> {
        losses::loss_gradient(self.loss, self.data, &self.full_batch(), w)
    }

    pub fn loss_and_gradient(&self, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        losses::loss_and_gradient(self.loss, self.data, &self.full_batch(), w)
    }

    pub fn batch_loss(&self, batch: &Batch, w: &[f64]) -> Result<f64> {
        losses::loss_value(self.loss, self.data, batch, w)
    }

    pub fn batch_loss_and_gradient(&self, batch: &Batch, w: &[f64]) -> Result<(f64, Vec<f64>)> {
        losses::loss_and_gradient(self.loss, self.data, batch, w)
    }
}

/// What one iteration did, for tracing.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepInfo {
    pub batch_loss: f64,
    pub batch_grad_norm: f64,
    pub step_size: f64,
    pub cg_iters: usize,
    pub ls_evals: usize,
    /// Stochastic regularized Newton decrement, when the method computes one.
    pub decrement: Option<f64>,
}

/// Iterate plus bookkeeping shared by every stochastic method.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub w: Vec<f64>,
    /// Completed iterations.
    pub k: u64,
    /// Training examples sampled so far; line-search and CG work is not counted.
    pub samples_seen: u64,
    pub n: usize,
    pub rng: SsnRng,
    pub tau: f64,
    pub b_g: usize,
    pub b_s: usize,
    pub step_size: f64,
    /// Norm of the most recent gradient estimate, fed to adaptive schedules.
    pub grad_norm_estimate: f64,
    pub(crate) sampler: BatchSampler,
}

impl SolverState {
    pub fn new(w0: Vec<f64>, n: usize, seed: u64) -> Self {
        Self {
            w: w0,
            k: 0,
            samples_seen: 0,
            n,
            rng: rng_from_seed(seed),
            tau: 0.0,
            b_g: 0,
            b_s: 0,
            step_size: 0.0,
            grad_norm_estimate: f64::INFINITY,
            sampler: BatchSampler::new(n),
        }
    }

    /// Passes over the data, `samples_seen / n`.
    pub fn epoch(&self) -> f64 {
        self.samples_seen as f64 / self.n as f64
    }

    pub fn draw(&mut self, b: usize) -> Result<Batch> {
        self.sampler.draw(b, &mut self.rng)
    }
}
