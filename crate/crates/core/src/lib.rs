//! Regularized subsampled Newton, stochastic L-BFGS and first-order baselines
//! for finite-sum binary classification, with diagnostics and an experiment
//! harness.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cg;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod linesearch;
pub mod losses;
pub mod sampling;
pub mod solvers;

pub use cg::{truncated_cg, CgConfig, CgResult, HessianOperator};
pub use data::{generate_margin_dataset, parse_libsvm, write_libsvm, Dataset, MarginSpec};
pub use error::{Error, Result};
pub use linesearch::LineSearchConfig;
pub use losses::LossKind;
pub use sampling::{Batch, BatchSampler, BatchSchedule, RegularizationSchedule};
pub use solvers::{Method, Optimizer, Problem, SolverState, StepInfo};
