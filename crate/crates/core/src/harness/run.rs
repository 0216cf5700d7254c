//! Seeded multi-trial runs with per-epoch evaluation.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;

use super::config::{Candidate, DatasetConfig, ExperimentConfig};
use super::trace::{summarize, write_summary, write_trace, SummaryRow, TraceRow};
use crate::data::{
    generate_margin_dataset, parse_libsvm, parse_libsvm_with_dim, rbf_kernel_map, train_test_split,
    Dataset, MarginSpec,
};
use crate::error::{Error, Result};
use crate::linalg::{self, norm};
use crate::solvers::{Method, Optimizer, Problem};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Upper bound on seeds run at once; `None` uses every core.
    pub threads: Option<usize>,
}

/// Training data and the optional held-out set.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

pub fn load_libsvm_file(path: &Path, min_d: usize) -> Result<Dataset> {
    parse_libsvm_with_dim(open(path)?, min_d)
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (mut train, mut test) = match &cfg.dataset {
        DatasetConfig::Synthetic { n, d, margin, seed } => {
            let (data, _) = generate_margin_dataset(&MarginSpec {
                n: *n,
                d: *d,
                margin: *margin,
                seed: *seed,
            })?;
            (data, None)
        }
        DatasetConfig::Libsvm {
            path, test_path, ..
        } => {
            let train = parse_libsvm(open(path)?)?;
            match test_path {
                Some(tp) => {
                    let test = load_libsvm_file(tp, train.d())?;
                    // widen the training set if the test file names more features
                    let train = if test.d() > train.d() {
                        load_libsvm_file(path, test.d())?
                    } else {
                        train
                    };
                    (train, Some(test))
                }
                None => (train, None),
            }
        }
    };
    if let Some(f) = cfg.split {
        let (tr, te) = train_test_split(&train, f, cfg.split_seed)?;
        train = tr;
        test = Some(te);
    }
    if let DatasetConfig::Libsvm {
        rbf_bandwidth: Some(bw),
        ..
    } = &cfg.dataset
    {
        let mapped_test = test.as_ref().map(|t| rbf_kernel_map(&train, t, *bw)).transpose()?;
        train = rbf_kernel_map(&train, &train, *bw)?;
        test = mapped_test;
    }
    Ok(PreparedData { train, test })
}

/// Trace of one seed; `error` is set when the solver stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub error: Option<String>,
    pub w: Vec<f64>,
}

impl SeedOutcome {
    pub fn final_loss(&self) -> f64 {
        match (&self.error, self.rows.last()) {
            (None, Some(r)) => r.train_loss,
            _ => f64::INFINITY,
        }
    }
}

/// Runs `method` from `w = 0` until `epochs` passes over the training data,
/// recording a row at the start and at every epoch boundary crossed.
pub fn run_seed(
    problem: &Problem<'_>,
    test: Option<&Dataset>,
    method: &Method,
    seed: u64,
    epochs: usize,
) -> SeedOutcome {
    let mut opt = Optimizer::new(method.clone(), vec![0.0; problem.d()], problem.n(), seed);
    let mut rows = Vec::new();
    let error = drive(problem, test, &mut opt, seed, epochs, &mut rows).err();
    if let Some(e) = &error {
        warn!("seed {seed} failed after {} rows: {e}", rows.len());
    }
    SeedOutcome {
        seed,
        rows,
        error: error.map(|e| e.to_string()),
        w: opt.state().w.clone(),
    }
}

#[derive(Default)]
struct Pending {
    cg_iters: usize,
    ls_evals: usize,
    seconds: f64,
}

fn drive(
    problem: &Problem<'_>,
    test: Option<&Dataset>,
    opt: &mut Optimizer,
    seed: u64,
    epochs: usize,
    rows: &mut Vec<TraceRow>,
) -> Result<()> {
    let eval_set = test.unwrap_or(problem.data);
    let record = |opt: &Optimizer, pending: &Pending| -> Result<TraceRow> {
        let s = opt.state();
        let (loss, g) = problem.loss_and_gradient(&s.w)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss"));
        }
        Ok(TraceRow {
            seed,
            epoch: s.epoch(),
            iteration: s.k,
            train_loss: loss,
            test_accuracy: eval_set.accuracy(&s.w),
            grad_norm: norm(&g),
            batch_size: s.b_g,
            tau: s.tau,
            step_size: s.step_size,
            cg_iters: pending.cg_iters,
            ls_evals: pending.ls_evals,
            wall_clock_seconds: pending.seconds,
        })
    };
    let mut pending = Pending::default();
    rows.push(record(opt, &pending)?);
    let target = epochs as f64;
    let mut next = 1.0;
    while opt.state().epoch() < target {
        let t = Instant::now();
        let step = opt.step(problem)?;
        pending.seconds += t.elapsed().as_secs_f64();
        pending.cg_iters += step.cg_iters;
        pending.ls_evals += step.ls_evals;
        linalg::ensure_finite(&opt.state().w, "iterate")?;
        let epoch = opt.state().epoch();
        if epoch >= next {
            rows.push(record(opt, &pending)?);
            pending = Pending::default();
            next = epoch.floor() + 1.0;
        }
    }
    Ok(())
}

/// Everything a run produces before it is written out.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Rows of the selected candidate, seed by seed in config order.
    pub trace: Vec<TraceRow>,
    pub summary: Vec<SummaryRow>,
    /// `(seed, message)` for every seed of the selected candidate that failed.
    pub failures: Vec<(u64, String)>,
    /// Label of the selected grid candidate, empty without a grid.
    pub selected: String,
    /// Mean final training loss per candidate, failed seeds counting as infinite.
    pub scores: Vec<(String, f64)>,
    /// Final iterate of each seed of the selected candidate.
    pub final_iterates: Vec<Vec<f64>>,
}

fn run_candidate(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    cand: &Candidate,
    pool: &rayon::ThreadPool,
) -> Vec<SeedOutcome> {
    let problem = Problem::new(cfg.loss, &data.train);
    pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let out = run_seed(&problem, data.test.as_ref(), &cand.method, seed, cfg.epochs);
                info!(
                    "{}{} seed {seed}: final loss {:e}",
                    cfg.solver.name(),
                    if cand.label.is_empty() { String::new() } else { format!(" [{}]", cand.label) },
                    out.final_loss()
                );
                out
            })
            .collect()
    })
}

/// Runs every grid candidate over all seeds and keeps the one with the lowest
/// mean final training loss.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    let data = load_data(cfg)?;
    run_experiment_on(cfg, &data, opts)
}

pub fn run_experiment_on(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    opts: &RunOptions,
) -> Result<ExperimentResult> {
    cfg.check_against(data.train.n())?;
    let candidates = cfg.solver.candidates(cfg.batch_size)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut best: Option<(f64, usize, Vec<SeedOutcome>)> = None;
    let mut scores = Vec::with_capacity(candidates.len());
    for (idx, cand) in candidates.iter().enumerate() {
        let outcomes = run_candidate(cfg, data, cand, &pool);
        let score = outcomes.iter().map(SeedOutcome::final_loss).sum::<f64>() / outcomes.len() as f64;
        scores.push((cand.label.clone(), score));
        let better = match &best {
            None => true,
            Some((s, _, _)) => score < *s,
        };
        if better {
            best = Some((score, idx, outcomes));
        }
    }
    let (_, idx, outcomes) = best.expect("at least one candidate");
    let selected = candidates[idx].label.clone();
    let failures: Vec<(u64, String)> = outcomes
        .iter()
        .filter_map(|o| o.error.clone().map(|e| (o.seed, e)))
        .collect();
    let per_seed: Vec<Vec<TraceRow>> = outcomes.iter().map(|o| o.rows.clone()).collect();
    let summary = summarize(&per_seed, failures.len(), &selected);
    Ok(ExperimentResult {
        trace: per_seed.into_iter().flatten().collect(),
        summary,
        failures,
        selected,
        scores,
        final_iterates: outcomes.into_iter().map(|o| o.w).collect(),
    })
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the trace and summary CSVs of a finished run.
pub fn write_outputs(cfg: &ExperimentConfig, result: &ExperimentResult) -> Result<()> {
    write_trace(create(&cfg.output)?, &result.trace)?;
    write_summary(create(&cfg.summary_path())?, &result.summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::SolverConfig;
    use crate::losses::LossKind;
    use crate::sampling::RegularizationSchedule;
    use crate::solvers::StepRule;

    fn config(n: usize, batch: usize, epochs: usize, solver: SolverConfig) -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetConfig::Synthetic {
                n,
                d: 4,
                margin: 0.1,
                seed: 3,
            },
            split: None,
            split_seed: 0,
            loss: LossKind::Logistic,
            epochs,
            batch_size: batch,
            seeds: vec![5, 6],
            output: "unused.csv".into(),
            solver,
        }
    }

    fn rssn() -> SolverConfig {
        SolverConfig::Rssn {
            grad_batch: None,
            hess_batch: None,
            tau: RegularizationSchedule::Constant { tau0: 1e-3 },
            cg: Default::default(),
            step: StepRule::default(),
        }
    }

    #[test]
    fn full_batch_takes_one_step_per_epoch() {
        let cfg = config(50, 50, 3, rssn());
        let r = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let first: Vec<_> = r.trace.iter().filter(|t| t.seed == 5).collect();
        assert_eq!(first.len(), 4);
        for (k, row) in first.iter().enumerate() {
            assert_eq!(row.iteration, k as u64);
            assert_eq!(row.epoch, k as f64);
        }
    }

    #[test]
    fn iterations_per_epoch_follow_batch_size() {
        let cfg = config(1000, 100, 2, rssn());
        let r = run_experiment(&cfg, &RunOptions { threads: Some(1) }).unwrap();
        let last = r.trace.iter().rfind(|t| t.seed == 5).unwrap();
        assert_eq!(last.iteration, 20);
        assert_eq!(last.epoch, 2.0);
        assert!(r.failures.is_empty());
    }

    #[test]
    fn rows_are_seed_then_epoch_ordered() {
        let cfg = config(40, 10, 2, rssn());
        let r = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let seeds: Vec<u64> = r.trace.iter().map(|t| t.seed).collect();
        assert_eq!(seeds, vec![5, 5, 5, 6, 6, 6]);
        assert_eq!(r.summary.len(), 3);
        let mean = (r.trace[2].train_loss + r.trace[5].train_loss) / 2.0;
        assert!((r.summary[2].train_loss_mean - mean).abs() <= 1e-15 * mean);
    }

    #[test]
    fn failing_solver_is_reported() {
        // a NaN step size poisons the first iterate
        let mut solver = rssn();
        if let SolverConfig::Rssn { step, .. } = &mut solver {
            *step = StepRule::Fixed { eta: f64::NAN };
        }
        let cfg = config(40, 10, 2, solver);
        let r = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(r.failures.len(), 2);
        assert_eq!(r.summary[0].seeds_failed, 2);
        // the initial row is still flushed
        assert_eq!(r.trace.len(), 2);
    }

    #[test]
    fn grid_picks_lowest_mean_loss() {
        let solver = SolverConfig::Slbfgs {
            batch: None,
            memory: 5,
            eps_curv: 1e-8,
            lambda_reg: 1e-4,
            step: crate::solvers::LbfgsStep::Grid {
                steps: vec![1e-4, 0.5],
            },
        };
        let cfg = config(60, 10, 3, solver);
        let r = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(r.scores.len(), 2);
        let best = r
            .scores
            .iter()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert_eq!(r.selected, best.0);
    }
}
