//! Experiment configuration, read from TOML. Unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cg::CgConfig;
use crate::error::{Error, Result};
use crate::linesearch::LineSearchConfig;
use crate::losses::LossKind;
use crate::sampling::{BatchSchedule, RegularizationSchedule};
use crate::solvers::lbfgs::default_grid;
use crate::solvers::{
    FirstOrderKind, LbfgsStep, Method, RssnConfig, ScRssnConfig, SelfConcordantConstants, SgdStep,
    SlbfgsConfig, StepRule,
};

/// Overrides the seed list with a single seed.
pub const SEED_ENV: &str = "SSN_OPT_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Separable data with the given margin.
    Synthetic {
        n: usize,
        d: usize,
        margin: f64,
        seed: u64,
    },
    Libsvm {
        path: PathBuf,
        /// Held-out file; when absent, `split` (if any) carves one out.
        #[serde(default)]
        test_path: Option<PathBuf>,
        /// Replace features by an RBF kernel map against the training rows.
        #[serde(default)]
        rbf_bandwidth: Option<f64>,
    },
}

/// Inputs to the damped self-concordant update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScConstantsConfig {
    pub mu_tilde: f64,
    pub l_tilde: f64,
    pub l: f64,
    pub d_bound: f64,
    pub tau: f64,
    pub rho: f64,
}

fn default_memory() -> usize {
    10
}

fn default_eps_curv() -> f64 {
    1e-8
}

fn default_lambda_reg() -> f64 {
    1e-4
}

fn default_momentum_grid() -> Vec<f64> {
    vec![0.1, 0.5, 0.9]
}

fn default_lbfgs_step() -> LbfgsStep {
    LbfgsStep::Grid {
        steps: default_grid(),
    }
}

fn default_adam_eta() -> f64 {
    1e-3
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_adam_eps() -> f64 {
    1e-8
}

fn default_adagrad_eta() -> f64 {
    1e-2
}

fn default_adagrad_eps() -> f64 {
    1e-10
}

/// Solver choice and hyperparameters. Batch schedules default to a constant
/// batch of the experiment's `batch_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverConfig {
    Rssn {
        #[serde(default)]
        grad_batch: Option<BatchSchedule>,
        #[serde(default)]
        hess_batch: Option<BatchSchedule>,
        tau: RegularizationSchedule,
        #[serde(default)]
        cg: CgConfig,
        #[serde(default)]
        step: StepRule,
    },
    ScRssn {
        #[serde(default)]
        grad_batch: Option<BatchSchedule>,
        #[serde(default)]
        hess_batch: Option<BatchSchedule>,
        constants: ScConstantsConfig,
        #[serde(default)]
        cg: CgConfig,
    },
    Slbfgs {
        #[serde(default)]
        batch: Option<BatchSchedule>,
        #[serde(default = "default_memory")]
        memory: usize,
        #[serde(default = "default_eps_curv")]
        eps_curv: f64,
        #[serde(default = "default_lambda_reg")]
        lambda_reg: f64,
        #[serde(default = "default_lbfgs_step")]
        step: LbfgsStep,
    },
    Sgd {
        #[serde(default)]
        batch: Option<BatchSchedule>,
        #[serde(default)]
        step: SgdStep,
    },
    /// Heavy-ball SGD; each momentum value is a grid candidate.
    SgdPolyak {
        #[serde(default)]
        batch: Option<BatchSchedule>,
        #[serde(default)]
        step: SgdStep,
        #[serde(default = "default_momentum_grid")]
        momentum: Vec<f64>,
    },
    Svrg {
        #[serde(default)]
        batch: Option<BatchSchedule>,
        eta: f64,
        #[serde(default)]
        inner: Option<usize>,
    },
    Adam {
        #[serde(default)]
        batch: Option<BatchSchedule>,
        #[serde(default = "default_adam_eta")]
        eta: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
    },
    Adagrad {
        #[serde(default)]
        batch: Option<BatchSchedule>,
        #[serde(default = "default_adagrad_eta")]
        eta: f64,
        #[serde(default = "default_adagrad_eps")]
        eps: f64,
    },
    Newton {
        #[serde(default)]
        tau_floor: f64,
    },
    Lbfgs {
        #[serde(default = "default_memory")]
        memory: usize,
        #[serde(default)]
        line_search: LineSearchConfig,
    },
}

/// One concrete method from a (possibly gridded) solver config.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    /// Empty for configs without a grid, otherwise e.g. `step=0.1`.
    pub label: String,
    pub method: Method,
}

impl SolverConfig {
    pub fn name(&self) -> &'static str {
        match self {
            SolverConfig::Rssn { .. } => "rssn",
            SolverConfig::ScRssn { .. } => "sc_rssn",
            SolverConfig::Slbfgs { .. } => "slbfgs",
            SolverConfig::Sgd { .. } => "sgd",
            SolverConfig::SgdPolyak { .. } => "sgd_polyak",
            SolverConfig::Svrg { .. } => "svrg",
            SolverConfig::Adam { .. } => "adam",
            SolverConfig::Adagrad { .. } => "adagrad",
            SolverConfig::Newton { .. } => "newton",
            SolverConfig::Lbfgs { .. } => "lbfgs",
        }
    }

    /// Expands grids into concrete methods, filling unset batch schedules
    /// with a constant batch of size `batch_size`.
    pub fn candidates(&self, batch_size: usize) -> Result<Vec<Candidate>> {
        let fill = |b: &Option<BatchSchedule>| b.unwrap_or(BatchSchedule::Constant { b: batch_size });
        let single = |method| {
            vec![Candidate {
                label: String::new(),
                method,
            }]
        };
        let out = match self {
            SolverConfig::Rssn {
                grad_batch,
                hess_batch,
                tau,
                cg,
                step,
            } => single(Method::Rssn(RssnConfig {
                grad_schedule: fill(grad_batch),
                hess_schedule: *hess_batch,
                tau: *tau,
                cg: *cg,
                step: *step,
            })),
            SolverConfig::ScRssn {
                grad_batch,
                hess_batch,
                constants: c,
                cg,
            } => {
                let constants =
                    SelfConcordantConstants::derive(c.mu_tilde, c.l_tilde, c.l, c.d_bound, c.tau, c.rho);
                constants.validate()?;
                single(Method::ScRssn(ScRssnConfig {
                    grad_schedule: fill(grad_batch),
                    hess_schedule: *hess_batch,
                    constants,
                    cg: *cg,
                }))
            }
            SolverConfig::Slbfgs {
                batch,
                memory,
                eps_curv,
                lambda_reg,
                step,
            } => {
                let make = |step: LbfgsStep| Method::Slbfgs {
                    config: SlbfgsConfig {
                        batch: fill(batch),
                        eps_curv: *eps_curv,
                        lambda_reg: *lambda_reg,
                        step,
                    },
                    memory: *memory,
                };
                match step {
                    LbfgsStep::Grid { steps } => {
                        if steps.is_empty() {
                            return Err(Error::Config("slbfgs step grid is empty".into()));
                        }
                        steps
                            .iter()
                            .map(|&eta| Candidate {
                                label: format!("step={eta}"),
                                method: make(LbfgsStep::Fixed { eta }),
                            })
                            .collect()
                    }
                    other => single(make(other.clone())),
                }
            }
            SolverConfig::Sgd { batch, step } => single(Method::FirstOrder {
                schedule: fill(batch),
                kind: FirstOrderKind::Sgd { step: *step },
            }),
            SolverConfig::SgdPolyak {
                batch,
                step,
                momentum,
            } => {
                if momentum.is_empty() {
                    return Err(Error::Config("momentum grid is empty".into()));
                }
                momentum
                    .iter()
                    .map(|&m| Candidate {
                        label: format!("momentum={m}"),
                        method: Method::FirstOrder {
                            schedule: fill(batch),
                            kind: FirstOrderKind::SgdPolyak {
                                step: *step,
                                momentum: m,
                            },
                        },
                    })
                    .collect()
            }
            SolverConfig::Svrg { batch, eta, inner } => single(Method::FirstOrder {
                schedule: fill(batch),
                kind: FirstOrderKind::Svrg {
                    eta: *eta,
                    inner: *inner,
                },
            }),
            SolverConfig::Adam {
                batch,
                eta,
                beta1,
                beta2,
                eps,
            } => single(Method::FirstOrder {
                schedule: fill(batch),
                kind: FirstOrderKind::Adam {
                    eta: *eta,
                    beta1: *beta1,
                    beta2: *beta2,
                    eps: *eps,
                },
            }),
            SolverConfig::Adagrad { batch, eta, eps } => single(Method::FirstOrder {
                schedule: fill(batch),
                kind: FirstOrderKind::Adagrad {
                    eta: *eta,
                    eps: *eps,
                },
            }),
            SolverConfig::Newton { tau_floor } => single(Method::Newton {
                tau_floor: *tau_floor,
            }),
            SolverConfig::Lbfgs {
                memory,
                line_search,
            } => {
                line_search.validate()?;
                single(Method::Lbfgs {
                    memory: *memory,
                    line_search: *line_search,
                })
            }
        };
        Ok(out)
    }

    fn schedules(&self) -> Vec<BatchSchedule> {
        let opt = |b: &Option<BatchSchedule>| b.iter().copied().collect::<Vec<_>>();
        match self {
            SolverConfig::Rssn {
                grad_batch,
                hess_batch,
                ..
            }
            | SolverConfig::ScRssn {
                grad_batch,
                hess_batch,
                ..
            } => [opt(grad_batch), opt(hess_batch)].concat(),
            SolverConfig::Slbfgs { batch, .. }
            | SolverConfig::Sgd { batch, .. }
            | SolverConfig::SgdPolyak { batch, .. }
            | SolverConfig::Svrg { batch, .. }
            | SolverConfig::Adam { batch, .. }
            | SolverConfig::Adagrad { batch, .. } => opt(batch),
            SolverConfig::Newton { .. } | SolverConfig::Lbfgs { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Fraction of rows kept for training; the rest is the test set.
    #[serde(default)]
    pub split: Option<f64>,
    /// Seed of the train/test split.
    #[serde(default)]
    pub split_seed: u64,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    /// Trace CSV; the summary goes next to it with a `.summary.csv` suffix.
    pub output: PathBuf,
    pub solver: SolverConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_static()?;
        Ok(cfg)
    }

    /// Reads the file, applies the seed environment override and resolves
    /// relative paths against the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        if let DatasetConfig::Libsvm {
            path, test_path, ..
        } = &mut self.dataset
        {
            fix(path);
            if let Some(t) = test_path {
                fix(t);
            }
        }
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            let seed = v
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
            self.seeds = vec![seed];
        }
        Ok(())
    }

    fn check_static(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 {
            return fail("epochs must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if let Some(f) = self.split {
            if !(f > 0.0 && f < 1.0) {
                return fail(format!("split must lie in (0, 1), got {f}"));
            }
        }
        if let DatasetConfig::Libsvm {
            test_path: Some(_), ..
        } = &self.dataset
        {
            if self.split.is_some() {
                return fail("give either dataset.test_path or split, not both".into());
            }
        }
        Ok(())
    }

    /// Checks that depend on the training set size.
    pub fn check_against(&self, n: usize) -> Result<()> {
        if self.batch_size > n {
            return Err(Error::Config(format!(
                "batch_size {} exceeds the {n} training rows",
                self.batch_size
            )));
        }
        for s in self.solver.schedules() {
            s.validate(n)?;
        }
        Ok(())
    }

    /// Path of the per-epoch summary written next to the trace.
    pub fn summary_path(&self) -> PathBuf {
        summary_path_for(&self.output)
    }
}

pub fn summary_path_for(trace: &Path) -> PathBuf {
    let stem = trace
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "trace".into());
    trace.with_file_name(format!("{stem}.summary.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
loss = "squared_hinge"
epochs = 3
batch_size = 10
seeds = [1, 2]
output = "out/trace.csv"

[dataset]
kind = "synthetic"
n = 100
d = 5
margin = 0.1
seed = 7
"#;

    fn with_solver(solver: &str) -> String {
        format!("{BASE}\n[solver]\n{solver}")
    }

    #[test]
    fn parses_rssn_with_defaults() {
        let cfg = ExperimentConfig::from_toml_str(&with_solver(
            "kind = \"rssn\"\ntau = { kind = \"constant\", tau0 = 0.001 }",
        ))
        .unwrap();
        let c = cfg.solver.candidates(cfg.batch_size).unwrap();
        assert_eq!(c.len(), 1);
        match &c[0].method {
            Method::Rssn(r) => {
                assert_eq!(r.grad_schedule, BatchSchedule::Constant { b: 10 });
                assert_eq!(r.step, StepRule::default());
                assert_eq!(r.cg, CgConfig::default());
            }
            m => panic!("{m:?}"),
        }
    }

    #[test]
    fn parses_nested_schedules_and_steps() {
        let cfg = ExperimentConfig::from_toml_str(&with_solver(
            r#"kind = "rssn"
tau = { kind = "gradient_proportional", tau0 = 0.5 }
grad_batch = { kind = "geometric", b0 = 10, factor = 1.01, cap = 100 }
step = { kind = "line_search", armijo_c = 0.2 }
cg = { tol = 1e-8, max_iter = 7 }
"#,
        ))
        .unwrap();
        let SolverConfig::Rssn { step, cg, grad_batch, .. } = &cfg.solver else {
            panic!()
        };
        assert_eq!(cg.max_iter, Some(7));
        assert_eq!(
            *grad_batch,
            Some(BatchSchedule::Geometric {
                b0: 10,
                factor: 1.01,
                cap: 100
            })
        );
        match step {
            StepRule::LineSearch { config } => {
                assert_eq!(config.armijo_c, 0.2);
                assert_eq!(config.backtrack_factor, LineSearchConfig::default().backtrack_factor);
            }
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn grids_expand() {
        let cfg = ExperimentConfig::from_toml_str(&with_solver("kind = \"slbfgs\"")).unwrap();
        let c = cfg.solver.candidates(10).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(c[0].label, "step=0.0001");
        let cfg = ExperimentConfig::from_toml_str(&with_solver("kind = \"sgd_polyak\"")).unwrap();
        assert_eq!(cfg.solver.candidates(10).unwrap().len(), 3);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let bad = format!("{BASE}\nepohcs = 2\n");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = with_solver("kind = \"adam\"\nlearning_rate = 0.1");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = with_solver("kind = \"rssn\"\ntau = { kind = \"constant\", tau0 = 1.0, extra = 2 }");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn invariants_checked() {
        let zero = BASE.replace("epochs = 3", "epochs = 0");
        assert!(ExperimentConfig::from_toml_str(&with_solver_text(&zero, "kind = \"adam\"")).is_err());
        let empty = BASE.replace("seeds = [1, 2]", "seeds = []");
        assert!(ExperimentConfig::from_toml_str(&with_solver_text(&empty, "kind = \"adam\"")).is_err());
        let cfg = ExperimentConfig::from_toml_str(&with_solver("kind = \"adam\"")).unwrap();
        assert!(cfg.check_against(5).is_err());
        assert!(cfg.check_against(100).is_ok());
    }

    fn with_solver_text(base: &str, solver: &str) -> String {
        format!("{base}\n[solver]\n{solver}")
    }

    #[test]
    fn seed_override() {
        let mut cfg = ExperimentConfig::from_toml_str(&with_solver("kind = \"adam\"")).unwrap();
        cfg.apply_seed_override(None).unwrap();
        assert_eq!(cfg.seeds, vec![1, 2]);
        cfg.apply_seed_override(Some("42")).unwrap();
        assert_eq!(cfg.seeds, vec![42]);
        assert!(cfg.apply_seed_override(Some("x")).is_err());
    }

    #[test]
    fn summary_path_sits_next_to_trace() {
        assert_eq!(
            summary_path_for(Path::new("a/b/run.csv")),
            PathBuf::from("a/b/run.summary.csv")
        );
    }
}
