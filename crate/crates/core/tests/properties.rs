use std::io::BufReader;

use proptest::prelude::*;
use rand::Rng;
use ssn_core::data::{parse_libsvm_with_dim, read_margin_cache, write_libsvm, write_margin_cache};
use ssn_core::diagnostics::dense_decrement_sq;
use ssn_core::harness::{
    read_trace, run_experiment, write_outputs, ExperimentConfig, RunOptions, SolverConfig,
};
use ssn_core::sampling::rng_from_seed;
use ssn_core::solvers::{rssn_step, Problem, RssnConfig, SolverState, StepRule};
use ssn_core::*;

type SparseRows = (usize, Vec<Vec<(usize, f64)>>, Vec<f64>);

fn sparse_rows() -> impl Strategy<Value = SparseRows> {
    (1usize..12, 1usize..15).prop_flat_map(|(d, n)| {
        let row = proptest::collection::btree_map(0..d, -1e3f64..1e3, 0..=d)
            .prop_map(|m| m.into_iter().filter(|(_, v)| *v != 0.0).collect::<Vec<_>>());
        (
            Just(d),
            proptest::collection::vec(row, n),
            proptest::collection::vec(prop_oneof![Just(-1.0), Just(1.0)], n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn libsvm_round_trip((d, rows, labels) in sparse_rows()) {
        let data = Dataset::sparse(d, rows, labels).unwrap();
        let mut buf = Vec::new();
        write_libsvm(&data, &mut buf).unwrap();
        let back = parse_libsvm_with_dim(BufReader::new(buf.as_slice()), d).unwrap();
        prop_assert_eq!(back.d(), d);
        prop_assert_eq!(back.n(), data.n());
        for i in 0..data.n() {
            prop_assert_eq!(back.row(i).entries(), data.row(i).entries());
            prop_assert_eq!(back.label(i), data.label(i));
        }
    }
}

#[test]
fn margin_cache_round_trip() {
    let spec = MarginSpec {
        n: 25,
        d: 6,
        margin: 0.2,
        seed: 5,
    };
    let (data, sep) = generate_margin_dataset(&spec).unwrap();
    let mut buf = Vec::new();
    write_margin_cache(&data, &spec, &sep, &mut buf).unwrap();
    let (back, header) = read_margin_cache(BufReader::new(buf.as_slice())).unwrap();
    assert_eq!(header.separator, sep);
    assert_eq!(header.seed, 5);
    assert_eq!(back, data.to_dense());
}

#[test]
fn cg_decrement_matches_dense_solve() {
    let mut rng = rng_from_seed(12);
    for trial in 0..10 {
        let d = 2 + trial % 9;
        let n = 40;
        let values = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let labels = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        let data = Dataset::dense(d, values, labels).unwrap();
        let problem = Problem::new(LossKind::Logistic, &data);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cfg = RssnConfig {
            grad_schedule: BatchSchedule::Constant { b: n },
            hess_schedule: None,
            tau: RegularizationSchedule::Constant { tau0: 0.05 },
            cg: CgConfig::new(1e-14, 200),
            step: StepRule::Fixed { eta: 1.0 },
        };
        let mut state = SolverState::new(w.clone(), n, 0);
        let info = rssn_step(&mut state, &problem, &cfg).unwrap();
        let g = problem.gradient(&w).unwrap();
        let dense = dense_decrement_sq(LossKind::Logistic, &data, &Batch::full(n), &w, 0.05, &g).unwrap();
        let lam2 = info.decrement.unwrap().powi(2);
        assert!((lam2 - dense).abs() <= 1e-8 * dense, "{lam2} vs {dense}");
    }
}

fn config_text(solver: &str, output: &str) -> String {
    format!(
        r#"
loss = "logistic"
epochs = 3
batch_size = 20
seeds = [0, 1]
output = "{output}"
split = 0.75

[dataset]
kind = "synthetic"
n = 200
d = 6
margin = 0.1
seed = 4

[solver]
{solver}
"#
    )
}

const SOLVERS: [&str; 10] = [
    "kind = \"rssn\"\ntau = { kind = \"gradient_proportional\", tau0 = 1.0 }",
    "kind = \"sc_rssn\"\nconstants = { mu_tilde = 0.0, l_tilde = 0.25, l = 0.25, d_bound = 10.0, tau = 0.25, rho = 2.0 }",
    "kind = \"slbfgs\"\nstep = { kind = \"grid\", steps = [0.01, 0.5] }",
    "kind = \"sgd\"",
    "kind = \"sgd_polyak\"",
    "kind = \"svrg\"\neta = 0.5",
    "kind = \"adam\"",
    "kind = \"adagrad\"",
    "kind = \"newton\"\ntau_floor = 1e-8",
    "kind = \"lbfgs\"",
];

#[test]
fn every_solver_runs_and_decreases_loss() {
    for solver in SOLVERS {
        let cfg = ExperimentConfig::from_toml_str(&config_text(solver, "t.csv")).unwrap();
        let res = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert!(res.failures.is_empty(), "{solver}: {:?}", res.failures);
        let first = res.summary.first().unwrap().train_loss_mean;
        let last = res.summary.last().unwrap().train_loss_mean;
        assert!(last < first, "{solver}: {first} -> {last}");
        assert!(res.trace.iter().all(|r| r.test_accuracy >= 0.0 && r.test_accuracy <= 1.0));
        let name = cfg.solver.name();
        assert!(!name.is_empty());
        if matches!(cfg.solver, SolverConfig::Newton { .. } | SolverConfig::Lbfgs { .. }) {
            // one full pass per iteration
            assert!(res.trace.iter().all(|r| r.iteration as f64 == r.epoch));
        }
    }
}

#[test]
fn trace_files_identical_modulo_wall_clock() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| {
        let text = config_text(SOLVERS[0], name);
        let mut cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        cfg.resolve_paths(dir.path());
        let res = run_experiment(&cfg, &RunOptions::default()).unwrap();
        write_outputs(&cfg, &res).unwrap();
        assert!(cfg.summary_path().exists());
        let text = std::fs::read_to_string(&cfg.output).unwrap();
        let rows = read_trace(text.as_bytes()).unwrap();
        // drop the last column (wall clock) from the raw text
        let stripped: Vec<String> = text
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect();
        (rows.len(), stripped)
    };
    let (n1, a) = read("a.csv");
    let (n2, b) = read("b.csv");
    assert_eq!(n1, n2);
    assert_eq!(n1, 2 * 4);
    assert_eq!(a, b);
}

#[test]
fn summary_means_match_trace() {
    let cfg = ExperimentConfig::from_toml_str(&config_text(SOLVERS[3], "t.csv")).unwrap();
    let res = run_experiment(&cfg, &RunOptions::default()).unwrap();
    for s in &res.summary {
        let vals: Vec<f64> = cfg
            .seeds
            .iter()
            .map(|seed| res.trace.iter().filter(|r| r.seed == *seed).nth(s.row).unwrap().test_accuracy)
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((s.test_accuracy_mean - mean).abs() < 1e-15);
    }
}
