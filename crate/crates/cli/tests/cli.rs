use std::path::Path;
use std::process::{Command, Output};

use ssn_core::data::read_margin_cache;

fn ssn_opt(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssn-opt"))
        .args(args)
        .current_dir(dir)
        .env_remove("SSN_OPT_SEED")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssn_opt(&["run", "missing.toml"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("missing.toml"), "{}", stderr(&out));
}

#[test]
fn generate_data_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssn_opt(
        &["--quiet", "generate-data", "--n", "100", "--d", "20", "--margin", "0.1", "--seed", "7", "--out", "sub/d.svm"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let file = std::fs::File::open(dir.path().join("sub/d.svm")).unwrap();
    let (data, header) = read_margin_cache(std::io::BufReader::new(file)).unwrap();
    assert_eq!(data.n(), 100);
    assert_eq!(data.d(), 20);
    assert_eq!(header.seed, 7);
    assert_eq!(header.margin, 0.1);
    for i in 0..data.n() {
        let m = data.label(i) * data.row(i).dot(&header.separator);
        assert!(m >= 0.1 - 1e-12, "row {i} margin {m}");
    }
}

#[test]
fn run_writes_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"
loss = "squared_hinge"
epochs = 2
batch_size = 10
seeds = [0, 1]
output = "out/trace.csv"

[dataset]
kind = "synthetic"
n = 60
d = 4
margin = 0.1
seed = 2

[solver]
kind = "rssn"
tau = { kind = "constant", tau0 = 1e-3 }
"#;
    std::fs::write(dir.path().join("exp.toml"), config).unwrap();
    let out = ssn_opt(&["--threads", "1", "--quiet", "run", "exp.toml"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let trace = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(trace.starts_with("seed,epoch,iteration,train_loss"));
    // header plus epochs 0..=2 for two seeds
    assert_eq!(trace.lines().count(), 7);
    assert!(dir.path().join("out/trace.summary.csv").exists());
}

#[test]
fn bad_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "epochs = 1\nunknown_key = 3\n").unwrap();
    let out = ssn_opt(&["run", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssn_opt(&["verify"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 failed"));
}

#[test]
fn unknown_flag_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ssn_opt(&["--no-such-flag"], dir.path()).status.code(), Some(2));
    assert_eq!(ssn_opt(&["no-such-command"], dir.path()).status.code(), Some(2));
}

#[test]
fn estimate_reports_constants() {
    let dir = tempfile::tempdir().unwrap();
    let gen = ssn_opt(
        &["--quiet", "generate-data", "--n", "50", "--d", "5", "--margin", "0.1", "--out", "d.svm"],
        dir.path(),
    );
    assert!(gen.status.success());
    let out = ssn_opt(&["estimate", "--data", "d.svm", "--probes", "2"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8_lossy(&out.stdout);
    let value = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(key)).unwrap();
        line.split_whitespace().last().unwrap().parse().unwrap()
    };
    assert!(value("rho") >= 1.0);
    assert!(value("mu_full") > 0.0);
    assert!(value("L_full") >= value("mu_full"));
    assert!(value("L_tilde") >= value("L_full"));
}
