use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use ssn_core::data::{generate_margin_dataset, parse_libsvm, write_margin_cache, MarginSpec};
use ssn_core::diagnostics::{estimate_curvature, random_probes};
use ssn_core::harness::{run_experiment, write_outputs, ExperimentConfig, RunOptions};
use ssn_core::sampling::rng_from_seed;
use ssn_core::{Error, LossKind};

mod verify;

#[derive(Parser, Debug)]
#[command(name = "ssn-opt", version, about = "Subsampled Newton and baseline optimizers for binary classification")]
struct Cli {
    /// Maximum number of seeds run in parallel.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Only print warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LossArg {
    Logistic,
    SquaredHinge,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Logistic => LossKind::Logistic,
            LossArg::SquaredHinge => LossKind::SquaredHinge,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run { config: PathBuf },
    /// Write a separable synthetic dataset in LIBSVM format.
    GenerateData {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        margin: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the growth constant and Hessian eigenvalue bounds for a dataset.
    Estimate {
        /// LIBSVM file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = LossArg::Logistic)]
        loss: LossArg,
        /// Number of random probe points besides the origin.
        #[arg(long, default_value_t = 10)]
        probes: usize,
        /// Standard deviation of the probe coordinates.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Batch size for the batch Hessian spectra; defaults to n.
        #[arg(long)]
        batch: Option<usize>,
        /// Batches drawn per probe.
        #[arg(long, default_value_t = 4)]
        batches: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the built-in oracle checks.
    Verify,
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let result = run_experiment(&cfg, &RunOptions { threads: cli.threads })?;
            write_outputs(&cfg, &result)?;
            if !result.selected.is_empty() {
                info!("selected {}", result.selected);
            }
            if let Some(last) = result.summary.last() {
                println!(
                    "epoch {:.2}: train loss {:.6e} (std {:.2e}), test accuracy {:.4}",
                    last.epoch_mean, last.train_loss_mean, last.train_loss_std, last.test_accuracy_mean
                );
            }
            println!("trace: {}", cfg.output.display());
            println!("summary: {}", cfg.summary_path().display());
            if result.failures.is_empty() {
                Ok(ExitCode::SUCCESS)
            } else {
                for (seed, msg) in &result.failures {
                    eprintln!("seed {seed} failed: {msg}");
                }
                Ok(ExitCode::FAILURE)
            }
        }
        Command::GenerateData {
            n,
            d,
            margin,
            seed,
            out,
        } => {
            let spec = MarginSpec { n, d, margin, seed };
            let (data, sep) = generate_margin_dataset(&spec)?;
            if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            let mut w = BufWriter::new(File::create(&out).map_err(io_err(&out))?);
            write_margin_cache(&data, &spec, &sep, &mut w).map_err(io_err(&out))?;
            w.flush().map_err(io_err(&out))?;
            info!("wrote {n} rows with {d} features to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Estimate {
            data,
            loss,
            probes,
            scale,
            batch,
            batches,
            seed,
        } => {
            let ds = parse_libsvm(BufReader::new(File::open(&data).map_err(io_err(&data))?))?;
            let mut rng = rng_from_seed(seed);
            let mut points = vec![vec![0.0; ds.d()]];
            points.extend(random_probes(ds.d(), probes, scale, &mut rng));
            let b = batch.unwrap_or(ds.n()).clamp(1, ds.n());
            let est = estimate_curvature(loss.into(), &ds, &points, b, batches.max(1), &mut rng)?;
            println!("n = {}, d = {}, probes = {}", ds.n(), ds.d(), points.len());
            println!("rho          {:.6e}", est.rho);
            println!("mu_full      {:.6e}", est.mu_full);
            println!("L_full       {:.6e}", est.l_full);
            println!("mu_S (b={b}) {:.6e}", est.mu_s);
            println!("mu_bar       {:.6e}", est.mu_bar);
            println!("L_S (b={b})  {:.6e}", est.l_s);
            println!("L_tilde      {:.6e}", est.l_tilde);
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let checks = verify::run_all();
            let mut failed = 0;
            for c in &checks {
                println!("{:<6} {:<46} {}", if c.passed { "ok" } else { "FAILED" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            println!("{} checks, {failed} failed", checks.len());
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
