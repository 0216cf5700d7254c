//! Trace and summary tables, written as CSV with fixed headers.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Measurements at one epoch boundary of one seed. `cg_iters`, `ls_evals`
/// and `wall_clock_seconds` cover the iterations since the previous row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seed: u64,
    pub epoch: f64,
    pub iteration: u64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub grad_norm: f64,
    pub batch_size: usize,
    pub tau: f64,
    pub step_size: f64,
    pub cg_iters: usize,
    pub ls_evals: usize,
    pub wall_clock_seconds: f64,
}

pub const TRACE_HEADER: [&str; 12] = [
    "seed",
    "epoch",
    "iteration",
    "train_loss",
    "test_accuracy",
    "grad_norm",
    "batch_size",
    "tau",
    "step_size",
    "cg_iters",
    "ls_evals",
    "wall_clock_seconds",
];

/// Cross-seed statistics for the `row`-th trace row of every seed that got
/// that far. Standard deviations use the `n - 1` denominator and are 0 for a
/// single seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub row: usize,
    pub epoch_mean: f64,
    pub train_loss_mean: f64,
    pub train_loss_std: f64,
    pub test_accuracy_mean: f64,
    pub test_accuracy_std: f64,
    pub grad_norm_mean: f64,
    pub wall_clock_seconds_mean: f64,
    pub seeds: usize,
    pub seeds_failed: usize,
    /// Grid candidate that produced the trace, empty without a grid.
    pub selected: String,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Groups rows by position within each seed; `traces` holds one vector per seed.
pub fn summarize(traces: &[Vec<TraceRow>], seeds_failed: usize, selected: &str) -> Vec<SummaryRow> {
    let longest = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..longest)
        .map(|row| {
            let rows: Vec<&TraceRow> = traces.iter().filter_map(|t| t.get(row)).collect();
            let col = |f: fn(&TraceRow) -> f64| rows.iter().map(|r| f(r)).collect::<Vec<_>>();
            let (epoch_mean, _) = mean_std(&col(|r| r.epoch));
            let (train_loss_mean, train_loss_std) = mean_std(&col(|r| r.train_loss));
            let (test_accuracy_mean, test_accuracy_std) = mean_std(&col(|r| r.test_accuracy));
            let (grad_norm_mean, _) = mean_std(&col(|r| r.grad_norm));
            let (wall_clock_seconds_mean, _) = mean_std(&col(|r| r.wall_clock_seconds));
            SummaryRow {
                row,
                epoch_mean,
                train_loss_mean,
                train_loss_std,
                test_accuracy_mean,
                test_accuracy_std,
                grad_norm_mean,
                wall_clock_seconds_mean,
                seeds: rows.len(),
                seeds_failed,
                selected: selected.to_string(),
            }
        })
        .collect()
}

fn write_rows<W: Write, T: Serialize>(out: W, header: Option<&[&str]>, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(header.is_none())
        .from_writer(out);
    if let Some(h) = header {
        w.write_record(h)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    // the header is written explicitly so an empty trace still has one
    write_rows(out, Some(&TRACE_HEADER), rows)
}

pub const SUMMARY_HEADER: [&str; 11] = [
    "row",
    "epoch_mean",
    "train_loss_mean",
    "train_loss_std",
    "test_accuracy_mean",
    "test_accuracy_std",
    "grad_norm_mean",
    "wall_clock_seconds_mean",
    "seeds",
    "seeds_failed",
    "selected",
];

pub fn write_summary<W: Write>(out: W, rows: &[SummaryRow]) -> Result<()> {
    write_rows(out, Some(&SUMMARY_HEADER), rows)
}

pub fn read_trace<R: std::io::Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRow>, _>>()?;
    Ok(rows)
}
