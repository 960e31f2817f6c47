//! Summaries of batch results: terminal-wealth histograms, fill-type counts
//! and per-step path snapshots.

use thiserror::Error;

use crate::fills::{FillCounters, FillKind, Side};
use crate::sim::{BatchResult, SimResult};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("EmptyValues: no values to bin")]
    EmptyValues,
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `counts.len() + 1` increasing edges.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Equal-width bins over `[min, max]`; the maximum falls in the last bin.
/// A zero-width range is widened to one unit starting at the common value.
pub fn terminal_cash_histogram(values: &[f64], n_bins: usize) -> Result<Histogram, ReportError> {
    if values.is_empty() {
        return Err(ReportError::EmptyValues);
    }
    if n_bins == 0 {
        return Err(ReportError::InvalidArgument("n_bins must be at least 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ReportError::InvalidArgument("values must be finite".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 / n_bins as f64 };
    let bin_edges: Vec<f64> = (0..=n_bins).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    Ok(Histogram { bin_edges, counts })
}

/// Rows `AFA`, `NFA`, `AFB`, `NFB` with their aggregate counts.
pub fn fill_summary(counters: &FillCounters) -> Vec<(&'static str, u64)> {
    vec![
        ("AFA", counters.afa),
        ("NFA", counters.nfa),
        ("AFB", counters.afb),
        ("NFB", counters.nfb),
    ]
}

pub fn summarize_fills(batch: &BatchResult) -> Vec<(&'static str, u64)> {
    fill_summary(&batch.fill_totals)
}

/// One row of a path snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRow {
    pub t_index: usize,
    pub bid: f64,
    pub ask: f64,
    pub mid: f64,
    pub posted_bid: bool,
    pub posted_ask: bool,
    /// `bid`, `ask`, `ask+bid` or empty.
    pub fill_side: String,
    pub fill_kind: String,
    pub q: i32,
    pub cash: f64,
    pub wealth: f64,
}

/// Per-sample view of a window. Fills in step `i -> i + 1` are reported on row `i`.
pub fn snapshot_rows(result: &SimResult) -> Vec<SnapshotRow> {
    let n = result.posted_bid.len();
    (0..=n)
        .map(|i| {
            let fills: Vec<_> = result.fills.iter().filter(|f| f.t_index == i).collect();
            let join = |f: &dyn Fn(Side, FillKind) -> &'static str| {
                fills
                    .iter()
                    .map(|e| f(e.side, e.kind))
                    .collect::<Vec<_>>()
                    .join("+")
            };
            SnapshotRow {
                t_index: i,
                bid: result.bid[i],
                ask: result.ask[i],
                mid: result.mid[i],
                posted_bid: i < n && result.posted_bid[i],
                posted_ask: i < n && result.posted_ask[i],
                fill_side: join(&|s, _| s.as_str()),
                fill_kind: join(&|_, k| k.as_str()),
                q: result.inventory[i],
                cash: result.cash[i],
                wealth: result.wealth[i],
            }
        })
        .collect()
}
