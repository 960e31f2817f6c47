//! CSV files written and read by the command-line tool. All files carry a
//! header row and LF line endings.

use std::io::{Read, Write};

use thiserror::Error;

use crate::fills::{FillEvent, FillKind, Side};
use crate::params::{MarketParams, SolverGrid};
use crate::poster::{FillLog, FillTypeRow};
use crate::report::{Histogram, SnapshotRow};
use crate::sim::BatchResult;
use crate::solver::{AlphaAxis, PostingPolicy, ValueSurface};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("SchemaMismatch: expected header {expected:?}, found {found:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("MalformedRow at line {line}: {msg}")]
    MalformedRow { line: u64, msg: String },
    #[error("PolicyShapeMismatch: {0}")]
    PolicyShapeMismatch(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub const SURFACE_HEADER: [&str; 4] = ["t_index", "alpha", "q", "h"];
pub const POLICY_HEADER: [&str; 6] = ["t_index", "alpha", "q", "h", "post_bid", "post_ask"];
pub const FILLS_HEADER: [&str; 5] = ["window", "t_index", "side", "price", "kind"];
pub const FILL_LOG_HEADER: [&str; 4] = ["t_index", "side", "price", "kind"];
pub const WEALTH_HEADER: [&str; 3] = ["window", "terminal_wealth", "objective"];
pub const HISTOGRAM_HEADER: [&str; 3] = ["bin_lo", "bin_hi", "count"];
pub const SUMMARY_HEADER: [&str; 2] = ["fill_type", "count"];
pub const TABLE2_HEADER: [&str; 5] = ["date", "contract", "total", "adverse", "non_adverse"];
pub const SNAPSHOT_HEADER: [&str; 11] = [
    "t_index", "bid", "ask", "mid", "posted_bid", "posted_ask", "fill_side", "fill_kind", "q",
    "cash", "wealth",
];

fn writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>, ExportError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

fn reader<R: Read>(input: R, header: &[&str]) -> Result<csv::Reader<R>, ExportError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(ExportError::SchemaMismatch {
            expected: header.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    Ok(r)
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, name: &str) -> Result<T, ExportError> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec.get(k).ok_or_else(|| ExportError::MalformedRow {
        line,
        msg: format!("missing {name}"),
    })?;
    raw.parse().map_err(|_| ExportError::MalformedRow {
        line,
        msg: format!("bad {name}: {raw:?}"),
    })
}

fn parse_flag(rec: &csv::StringRecord, k: usize, name: &str) -> Result<bool, ExportError> {
    match field::<u8>(rec, k, name)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(ExportError::MalformedRow {
            line: rec.position().map_or(0, |p| p.line()),
            msg: format!("bad {name}: {v}"),
        }),
    }
}

pub fn write_surface<W: Write>(surface: &ValueSurface, out: W) -> Result<(), ExportError> {
    let mut w = writer(out, &SURFACE_HEADER)?;
    let alphas = surface.alpha_nodes();
    for t in 0..=surface.n_dt {
        for q in surface.q_nodes() {
            for (a, h) in alphas.iter().zip(surface.row(t, q)) {
                w.write_record([t.to_string(), a.to_string(), q.to_string(), h.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_policy<W: Write>(
    surface: &ValueSurface,
    policy: &PostingPolicy,
    out: W,
) -> Result<(), ExportError> {
    let mut w = writer(out, &POLICY_HEADER)?;
    let alphas = surface.alpha_nodes();
    for t in 0..=surface.n_dt {
        for q in surface.q_nodes() {
            for (j, (a, h)) in alphas.iter().zip(surface.row(t, q)).enumerate() {
                w.write_record([
                    t.to_string(),
                    a.to_string(),
                    q.to_string(),
                    h.to_string(),
                    flag(policy.bid(t, j, q)).to_string(),
                    flag(policy.ask(t, j, q)).to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a policy file and checks that it covers exactly the `(t, q, alpha)`
/// nodes implied by `params` and `grid`, in the order [`write_policy`] emits.
pub fn read_policy<R: Read>(
    input: R,
    params: &MarketParams,
    grid: &SolverGrid,
) -> Result<PostingPolicy, ExportError> {
    let axis = AlphaAxis::from_grid(grid);
    let mut r = reader(input, &POLICY_HEADER)?;
    let mut post_bid = Vec::new();
    let mut post_ask = Vec::new();
    let mut expected = (0..=params.n_dt).flat_map(|t| {
        (-params.q_max..=params.q_max).flat_map(move |q| (0..axis.n).map(move |j| (t, q, j)))
    });
    for rec in r.records() {
        let rec = rec?;
        let t: usize = field(&rec, 0, "t_index")?;
        let alpha: f64 = field(&rec, 1, "alpha")?;
        let q: i32 = field(&rec, 2, "q")?;
        let Some((et, eq, ej)) = expected.next() else {
            return Err(ExportError::PolicyShapeMismatch(format!(
                "more rows than the {} expected",
                (params.n_dt + 1) * params.n_q() * axis.n
            )));
        };
        if (t, q) != (et, eq) || (alpha - axis.node(ej)).abs() > 1e-9 * axis.d_alpha.max(1.0) {
            return Err(ExportError::PolicyShapeMismatch(format!(
                "row (t={t}, alpha={alpha}, q={q}) where (t={et}, alpha={}, q={eq}) was expected",
                axis.node(ej)
            )));
        }
        post_bid.push(parse_flag(&rec, 4, "post_bid")?);
        post_ask.push(parse_flag(&rec, 5, "post_ask")?);
    }
    if expected.next().is_some() {
        return Err(ExportError::PolicyShapeMismatch(format!(
            "{} rows, expected {}",
            post_bid.len(),
            (params.n_dt + 1) * params.n_q() * axis.n
        )));
    }
    PostingPolicy::from_parts(axis, params.q_max, params.n_dt, post_bid, post_ask)
        .ok_or_else(|| ExportError::PolicyShapeMismatch("decision tensor size".into()))
}

pub fn write_fills<W: Write>(batch: &BatchResult, out: W) -> Result<(), ExportError> {
    let mut w = writer(out, &FILLS_HEADER)?;
    for (k, win) in batch.windows.iter().enumerate() {
        for f in &win.fills {
            w.write_record([
                k.to_string(),
                f.t_index.to_string(),
                f.side.to_string(),
                f.price.to_string(),
                f.kind.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_fill(rec: &csv::StringRecord, offset: usize) -> Result<FillEvent, ExportError> {
    let line = rec.position().map_or(0, |p| p.line());
    let side = rec
        .get(offset + 1)
        .and_then(Side::parse)
        .ok_or_else(|| ExportError::MalformedRow { line, msg: "bad side".into() })?;
    let kind = rec
        .get(offset + 3)
        .and_then(FillKind::parse)
        .ok_or_else(|| ExportError::MalformedRow { line, msg: "bad kind".into() })?;
    Ok(FillEvent {
        t_index: field(rec, offset, "t_index")?,
        side,
        price: field(rec, offset + 2, "price")?,
        kind,
    })
}

/// `(window, fill)` pairs from a batch fills file.
pub fn read_fills<R: Read>(input: R) -> Result<Vec<(usize, FillEvent)>, ExportError> {
    let mut r = reader(input, &FILLS_HEADER)?;
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok((field(&rec, 0, "window")?, parse_fill(&rec, 1)?))
        })
        .collect()
}

pub fn write_fill_log<W: Write>(log: &FillLog, out: W) -> Result<(), ExportError> {
    let mut w = writer(out, &FILL_LOG_HEADER)?;
    for f in &log.fills {
        w.write_record([
            f.t_index.to_string(),
            f.side.to_string(),
            f.price.to_string(),
            f.kind.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fill_log<R: Read>(input: R) -> Result<Vec<FillEvent>, ExportError> {
    let mut r = reader(input, &FILL_LOG_HEADER)?;
    r.records().map(|rec| parse_fill(&rec?, 0)).collect()
}

pub fn write_batch_wealth<W: Write>(batch: &BatchResult, out: W) -> Result<(), ExportError> {
    let mut w = writer(out, &WEALTH_HEADER)?;
    for (k, win) in batch.windows.iter().enumerate() {
        w.write_record([
            k.to_string(),
            win.terminal_wealth.to_string(),
            win.objective.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Terminal wealth per window, in window order.
pub fn read_batch_wealth<R: Read>(input: R) -> Result<Vec<f64>, ExportError> {
    let mut r = reader(input, &WEALTH_HEADER)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let k: usize = field(&rec, 0, "window")?;
        if k != out.len() {
            return Err(ExportError::MalformedRow {
                line: rec.position().map_or(0, |p| p.line()),
                msg: format!("window {k} out of order"),
            });
        }
        out.push(field(&rec, 1, "terminal_wealth")?);
    }
    Ok(out)
}

pub fn write_histogram<W: Write>(h: &Histogram, out: W) -> Result<(), ExportError> {
    let mut w = writer(out, &HISTOGRAM_HEADER)?;
    for (k, c) in h.counts.iter().enumerate() {
        w.write_record([
            h.bin_edges[k].to_string(),
            h.bin_edges[k + 1].to_string(),
            c.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(rows: &[(&str, u64)], out: W) -> Result<(), ExportError> {
    let mut w = writer(out, &SUMMARY_HEADER)?;
    for (name, count) in rows {
        w.write_record([name.to_string(), count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table2<W: Write>(
    date: &str,
    contract: &str,
    row: &FillTypeRow,
    out: W,
) -> Result<(), ExportError> {
    let mut w = writer(out, &TABLE2_HEADER)?;
    w.write_record([
        date.to_string(),
        contract.to_string(),
        row.total.to_string(),
        row.adverse.to_string(),
        row.non_adverse.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn write_snapshot<W: Write>(rows: &[SnapshotRow], out: W) -> Result<(), ExportError> {
    let mut w = writer(out, &SNAPSHOT_HEADER)?;
    for r in rows {
        w.write_record([
            r.t_index.to_string(),
            r.bid.to_string(),
            r.ask.to_string(),
            r.mid.to_string(),
            flag(r.posted_bid).to_string(),
            flag(r.posted_ask).to_string(),
            r.fill_side.clone(),
            r.fill_kind.clone(),
            r.q.to_string(),
            r.cash.to_string(),
            r.wealth.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
