//! Recorded order-book ingestion, forward-fill resampling onto a uniform grid,
//! trade-size statistics and synthetic quote series.

use std::io::{Read, Write};

use thiserror::Error;

use crate::dynamics::RngStream;
use crate::params::MarketParams;

pub const LEVELS: usize = 5;
const NANOS_PER_SEC: f64 = 1e9;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("SchemaMismatch: {0}")]
    SchemaMismatch(String),
    #[error("MalformedRow at line {line}: {msg}")]
    MalformedRow { line: u64, msg: String },
    #[error("NonMonotoneTimestamp at line {line}")]
    NonMonotoneTimestamp { line: u64 },
    #[error("EmptyInput: no records")]
    EmptyInput,
    #[error("NoDataBeforeStart: first record at {first} ns is after start {start} ns")]
    NoDataBeforeStart { first: i64, start: i64 },
    #[error("NoQuotes: no record with both level-1 prices inside the window")]
    NoQuotes,
    #[error("NoTrades: no record carries a trade size")]
    NoTrades,
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

/// One order-book snapshot with up to five levels per side and an optional trade.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LOBRecord {
    /// Nanoseconds since epoch.
    pub ts: i64,
    pub bid_px: [Option<f64>; LEVELS],
    pub bid_sz: [Option<u64>; LEVELS],
    pub ask_px: [Option<f64>; LEVELS],
    pub ask_sz: [Option<u64>; LEVELS],
    pub trade_px: Option<f64>,
    pub trade_sz: Option<u64>,
}

impl LOBRecord {
    /// Level-1 `(bid, ask)` when both sides are present.
    pub fn touch(&self) -> Option<(f64, f64)> {
        Some((self.bid_px[0]?, self.ask_px[0]?))
    }
}

/// Header of the order-book CSV format.
pub fn lob_header() -> Vec<String> {
    let mut cols = vec!["ts".to_string()];
    for side in ["bid", "ask"] {
        for level in 1..=LEVELS {
            cols.push(format!("{side}_px_{level}"));
            cols.push(format!("{side}_sz_{level}"));
        }
    }
    cols.push("trade_px".into());
    cols.push("trade_sz".into());
    cols
}

fn opt_field<T: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<Option<T>, DataError>
where
    T::Err: std::fmt::Display,
{
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<T>().map(Some).map_err(|e| DataError::MalformedRow {
        line,
        msg: format!("{name}: {e}"),
    })
}

/// Parses an order-book CSV in file order.
pub fn parse_lob_csv<R: Read>(input: R) -> Result<Vec<LOBRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let expected = lob_header();
    let header = reader.headers()?.clone();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a.trim() != b) {
        let missing: Vec<&str> = expected
            .iter()
            .filter(|c| !header.iter().any(|h| h.trim() == c.as_str()))
            .map(String::as_str)
            .collect();
        return Err(DataError::SchemaMismatch(if missing.is_empty() {
            "columns out of order or unexpected extra columns".into()
        } else {
            format!("missing columns: {}", missing.join(", "))
        }));
    }

    let mut out: Vec<LOBRecord> = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != expected.len() {
            return Err(DataError::MalformedRow {
                line,
                msg: format!("expected {} fields, found {}", expected.len(), row.len()),
            });
        }
        let ts = opt_field::<i64>(&row[0], "ts", line)?.ok_or(DataError::MalformedRow {
            line,
            msg: "ts is required".into(),
        })?;
        let mut rec = LOBRecord {
            ts,
            ..LOBRecord::default()
        };
        for level in 0..LEVELS {
            let b = 1 + 2 * level;
            let a = 1 + 2 * LEVELS + 2 * level;
            rec.bid_px[level] = opt_field(&row[b], &expected[b], line)?;
            rec.bid_sz[level] = opt_field(&row[b + 1], &expected[b + 1], line)?;
            rec.ask_px[level] = opt_field(&row[a], &expected[a], line)?;
            rec.ask_sz[level] = opt_field(&row[a + 1], &expected[a + 1], line)?;
        }
        rec.trade_px = opt_field(&row[1 + 4 * LEVELS], "trade_px", line)?;
        rec.trade_sz = opt_field(&row[2 + 4 * LEVELS], "trade_sz", line)?;

        if let Some((bid, ask)) = rec.touch() {
            if bid >= ask {
                return Err(DataError::MalformedRow {
                    line,
                    msg: format!("crossed book: bid {bid} >= ask {ask}"),
                });
            }
        }
        if let Some(prev) = out.last() {
            if rec.ts < prev.ts {
                return Err(DataError::NonMonotoneTimestamp { line });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Writes records in the same CSV format [`parse_lob_csv`] reads.
pub fn write_lob_csv<W: Write>(records: &[LOBRecord], out: W) -> Result<(), DataError> {
    fn cell<T: ToString>(v: Option<T>) -> String {
        v.map(|x| x.to_string()).unwrap_or_default()
    }
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(lob_header())?;
    for r in records {
        let mut row = vec![r.ts.to_string()];
        for level in 0..LEVELS {
            row.push(cell(r.bid_px[level]));
            row.push(cell(r.bid_sz[level]));
        }
        for level in 0..LEVELS {
            row.push(cell(r.ask_px[level]));
            row.push(cell(r.ask_sz[level]));
        }
        row.push(cell(r.trade_px));
        row.push(cell(r.trade_sz));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// A trade print: price and size in lots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trade {
    pub price: f64,
    pub size: u64,
}

/// Uniformly spaced level-1 quotes.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    /// Timestamp of sample 0, nanoseconds.
    pub t0: i64,
    /// Spacing, seconds.
    pub dt: f64,
    pub bid: Vec<f64>,
    pub ask: Vec<f64>,
    pub level1_bid_sz: Vec<u64>,
    pub level1_ask_sz: Vec<u64>,
    /// `trades[i]` holds the prints in `(t_{i-1}, t_i]`; `None` for synthetic series.
    pub trades: Option<Vec<Vec<Trade>>>,
}

impl PriceSeries {
    pub fn len(&self) -> usize {
        self.bid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bid.is_empty()
    }

    pub fn mid(&self, i: usize) -> f64 {
        0.5 * (self.bid[i] + self.ask[i])
    }

    /// Samples `start..start + len` as their own series.
    pub fn window(&self, start: usize, len: usize) -> PriceSeries {
        let r = start..start + len;
        PriceSeries {
            t0: self.t0 + (start as f64 * self.dt * NANOS_PER_SEC).round() as i64,
            dt: self.dt,
            bid: self.bid[r.clone()].to_vec(),
            ask: self.ask[r.clone()].to_vec(),
            level1_bid_sz: self.level1_bid_sz[r.clone()].to_vec(),
            level1_ask_sz: self.level1_ask_sz[r.clone()].to_vec(),
            trades: self.trades.as_ref().map(|t| {
                let mut w = t[r].to_vec();
                w[0].clear();
                w
            }),
        }
    }

    /// Checks equal lengths and uncrossed quotes.
    pub fn check(&self) -> Result<(), DataError> {
        let n = self.len();
        let lengths_ok = self.ask.len() == n
            && self.level1_bid_sz.len() == n
            && self.level1_ask_sz.len() == n
            && self.trades.as_ref().is_none_or(|t| t.len() == n);
        if !lengths_ok {
            return Err(DataError::InvalidArgument("series arrays differ in length".into()));
        }
        if let Some(i) = (0..n).find(|&i| self.bid[i] >= self.ask[i]) {
            return Err(DataError::InvalidArgument(format!("crossed quotes at sample {i}")));
        }
        Ok(())
    }
}

/// Output of [`resample_forward_fill`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub series: PriceSeries,
    /// Leading boundaries skipped because no level-1 quote had been seen yet.
    pub dropped_leading: usize,
}

fn secs_to_nanos(secs: f64) -> i64 {
    (secs * NANOS_PER_SEC).round() as i64
}

/// Default sampling window: from the first whole second at or after the
/// first record, to the last record.
pub fn default_window(records: &[LOBRecord]) -> Option<(i64, i64)> {
    let first = records.first()?.ts;
    let last = records.last()?.ts;
    let sec = NANOS_PER_SEC as i64;
    let start = first.div_euclid(sec) * sec + if first.rem_euclid(sec) == 0 { 0 } else { sec };
    Some((start, last.max(start)))
}

/// Samples the book every `dt` seconds from `start` to `end` (inclusive, ns),
/// each sample repeating the last record with a level-1 quote at or before
/// the boundary.
pub fn resample_forward_fill(
    records: &[LOBRecord],
    dt: f64,
    start: i64,
    end: i64,
) -> Result<Resampled, DataError> {
    if records.is_empty() {
        return Err(DataError::EmptyInput);
    }
    if !(dt > 0.0) || end < start {
        return Err(DataError::InvalidArgument(format!(
            "need dt > 0 and end >= start (dt = {dt}, start = {start}, end = {end})"
        )));
    }
    if records[0].ts > start {
        return Err(DataError::NoDataBeforeStart {
            first: records[0].ts,
            start,
        });
    }
    let step = secs_to_nanos(dt);
    let n_boundaries = ((end - start) / step + 1) as usize;

    let mut series = PriceSeries {
        t0: start,
        dt,
        bid: Vec::with_capacity(n_boundaries),
        ask: Vec::with_capacity(n_boundaries),
        level1_bid_sz: Vec::with_capacity(n_boundaries),
        level1_ask_sz: Vec::with_capacity(n_boundaries),
        trades: Some(Vec::with_capacity(n_boundaries)),
    };
    let trades = series.trades.as_mut().unwrap();
    let mut dropped = 0usize;
    let mut cursor = 0usize;
    let mut last_quote: Option<&LOBRecord> = None;

    for k in 0..n_boundaries {
        let boundary = start + k as i64 * step;
        let mut bucket = Vec::new();
        while cursor < records.len() && records[cursor].ts <= boundary {
            let rec = &records[cursor];
            if rec.touch().is_some() {
                last_quote = Some(rec);
            }
            if let (Some(price), Some(size)) = (rec.trade_px, rec.trade_sz) {
                // Prints before the first boundary belong to no interval.
                if k > 0 {
                    bucket.push(Trade { price, size });
                }
            }
            cursor += 1;
        }
        match last_quote {
            Some(rec) => {
                let (bid, ask) = rec.touch().expect("quote record");
                if series.bid.is_empty() {
                    series.t0 = boundary;
                    bucket.clear();
                }
                series.bid.push(bid);
                series.ask.push(ask);
                series.level1_bid_sz.push(rec.bid_sz[0].unwrap_or(0));
                series.level1_ask_sz.push(rec.ask_sz[0].unwrap_or(0));
                trades.push(bucket);
            }
            None => dropped += 1,
        }
    }
    if series.bid.is_empty() {
        return Err(DataError::NoQuotes);
    }
    Ok(Resampled {
        series,
        dropped_leading: dropped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeStats {
    pub mean_size: f64,
    pub median_size: f64,
    pub count: usize,
}

/// Mean and median over every record carrying a trade size.
pub fn trade_size_stats(records: &[LOBRecord]) -> Result<TradeStats, DataError> {
    let mut sizes: Vec<u64> = records.iter().filter_map(|r| r.trade_sz).collect();
    if sizes.is_empty() {
        return Err(DataError::NoTrades);
    }
    sizes.sort_unstable();
    let n = sizes.len();
    let mean_size = sizes.iter().map(|&s| s as f64).sum::<f64>() / n as f64;
    let median_size = if n % 2 == 1 {
        sizes[n / 2] as f64
    } else {
        0.5 * (sizes[n / 2 - 1] + sizes[n / 2]) as f64
    };
    Ok(TradeStats {
        mean_size,
        median_size,
        count: n,
    })
}

/// Settings for [`synthetic_quotes`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteWalk {
    /// Probability of a one-tick up move; the same for down. Must be in `[0, 0.5]`.
    pub walk_p: f64,
    pub s0: f64,
    /// Price grid of the walk.
    pub tick: f64,
    /// Level-1 size reported on both sides.
    pub level1_size: u64,
}

impl QuoteWalk {
    pub fn for_params(params: &MarketParams) -> Self {
        Self {
            walk_p: 0.25,
            s0: 100.0,
            tick: params.delta,
            level1_size: 10,
        }
    }
}

/// `n_steps + 1` quotes whose midprice moves one tick up or down (probability
/// `walk_p` each) or stays flat, with a constant spread of `params.delta`.
pub fn synthetic_quotes(
    params: &MarketParams,
    n_steps: usize,
    seed: u64,
    walk: QuoteWalk,
) -> Result<PriceSeries, DataError> {
    if !(0.0..=0.5).contains(&walk.walk_p) {
        return Err(DataError::InvalidArgument(format!(
            "walk_p must be in [0, 0.5], got {}",
            walk.walk_p
        )));
    }
    if !(walk.tick > 0.0) {
        return Err(DataError::InvalidArgument("tick must be positive".into()));
    }
    let mut rng = RngStream::new(seed, 0);
    let half = params.delta / 2.0;
    let mut ticks = (walk.s0 / walk.tick).round() as i64;
    let n = n_steps + 1;
    let mut series = PriceSeries {
        t0: 0,
        dt: params.dt,
        bid: Vec::with_capacity(n),
        ask: Vec::with_capacity(n),
        level1_bid_sz: vec![walk.level1_size; n],
        level1_ask_sz: vec![walk.level1_size; n],
        trades: None,
    };
    for i in 0..n {
        if i > 0 {
            let u = rng.uniform();
            if u < walk.walk_p {
                ticks += 1;
            } else if u < 2.0 * walk.walk_p {
                ticks -= 1;
            }
        }
        let mid = ticks as f64 * walk.tick;
        series.bid.push(mid - half);
        series.ask.push(mid + half);
    }
    Ok(series)
}
