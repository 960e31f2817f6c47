//! Static-offset posting strategies used to measure how often fills are adverse.
//!
//! [`run_example1`] quotes at the touch of a one-tick random walk and is hit by
//! one market order per step. [`run_basic_posting`] keeps a ladder of one-lot
//! orders around a quote series: after a fill at `p` it posts a same-side
//! order one offset further out and reposts the opposite side at the previous
//! fill price. Orders fill when the touch trades through them or when traded
//! volume at their price exceeds the queue ahead of them.
//!
//! Prices are handled as integer multiples of the tick internally.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dynamics::RngStream;
use crate::fills::{accumulate, classify_fill, FillCounters, FillEvent, FillKind, Side};
use crate::market_data::PriceSeries;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PosterError {
    #[error("EmptySeries: the quote series has no samples")]
    EmptySeries,
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
}

/// A one-lot order in the simulated book.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestingOrder {
    pub side: Side,
    pub price: f64,
    /// Lots ahead of this order at its price.
    pub queue_ahead: u64,
}

/// Applies `traded` lots executed at the order's price. The order fills when
/// the volume reaches past the queue ahead of it.
pub fn queue_fill_check(order: RestingOrder, traded: u64) -> (bool, RestingOrder) {
    let filled = traded > order.queue_ahead;
    let next = RestingOrder {
        queue_ahead: order.queue_ahead.saturating_sub(traded),
        ..order
    };
    (filled, next)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FillLog {
    pub fills: Vec<FillEvent>,
    pub totals: FillCounters,
    /// Steps where an opposite-side repost was skipped because it would cross
    /// the ladder or the market.
    pub flagged_steps: Vec<usize>,
}

impl FillLog {
    fn push(&mut self, fill: FillEvent) {
        self.totals = accumulate(self.totals, std::slice::from_ref(&fill));
        self.fills.push(fill);
    }
}

/// Fill counts in the layout of the basic-posting results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FillTypeRow {
    pub total: u64,
    pub adverse: u64,
    pub non_adverse: u64,
}

pub fn fill_type_table(log: &FillLog) -> FillTypeRow {
    let adverse = log.fills.iter().filter(|f| f.kind == FillKind::Adverse).count() as u64;
    let total = log.fills.len() as u64;
    FillTypeRow {
        total,
        adverse,
        non_adverse: total - adverse,
    }
}

/// Integer tick grid with exact conversion back to prices for decimal ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
struct TickGrid {
    tick: f64,
    per_unit: Option<f64>,
}

impl TickGrid {
    fn new(tick: f64) -> Self {
        let inv = 1.0 / tick;
        let per_unit = ((inv - inv.round()).abs() < 1e-9).then(|| inv.round());
        Self { tick, per_unit }
    }

    fn ticks(&self, price: f64) -> i64 {
        (price / self.tick).round() as i64
    }

    fn price(&self, ticks: i64) -> f64 {
        match self.per_unit {
            Some(n) => ticks as f64 / n,
            None => ticks as f64 * self.tick,
        }
    }
}

/// One market order per step at a touch that follows a one-tick random walk
/// (up and down with probability `walk_p` each) with a one-tick spread.
/// The order hits the bid or the ask with equal probability and always fills.
pub fn run_example1(n_steps: usize, walk_p: f64, seed: u64) -> Result<FillLog, PosterError> {
    if !(0.0..=0.5).contains(&walk_p) {
        return Err(PosterError::InvalidArgument(format!(
            "walk_p must be in [0, 0.5], got {walk_p}"
        )));
    }
    let grid = TickGrid::new(0.01);
    let mut rng = RngStream::new(seed, 0);
    let mut bid = 10_000i64;
    let mut log = FillLog::default();
    for i in 0..n_steps {
        let side = if rng.bernoulli(0.5) { Side::Ask } else { Side::Bid };
        let u = rng.uniform();
        let next_bid = if u < walk_p {
            bid + 1
        } else if u < 2.0 * walk_p {
            bid - 1
        } else {
            bid
        };
        let (now, next) = match side {
            Side::Bid => (bid, next_bid),
            Side::Ask => (bid + 1, next_bid + 1),
        };
        log.push(FillEvent {
            t_index: i,
            side,
            price: grid.price(now),
            kind: classify_fill(side, now as f64, next as f64),
        });
        bid = next_bid;
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicPostConfig {
    /// Distance between the initial bid and ask orders, and between ladder rungs.
    pub offset_ticks: i64,
    pub tick: f64,
    pub seed: u64,
    /// Per-step probability of a market order on each side, used for queue
    /// depletion when the series carries no trade prints.
    pub mo_prob: f64,
    /// Lots per simulated market order.
    pub mo_size: u64,
    /// Cancel orders further than this many ticks from their side's touch.
    pub cancel_distance: Option<i64>,
}

impl BasicPostConfig {
    pub fn new(offset_ticks: i64, tick: f64) -> Self {
        Self {
            offset_ticks,
            tick,
            seed: 0,
            mo_prob: 0.5,
            mo_size: 5,
            cancel_distance: None,
        }
    }

    pub fn for_instrument(inst: Instrument) -> Self {
        Self::new(inst.offset_ticks(), inst.tick())
    }
}

/// Futures contracts with preset tick sizes and posting offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instrument {
    Es,
    Nq,
    Cl,
    Zn,
}

impl Instrument {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ES" => Some(Self::Es),
            "NQ" => Some(Self::Nq),
            "CL" => Some(Self::Cl),
            "ZN" => Some(Self::Zn),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Es => "ES",
            Self::Nq => "NQ",
            Self::Cl => "CL",
            Self::Zn => "ZN",
        }
    }

    pub fn tick(self) -> f64 {
        match self {
            Self::Es | Self::Nq => 0.25,
            Self::Cl => 0.01,
            Self::Zn => 1.0 / 64.0,
        }
    }

    pub fn offset_ticks(self) -> i64 {
        match self {
            Self::Es | Self::Cl => 4,
            Self::Nq => 16,
            Self::Zn => 1,
        }
    }
}

/// Level-1 quotes of one sample in ticks.
#[derive(Debug, Clone, Copy)]
struct Touch {
    bid: i64,
    ask: i64,
    bid_sz: u64,
    ask_sz: u64,
}

/// The order ladder of the basic posting strategy, advanced one sample at a time.
#[derive(Debug, Clone)]
pub struct BasicPoster {
    config: BasicPostConfig,
    grid: TickGrid,
    rng: RngStream,
    /// Price in ticks -> queue ahead.
    bids: BTreeMap<i64, u64>,
    asks: BTreeMap<i64, u64>,
    last_fill: Option<i64>,
}

impl BasicPoster {
    /// Posts the initial pair around the first sample of `series`.
    pub fn new(series: &PriceSeries, config: BasicPostConfig) -> Result<Self, PosterError> {
        if series.is_empty() {
            return Err(PosterError::EmptySeries);
        }
        if config.offset_ticks < 1 {
            return Err(PosterError::InvalidArgument(format!(
                "offset_ticks must be at least 1, got {}",
                config.offset_ticks
            )));
        }
        if !(config.tick > 0.0) || !(0.0..=1.0).contains(&config.mo_prob) {
            return Err(PosterError::InvalidArgument(
                "tick must be positive and mo_prob in [0, 1]".into(),
            ));
        }
        let mut poster = Self {
            config,
            grid: TickGrid::new(config.tick),
            rng: RngStream::new(config.seed, 0),
            bids: BTreeMap::new(),
            asks: BTreeMap::new(),
            last_fill: None,
        };
        let touch = poster.touch(series, 0);
        let spread = touch.ask - touch.bid;
        let bid = touch.bid - (config.offset_ticks - spread).div_euclid(2);
        let ask = bid + config.offset_ticks;
        poster.place(Side::Bid, bid, &touch);
        poster.place(Side::Ask, ask, &touch);
        Ok(poster)
    }

    fn touch(&self, series: &PriceSeries, i: usize) -> Touch {
        Touch {
            bid: self.grid.ticks(series.bid[i]),
            ask: self.grid.ticks(series.ask[i]),
            bid_sz: series.level1_bid_sz[i],
            ask_sz: series.level1_ask_sz[i],
        }
    }

    fn place(&mut self, side: Side, price: i64, touch: &Touch) {
        let (book, queue) = match side {
            Side::Bid => (&mut self.bids, if price <= touch.bid { touch.bid_sz } else { 0 }),
            Side::Ask => (&mut self.asks, if price >= touch.ask { touch.ask_sz } else { 0 }),
        };
        book.entry(price).or_insert(queue);
    }

    /// Resting orders, bids from the highest down then asks from the lowest up.
    pub fn orders(&self) -> Vec<RestingOrder> {
        let bids = self.bids.iter().rev().map(|(&p, &q)| RestingOrder {
            side: Side::Bid,
            price: self.grid.price(p),
            queue_ahead: q,
        });
        let asks = self.asks.iter().map(|(&p, &q)| RestingOrder {
            side: Side::Ask,
            price: self.grid.price(p),
            queue_ahead: q,
        });
        bids.chain(asks).collect()
    }

    /// Highest bid is below lowest ask.
    pub fn ladder_ok(&self) -> bool {
        match (self.bids.keys().next_back(), self.asks.keys().next()) {
            (Some(b), Some(a)) => b < a,
            _ => true,
        }
    }

    /// Advances from sample `i` to `i + 1`, appending fills and flags to `log`.
    pub fn step(&mut self, series: &PriceSeries, i: usize, log: &mut FillLog) {
        let next = self.touch(series, i + 1);
        let now = self.touch(series, i);
        let prints: Vec<(i64, u64)> = match &series.trades {
            Some(trades) => trades[i + 1]
                .iter()
                .map(|t| (self.grid.ticks(t.price), t.size))
                .collect(),
            None => {
                let buy = self.rng.bernoulli(self.config.mo_prob);
                let sell = self.rng.bernoulli(self.config.mo_prob);
                let mut v = Vec::new();
                if buy {
                    v.push((now.ask, self.config.mo_size));
                }
                if sell {
                    v.push((now.bid, self.config.mo_size));
                }
                v
            }
        };
        let volume_at = |p: i64| prints.iter().filter(|t| t.0 == p).map(|t| t.1).sum::<u64>();

        let mut filled: Vec<(Side, i64)> = Vec::new();
        for (&p, q) in self.asks.iter_mut() {
            let through = next.ask > p || prints.iter().any(|t| t.0 > p);
            let (queue_hit, order) = queue_fill_check(
                RestingOrder { side: Side::Ask, price: 0.0, queue_ahead: *q },
                volume_at(p),
            );
            *q = order.queue_ahead;
            if through || queue_hit {
                filled.push((Side::Ask, p));
            }
        }
        for (&p, q) in self.bids.iter_mut().rev() {
            let through = next.bid < p || prints.iter().any(|t| t.0 < p);
            let (queue_hit, order) = queue_fill_check(
                RestingOrder { side: Side::Bid, price: 0.0, queue_ahead: *q },
                volume_at(p),
            );
            *q = order.queue_ahead;
            if through || queue_hit {
                filled.push((Side::Bid, p));
            }
        }

        let mut flagged = false;
        for (side, p) in filled {
            let touch_next = match side {
                Side::Bid => next.bid,
                Side::Ask => next.ask,
            };
            log.push(FillEvent {
                t_index: i,
                side,
                price: self.grid.price(p),
                kind: classify_fill(side, p as f64, touch_next as f64),
            });
            match side {
                Side::Bid => self.bids.remove(&p),
                Side::Ask => self.asks.remove(&p),
            };
            flagged |= !self.repost(side, p, &next);
        }
        if flagged {
            log.flagged_steps.push(i);
        }
        if let Some(d) = self.config.cancel_distance {
            self.bids.retain(|&p, _| next.bid - p <= d);
            self.asks.retain(|&p, _| p - next.ask <= d);
        }
    }

    /// Whether a new order at `price` keeps bids below asks and does not cross the touch.
    fn permits(&self, side: Side, price: i64, next: &Touch) -> bool {
        match side {
            Side::Bid => price < next.ask && self.asks.keys().next().is_none_or(|&a| price < a),
            Side::Ask => price > next.bid && self.bids.keys().next_back().is_none_or(|&b| b < price),
        }
    }

    /// Places an order unless one already rests at that price. Returns false
    /// when the ladder does not permit it.
    fn try_place(&mut self, side: Side, price: i64, next: &Touch) -> bool {
        let exists = match side {
            Side::Bid => self.bids.contains_key(&price),
            Side::Ask => self.asks.contains_key(&price),
        };
        if exists {
            return true;
        }
        if !self.permits(side, price, next) {
            return false;
        }
        self.place(side, price, next);
        true
    }

    /// Repost after a fill at `p`: a same-side order one offset further out and
    /// an opposite-side order at the previous fill price. Returns false when
    /// either was skipped.
    fn repost(&mut self, side: Side, p: i64, next: &Touch) -> bool {
        let offset = self.config.offset_ticks;
        let (same, opposite) = match side {
            Side::Bid => (p - offset, Side::Ask),
            Side::Ask => (p + offset, Side::Bid),
        };
        let mut ok = self.try_place(side, same, next);
        if let Some(prev) = self.last_fill.filter(|&prev| prev != p) {
            ok &= self.try_place(opposite, prev, next);
        }
        self.last_fill = Some(p);
        ok
    }
}

/// Runs the ladder over the whole series.
pub fn run_basic_posting(series: &PriceSeries, config: BasicPostConfig) -> Result<FillLog, PosterError> {
    let mut poster = BasicPoster::new(series, config)?;
    let mut log = FillLog::default();
    for i in 0..series.len() - 1 {
        poster.step(series, i, &mut log);
    }
    Ok(log)
}
