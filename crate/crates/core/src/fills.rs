//! Limit-order fill accounting.
//!
//! A posted order is filled in one of two ways during step `i -> i + 1`:
//!
//! * **adverse**: the touch on its side moves through it (ask up, bid down).
//!   Book mechanics guarantee the fill, at the pre-move price.
//! * **non-adverse**: a market order arrives on its side and, with
//!   probability `rho`, reaches the order.
//!
//! Each side fills at most once per step and an adverse fill takes
//! precedence over a non-adverse one.

use std::fmt;

use crate::dynamics::{MOArrivals, RngStream};
use crate::params::MarketParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bid" => Some(Side::Bid),
            "ask" => Some(Side::Ask),
            _ => None,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FillKind {
    Adverse,
    NonAdverse,
}

impl FillKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FillKind::Adverse => "adverse",
            FillKind::NonAdverse => "nonadverse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adverse" => Some(FillKind::Adverse),
            "nonadverse" => Some(FillKind::NonAdverse),
            _ => None,
        }
    }
}

impl fmt::Display for FillKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One unit filled at `price` during step `t_index -> t_index + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FillEvent {
    pub t_index: usize,
    pub side: Side,
    pub price: f64,
    pub kind: FillKind,
}

/// Cumulative fill counts. `n_plus` counts ask fills, `n_minus` bid fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FillCounters {
    pub afa: u64,
    pub nfa: u64,
    pub afb: u64,
    pub nfb: u64,
    pub n_plus: u64,
    pub n_minus: u64,
}

impl FillCounters {
    pub fn total(&self) -> u64 {
        self.n_plus + self.n_minus
    }

    pub fn is_consistent(&self) -> bool {
        self.n_plus == self.afa + self.nfa && self.n_minus == self.afb + self.nfb
    }

    /// Component-wise sum.
    pub fn merge(&self, other: &FillCounters) -> FillCounters {
        FillCounters {
            afa: self.afa + other.afa,
            nfa: self.nfa + other.nfa,
            afb: self.afb + other.afb,
            nfb: self.nfb + other.nfb,
            n_plus: self.n_plus + other.n_plus,
            n_minus: self.n_minus + other.n_minus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvVariant {
    /// Every fill comes from a market order hitting the front of the queue.
    Benchmark,
    /// Forced adverse fills plus probability-thinned non-adverse fills.
    Improved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvMode {
    pub variant: EnvVariant,
    pub rho_effective: f64,
}

impl EnvMode {
    pub fn benchmark() -> Self {
        Self {
            variant: EnvVariant::Benchmark,
            rho_effective: 1.0,
        }
    }

    pub fn improved(params: &MarketParams) -> Self {
        Self {
            variant: EnvVariant::Improved,
            rho_effective: params.rho,
        }
    }

    pub fn detects_adverse(&self) -> bool {
        self.variant == EnvVariant::Improved
    }
}

/// Adverse iff the touch on the fill's side moved against the new position.
pub fn classify_fill(side: Side, price_now: f64, price_next: f64) -> FillKind {
    let adverse = match side {
        Side::Bid => price_next < price_now,
        Side::Ask => price_next > price_now,
    };
    if adverse {
        FillKind::Adverse
    } else {
        FillKind::NonAdverse
    }
}

/// Level-1 quotes at two consecutive samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuoteMove {
    pub bid_now: f64,
    pub ask_now: f64,
    pub bid_next: f64,
    pub ask_next: f64,
}

/// Forced fills for posted orders the touch moved through. Ask first, then bid.
pub fn detect_adverse_fills(
    t_index: usize,
    posted_bid: bool,
    posted_ask: bool,
    quotes: QuoteMove,
) -> Vec<FillEvent> {
    let mut out = Vec::with_capacity(2);
    if posted_ask && quotes.ask_next > quotes.ask_now {
        out.push(FillEvent {
            t_index,
            side: Side::Ask,
            price: quotes.ask_now,
            kind: FillKind::Adverse,
        });
    }
    if posted_bid && quotes.bid_next < quotes.bid_now {
        out.push(FillEvent {
            t_index,
            side: Side::Bid,
            price: quotes.bid_now,
            kind: FillKind::Adverse,
        });
    }
    out
}

/// Bernoulli(rho) non-adverse fill. Draws from `rng` only for eligible steps
/// (posted, market order arrived, no adverse fill on this side).
pub fn sample_nonadverse_fill(
    posted: bool,
    mo_arrived: bool,
    adverse_already: bool,
    rho: f64,
    rng: &mut RngStream,
) -> bool {
    if !posted || !mo_arrived || adverse_already {
        return false;
    }
    rng.bernoulli(rho)
}

/// Adds each fill to exactly one counter and refreshes the totals.
pub fn accumulate(counters: FillCounters, fills: &[FillEvent]) -> FillCounters {
    let mut c = counters;
    for f in fills {
        match (f.side, f.kind) {
            (Side::Ask, FillKind::Adverse) => c.afa += 1,
            (Side::Ask, FillKind::NonAdverse) => c.nfa += 1,
            (Side::Bid, FillKind::Adverse) => c.afb += 1,
            (Side::Bid, FillKind::NonAdverse) => c.nfb += 1,
        }
    }
    c.n_plus = c.afa + c.nfa;
    c.n_minus = c.afb + c.nfb;
    c
}

/// All fills for one step: adverse detection (improved mode only), then a
/// non-adverse draw for the ask (buy market order) and the bid (sell market order).
pub fn step_fills(
    t_index: usize,
    posted_bid: bool,
    posted_ask: bool,
    quotes: QuoteMove,
    arrivals: MOArrivals,
    mode: &EnvMode,
    rng: &mut RngStream,
) -> Vec<FillEvent> {
    let mut fills = if mode.detects_adverse() {
        detect_adverse_fills(t_index, posted_bid, posted_ask, quotes)
    } else {
        Vec::new()
    };
    let ask_adverse = fills.iter().any(|f| f.side == Side::Ask);
    let bid_adverse = fills.iter().any(|f| f.side == Side::Bid);
    if sample_nonadverse_fill(posted_ask, arrivals.buy, ask_adverse, mode.rho_effective, rng) {
        fills.push(FillEvent {
            t_index,
            side: Side::Ask,
            price: quotes.ask_now,
            kind: FillKind::NonAdverse,
        });
    }
    if sample_nonadverse_fill(posted_bid, arrivals.sell, bid_adverse, mode.rho_effective, rng) {
        fills.push(FillEvent {
            t_index,
            side: Side::Bid,
            price: quotes.bid_now,
            kind: FillKind::NonAdverse,
        });
    }
    fills
}
