//! Backtest of the optimal posting policy over quote windows.
//!
//! Each step of a window:
//!
//! 1. read the posting decision at `(i, alpha, q)` (nearest alpha node);
//! 2. draw market-order arrivals;
//! 3. collect fills from the quote move `i -> i + 1` (adverse detection in
//!    improved mode first, then non-adverse draws);
//! 4. update inventory, cash and alpha.
//!
//! Prices come from the series; alpha is driven only by the simulated
//! market orders.

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{
    sample_mo_arrivals, simulate_synthetic_path, step_alpha, MOArrivals, PathOptions, RngStream,
};
use crate::fills::{accumulate, step_fills, EnvMode, FillCounters, FillEvent, QuoteMove, Side};
use crate::market_data::PriceSeries;
use crate::params::MarketParams;
use crate::solver::PostingPolicy;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("SeriesTooShort: need at least {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("PolicyShapeMismatch: {0}")]
    PolicyShapeMismatch(String),
    #[error("InventoryBoundBreach: inventory {q} outside [-{q_max}, {q_max}]")]
    InventoryBoundBreach { q: i32, q_max: i32 },
}

/// Inventory after the step's fills: bids add one lot, asks remove one.
pub fn update_inventory(q: i32, fills: &[FillEvent], q_max: i32) -> Result<i32, SimError> {
    let next = fills.iter().fold(q, |acc, f| match f.side {
        Side::Bid => acc + 1,
        Side::Ask => acc - 1,
    });
    if next.abs() > q_max {
        return Err(SimError::InventoryBoundBreach { q: next, q_max });
    }
    Ok(next)
}

/// Cash after the step's fills: ask fills receive their price, bid fills pay it.
pub fn update_cash(c: f64, fills: &[FillEvent]) -> f64 {
    fills.iter().fold(c, |acc, f| match f.side {
        Side::Ask => acc + f.price,
        Side::Bid => acc - f.price,
    })
}

/// Cash plus inventory liquidated at `s` less half the spread and the quadratic penalty.
pub fn terminal_wealth(c: f64, q: i32, s: f64, params: &MarketParams) -> f64 {
    let q = q as f64;
    c + q * (s - (params.delta / 2.0 + params.varphi * q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Quotes of the window, `n_dt + 1` samples.
    pub bid: Vec<f64>,
    pub ask: Vec<f64>,
    pub mid: Vec<f64>,
    /// Alpha at each sample.
    pub alpha: Vec<f64>,
    /// Inventory at each sample.
    pub inventory: Vec<i32>,
    pub cash: Vec<f64>,
    /// Marked to mid for `i < n_dt`; the last entry is the terminal wealth.
    pub wealth: Vec<f64>,
    /// Decisions in force during step `i -> i + 1`, `n_dt` entries.
    pub posted_bid: Vec<bool>,
    pub posted_ask: Vec<bool>,
    pub arrivals: Vec<MOArrivals>,
    pub fills: Vec<FillEvent>,
    pub counters: FillCounters,
    pub terminal_wealth: f64,
    /// Terminal wealth less `phi * sum(q^2) * dt`.
    pub objective: f64,
}

fn check_shape(policy: &PostingPolicy, params: &MarketParams) -> Result<(), SimError> {
    if policy.n_dt != params.n_dt || policy.q_max != params.q_max {
        return Err(SimError::PolicyShapeMismatch(format!(
            "policy has n_dt = {}, q_max = {}; parameters have n_dt = {}, q_max = {}",
            policy.n_dt, policy.q_max, params.n_dt, params.q_max
        )));
    }
    Ok(())
}

/// Runs one window over the first `n_dt + 1` samples of `series`.
pub fn run_simulation(
    policy: &PostingPolicy,
    series: &PriceSeries,
    mode: &EnvMode,
    params: &MarketParams,
    rng: &mut RngStream,
) -> Result<SimResult, SimError> {
    check_shape(policy, params)?;
    let n = params.n_dt;
    if series.len() < n + 1 {
        return Err(SimError::SeriesTooShort {
            needed: n + 1,
            got: series.len(),
        });
    }

    let mut res = SimResult {
        bid: series.bid[..=n].to_vec(),
        ask: series.ask[..=n].to_vec(),
        mid: (0..=n).map(|i| series.mid(i)).collect(),
        alpha: Vec::with_capacity(n + 1),
        inventory: Vec::with_capacity(n + 1),
        cash: Vec::with_capacity(n + 1),
        wealth: Vec::with_capacity(n + 1),
        posted_bid: Vec::with_capacity(n),
        posted_ask: Vec::with_capacity(n),
        arrivals: Vec::with_capacity(n),
        fills: Vec::new(),
        counters: FillCounters::default(),
        terminal_wealth: 0.0,
        objective: 0.0,
    };

    let (mut alpha, mut q, mut cash) = (0.0f64, 0i32, 0.0f64);
    let mut penalty = 0.0;
    for i in 0..n {
        res.alpha.push(alpha);
        res.inventory.push(q);
        res.cash.push(cash);
        res.wealth.push(cash + q as f64 * res.mid[i]);
        penalty += params.phi * (q as f64).powi(2) * params.dt;

        let (post_bid, post_ask) = policy.decide(i, alpha, q);
        let arrivals = sample_mo_arrivals(params.lambda_plus, params.lambda_minus, params.dt, rng);
        let quotes = QuoteMove {
            bid_now: res.bid[i],
            ask_now: res.ask[i],
            bid_next: res.bid[i + 1],
            ask_next: res.ask[i + 1],
        };
        let fills = step_fills(i, post_bid, post_ask, quotes, arrivals, mode, rng);
        alpha = step_alpha(alpha, arrivals, params.dt, params, rng);
        q = update_inventory(q, &fills, params.q_max)?;
        cash = update_cash(cash, &fills);
        res.counters = accumulate(res.counters, &fills);

        res.posted_bid.push(post_bid);
        res.posted_ask.push(post_ask);
        res.arrivals.push(arrivals);
        res.fills.extend(fills);
    }

    res.alpha.push(alpha);
    res.inventory.push(q);
    res.cash.push(cash);
    res.terminal_wealth = terminal_wealth(cash, q, res.mid[n], params);
    res.wealth.push(res.terminal_wealth);
    res.objective = res.terminal_wealth - penalty;
    Ok(res)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub terminal_wealths: Vec<f64>,
    pub fill_totals: FillCounters,
    pub n_paths: usize,
    /// Per-window results, in window order.
    pub windows: Vec<SimResult>,
}

impl BatchResult {
    pub fn mean_terminal_wealth(&self) -> f64 {
        self.terminal_wealths.iter().sum::<f64>() / self.n_paths as f64
    }

    /// Standard error of the mean terminal wealth.
    pub fn standard_error(&self) -> f64 {
        let n = self.n_paths as f64;
        let m = self.mean_terminal_wealth();
        let var = self
            .terminal_wealths
            .iter()
            .map(|w| (w - m).powi(2))
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        (var / n).sqrt()
    }
}

/// Number of consecutive windows of `n_dt + 1` samples (sharing end points).
pub fn window_count(series_len: usize, n_dt: usize) -> usize {
    series_len.saturating_sub(1) / n_dt
}

/// Runs window `k` of a session with its own stream `(master_seed, k)`.
pub fn run_window(
    policy: &PostingPolicy,
    session: &PriceSeries,
    mode: &EnvMode,
    params: &MarketParams,
    master_seed: u64,
    k: usize,
) -> Result<SimResult, SimError> {
    let window = session.window(k * params.n_dt, params.n_dt + 1);
    let mut rng = RngStream::new(master_seed, k as u64);
    run_simulation(policy, &window, mode, params, &mut rng)
}

/// Splits the session into windows and runs them in parallel.
pub fn run_batch(
    policy: &PostingPolicy,
    session: &PriceSeries,
    mode: &EnvMode,
    params: &MarketParams,
    master_seed: u64,
) -> Result<BatchResult, SimError> {
    check_shape(policy, params)?;
    let n_paths = window_count(session.len(), params.n_dt);
    if n_paths == 0 {
        return Err(SimError::SeriesTooShort {
            needed: params.n_dt + 1,
            got: session.len(),
        });
    }
    let windows = (0..n_paths)
        .into_par_iter()
        .map(|k| run_window(policy, session, mode, params, master_seed, k))
        .collect::<Result<Vec<_>, _>>()?;
    let fill_totals = windows
        .iter()
        .fold(FillCounters::default(), |acc, w| acc.merge(&w.counters));
    Ok(BatchResult {
        terminal_wealths: windows.iter().map(|w| w.terminal_wealth).collect(),
        fill_totals,
        n_paths,
        windows,
    })
}

/// Stream id reserved for generating synthetic sessions, disjoint from window streams.
pub const SESSION_STREAM: u64 = u64::MAX;

/// A synthetic session of `n_windows` windows from the midprice/alpha model,
/// with the observed mid on a grid of one spread.
pub fn synthetic_session(params: &MarketParams, n_windows: usize, seed: u64) -> PriceSeries {
    let n_steps = n_windows * params.n_dt;
    let mut rng = RngStream::new(seed, SESSION_STREAM);
    let path = simulate_synthetic_path(params, n_steps, PathOptions::for_params(params), &mut rng);
    let n = path.bid.len();
    PriceSeries {
        t0: 0,
        dt: params.dt,
        bid: path.bid,
        ask: path.ask,
        level1_bid_sz: vec![10; n],
        level1_ask_sz: vec![10; n],
        trades: None,
    }
}
