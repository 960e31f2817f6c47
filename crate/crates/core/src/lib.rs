//! Optimal limit-order posting for a market maker with short-term alpha, and
//! backtests that either ignore adverse fills or force them on trade-through.

pub mod dynamics;
pub mod export;
pub mod fills;
pub mod market_data;
pub mod params;
pub mod poster;
pub mod report;
pub mod sim;
pub mod solver;
