//! Euler discretisation of the midprice and short-term alpha processes,
//! plus Bernoulli-thinned market-order arrivals.
//!
//! ```text
//! dS = (nu + alpha) dt + sigma dW
//! d alpha = -zeta alpha dt + eta dW^alpha + eps+ dM+ - eps- dM-
//! ```
//!
//! All randomness is drawn from an explicit [`RngStream`]; a path is a pure
//! function of its parameters and `(seed, stream_id)`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::params::MarketParams;

/// Seeded random stream. Two streams built from the same `(seed, stream_id)`
/// produce the same draws; distinct `stream_id`s are independent.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Always consumes exactly one uniform draw.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Market orders arriving during one step: at most one per side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MOArrivals {
    pub buy: bool,
    pub sell: bool,
}

/// Latent simulation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub s: f64,
    pub alpha: f64,
    pub t_index: usize,
}

/// Probability of at least one Poisson(intensity) event in `dt`.
pub fn arrival_probability(intensity: f64, dt: f64) -> f64 {
    1.0 - (-intensity * dt).exp()
}

/// Draws buy then sell arrivals; always consumes two uniforms.
pub fn sample_mo_arrivals(
    lambda_plus: f64,
    lambda_minus: f64,
    dt: f64,
    rng: &mut RngStream,
) -> MOArrivals {
    let buy = rng.bernoulli(arrival_probability(lambda_plus, dt));
    let sell = rng.bernoulli(arrival_probability(lambda_minus, dt));
    MOArrivals { buy, sell }
}

/// One Euler step of alpha. Always consumes one normal draw.
pub fn step_alpha(
    alpha: f64,
    arrivals: MOArrivals,
    dt: f64,
    params: &MarketParams,
    rng: &mut RngStream,
) -> f64 {
    let z = rng.standard_normal();
    let mut next = alpha * (1.0 - params.zeta * dt) + params.eta * dt.sqrt() * z;
    if arrivals.buy {
        next += params.eps_plus;
    }
    if arrivals.sell {
        next -= params.eps_minus;
    }
    next
}

/// One Euler step of the (unrounded) midprice. Always consumes one normal draw.
pub fn step_midprice(
    s: f64,
    alpha: f64,
    dt: f64,
    params: &MarketParams,
    rng: &mut RngStream,
) -> f64 {
    let z = rng.standard_normal();
    s + (params.nu + alpha) * dt + params.sigma * dt.sqrt() * z
}

pub fn round_to_tick(price: f64, tick: f64) -> f64 {
    (price / tick).round() * tick
}

/// Starting point and observation settings for a synthetic path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    pub s0: f64,
    pub alpha0: f64,
    /// Observed midprices are rounded to this grid; `None` disables rounding.
    pub tick: Option<f64>,
}

impl PathOptions {
    /// Starts at 100 with zero alpha and rounds the observed mid to one spread.
    pub fn for_params(params: &MarketParams) -> Self {
        Self {
            s0: 100.0,
            alpha0: 0.0,
            tick: Some(params.delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPath {
    /// Observed (possibly tick-rounded) midprice, `n_dt + 1` entries.
    pub mid: Vec<f64>,
    pub bid: Vec<f64>,
    pub ask: Vec<f64>,
    /// Latent alpha, `n_dt + 1` entries.
    pub alpha: Vec<f64>,
    /// Arrivals during step `i -> i + 1`, `n_dt` entries.
    pub arrivals: Vec<MOArrivals>,
}

/// Simulates `n_dt` steps of the joint (midprice, alpha, market order) model.
///
/// The latent midprice is never rounded; only the observed quote is, so
/// sub-tick drift still accumulates.
pub fn simulate_synthetic_path(
    params: &MarketParams,
    n_dt: usize,
    options: PathOptions,
    rng: &mut RngStream,
) -> SyntheticPath {
    let observe = |s: f64| match options.tick {
        Some(tick) => round_to_tick(s, tick),
        None => s,
    };
    let half = params.delta / 2.0;
    let mut state = PathState {
        s: options.s0,
        alpha: options.alpha0,
        t_index: 0,
    };

    let mut path = SyntheticPath {
        mid: Vec::with_capacity(n_dt + 1),
        bid: Vec::with_capacity(n_dt + 1),
        ask: Vec::with_capacity(n_dt + 1),
        alpha: Vec::with_capacity(n_dt + 1),
        arrivals: Vec::with_capacity(n_dt),
    };
    let push = |path: &mut SyntheticPath, st: &PathState| {
        let m = observe(st.s);
        path.mid.push(m);
        path.bid.push(m - half);
        path.ask.push(m + half);
        path.alpha.push(st.alpha);
    };
    push(&mut path, &state);

    for _ in 0..n_dt {
        let arrivals = sample_mo_arrivals(params.lambda_plus, params.lambda_minus, params.dt, rng);
        let s = step_midprice(state.s, state.alpha, params.dt, params, rng);
        let alpha = step_alpha(state.alpha, arrivals, params.dt, params, rng);
        state = PathState {
            s,
            alpha,
            t_index: state.t_index + 1,
        };
        path.arrivals.push(arrivals);
        push(&mut path, &state);
    }
    path
}
