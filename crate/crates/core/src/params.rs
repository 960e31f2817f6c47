//! Model constants, solver grid settings and the flat `key = value` config format.
//!
//! A config document holds one `key = value` pair per line. Blank lines and
//! `#` comments are ignored; keys must match a field of [`MarketParams`] or
//! [`SolverGrid`] exactly. Missing keys fall back to [`default_params`] and
//! [`SolverGrid::default`].

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Every constant of the market-making model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// Midprice volatility, price units per sqrt(second).
    pub sigma: f64,
    /// Long-term midprice drift, price units per second.
    pub nu: f64,
    /// Mean-reversion rate of the short-term alpha, 1/second.
    pub zeta: f64,
    /// Diffusion volatility of alpha.
    pub eta: f64,
    /// Alpha jump on a buy market order.
    pub eps_plus: f64,
    /// Alpha jump (downwards) on a sell market order.
    pub eps_minus: f64,
    /// Buy market-order intensity, 1/second.
    pub lambda_plus: f64,
    /// Sell market-order intensity, 1/second.
    pub lambda_minus: f64,
    /// Bid-ask spread.
    pub delta: f64,
    /// Terminal liquidation penalty per lot squared.
    pub varphi: f64,
    /// Running inventory penalty per lot squared per second.
    pub phi: f64,
    /// Probability that a posted order is filled by a non-adverse market order.
    pub rho: f64,
    /// Inventory bound in lots; inventory lives in `-q_max..=q_max`.
    pub q_max: i32,
    /// Strategy window length, seconds.
    pub horizon: f64,
    /// Simulation time step, seconds.
    pub dt: f64,
    /// Steps per window.
    pub n_dt: usize,
}

/// Alpha grid used by the value-function solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverGrid {
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Number of alpha nodes; odd so that alpha = 0 is a node.
    pub n_alpha: usize,
    /// Explicit solver sub-iterations per `dt`.
    pub substeps: usize,
}

/// Table of defaults used for market-making simulations on one-second bars.
pub fn default_params() -> MarketParams {
    MarketParams {
        sigma: 0.005,
        nu: 0.0,
        zeta: 0.05,
        eta: 0.001,
        eps_plus: 0.002,
        eps_minus: 0.002,
        lambda_plus: 0.5833,
        lambda_minus: 0.5833,
        delta: 0.01,
        varphi: 0.01,
        phi: 0.0,
        rho: 0.2,
        q_max: 7,
        horizon: 120.0,
        dt: 1.0,
        n_dt: 120,
    }
}

impl Default for MarketParams {
    fn default() -> Self {
        default_params()
    }
}

impl Default for SolverGrid {
    fn default() -> Self {
        Self {
            alpha_min: -0.04,
            alpha_max: 0.04,
            n_alpha: 51,
            substeps: 2,
        }
    }
}

impl MarketParams {
    /// Number of inventory levels, `2 * q_max + 1`.
    pub fn n_q(&self) -> usize {
        (2 * self.q_max + 1) as usize
    }

    /// Copy of these parameters with a different non-adverse fill probability.
    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }
}

impl SolverGrid {
    pub fn d_alpha(&self) -> f64 {
        (self.alpha_max - self.alpha_min) / (self.n_alpha - 1) as f64
    }

    /// Node coordinates. Node `mid + k` sits at exactly `k * d_alpha`, so the
    /// grid is symmetric bit-for-bit around zero.
    pub fn alpha_nodes(&self) -> Vec<f64> {
        let mid = (self.n_alpha / 2) as i64;
        let d = self.d_alpha();
        (0..self.n_alpha as i64).map(|j| (j - mid) as f64 * d).collect()
    }
}

/// A single violated invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("NegativeParameter: `{0}` must be non-negative and finite")]
    NegativeParameter(&'static str),
    #[error("NonPositiveParameter: `{0}` must be strictly positive")]
    NonPositiveParameter(&'static str),
    #[error("SpreadNonPositive: delta must be > 0")]
    SpreadNonPositive,
    #[error("RhoOutOfRange: rho = {0} is not in [0, 1]")]
    RhoOutOfRange(f64),
    #[error("InventoryBound: q_max must be >= 1, got {0}")]
    InventoryBound(i32),
    #[error("HorizonMismatch: n_dt * dt = {product} but horizon = {horizon}")]
    HorizonMismatch { product: f64, horizon: f64 },
    #[error("GridAsymmetric: alpha_min = {min} is not -alpha_max = {max}")]
    GridAsymmetric { min: f64, max: f64 },
    #[error("GridTooCoarse: {0}")]
    GridTooCoarse(String),
}

/// Non-empty list of violated invariants.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("ValidationError: {}", display_list(.0))]
pub struct ValidationErrors(pub Vec<ParamError>);

fn display_list(errs: &[ParamError]) -> String {
    errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

/// Checks every invariant of `params` and `grid`, collecting all violations.
pub fn validate(
    params: MarketParams,
    grid: SolverGrid,
) -> Result<(MarketParams, SolverGrid), ValidationErrors> {
    let mut errs = Vec::new();
    let non_negative = [
        ("sigma", params.sigma),
        ("zeta", params.zeta),
        ("eta", params.eta),
        ("eps_plus", params.eps_plus),
        ("eps_minus", params.eps_minus),
        ("lambda_plus", params.lambda_plus),
        ("lambda_minus", params.lambda_minus),
        ("phi", params.phi),
        ("varphi", params.varphi),
    ];
    for (name, v) in non_negative {
        if !(v >= 0.0 && v.is_finite()) {
            errs.push(ParamError::NegativeParameter(name));
        }
    }
    if !params.nu.is_finite() {
        errs.push(ParamError::NegativeParameter("nu"));
    }
    if !(params.delta > 0.0 && params.delta.is_finite()) {
        errs.push(ParamError::SpreadNonPositive);
    }
    if !(0.0..=1.0).contains(&params.rho) {
        errs.push(ParamError::RhoOutOfRange(params.rho));
    }
    if params.q_max < 1 {
        errs.push(ParamError::InventoryBound(params.q_max));
    }
    let mut timing_ok = true;
    if !(params.dt > 0.0 && params.dt.is_finite()) {
        errs.push(ParamError::NonPositiveParameter("dt"));
        timing_ok = false;
    }
    if params.n_dt == 0 {
        errs.push(ParamError::NonPositiveParameter("n_dt"));
        timing_ok = false;
    }
    if timing_ok {
        let product = params.n_dt as f64 * params.dt;
        if !((product - params.horizon).abs() <= 1e-9 * params.horizon.abs().max(1.0)) {
            errs.push(ParamError::HorizonMismatch {
                product,
                horizon: params.horizon,
            });
        }
    }

    if !(grid.alpha_max > 0.0 && grid.alpha_max.is_finite() && grid.alpha_min == -grid.alpha_max)
    {
        errs.push(ParamError::GridAsymmetric {
            min: grid.alpha_min,
            max: grid.alpha_max,
        });
    }
    if grid.n_alpha < 11 || grid.n_alpha.is_multiple_of(2) {
        errs.push(ParamError::GridTooCoarse(format!(
            "n_alpha must be odd and >= 11, got {}",
            grid.n_alpha
        )));
    }
    if grid.substeps < 1 {
        errs.push(ParamError::GridTooCoarse("substeps must be >= 1".into()));
    }

    if errs.is_empty() {
        Ok((params, grid))
    } else {
        Err(ValidationErrors(errs))
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("ParseError at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Validation(#[from] ValidationErrors),
}

fn parse_err(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses a config document, overriding defaults with the keys it contains.
pub fn load_config(text: &str) -> Result<(MarketParams, SolverGrid), ConfigError> {
    let mut p = default_params();
    let mut g = SolverGrid::default();
    let mut seen: Vec<String> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(lineno, format!("expected `key = value`, got `{line}`")))?;
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(parse_err(lineno, format!("duplicate key `{key}`")));
        }

        let float = || {
            value
                .parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("`{key}`: {e}")))
        };
        let uint = || {
            value
                .parse::<usize>()
                .map_err(|e| parse_err(lineno, format!("`{key}`: {e}")))
        };
        match key {
            "sigma" => p.sigma = float()?,
            "nu" => p.nu = float()?,
            "zeta" => p.zeta = float()?,
            "eta" => p.eta = float()?,
            "eps_plus" => p.eps_plus = float()?,
            "eps_minus" => p.eps_minus = float()?,
            "lambda_plus" => p.lambda_plus = float()?,
            "lambda_minus" => p.lambda_minus = float()?,
            "delta" => p.delta = float()?,
            "varphi" => p.varphi = float()?,
            "phi" => p.phi = float()?,
            "rho" => p.rho = float()?,
            "q_max" => {
                p.q_max = value
                    .parse::<i32>()
                    .map_err(|e| parse_err(lineno, format!("`q_max`: {e}")))?
            }
            "horizon" => p.horizon = float()?,
            "dt" => p.dt = float()?,
            "n_dt" => p.n_dt = uint()?,
            "alpha_min" => g.alpha_min = float()?,
            "alpha_max" => g.alpha_max = float()?,
            "n_alpha" => g.n_alpha = uint()?,
            "substeps" => g.substeps = uint()?,
            other => return Err(parse_err(lineno, format!("unknown key `{other}`"))),
        }
        seen.push(key.to_string());
    }

    Ok(validate(p, g)?)
}

/// Writes every field in the config format. `load_config(&render(..))`
/// reproduces the inputs exactly.
pub fn render(params: &MarketParams, grid: &SolverGrid) -> String {
    let p = params;
    let g = grid;
    let mut out = String::new();
    let mut kv = |k: &str, v: &dyn fmt::Display| out.push_str(&format!("{k} = {v}\n"));
    kv("sigma", &p.sigma);
    kv("nu", &p.nu);
    kv("zeta", &p.zeta);
    kv("eta", &p.eta);
    kv("eps_plus", &p.eps_plus);
    kv("eps_minus", &p.eps_minus);
    kv("lambda_plus", &p.lambda_plus);
    kv("lambda_minus", &p.lambda_minus);
    kv("delta", &p.delta);
    kv("varphi", &p.varphi);
    kv("phi", &p.phi);
    kv("rho", &p.rho);
    kv("q_max", &p.q_max);
    kv("horizon", &p.horizon);
    kv("dt", &p.dt);
    kv("n_dt", &p.n_dt);
    kv("alpha_min", &g.alpha_min);
    kv("alpha_max", &g.alpha_max);
    kv("n_alpha", &g.n_alpha);
    kv("substeps", &g.substeps);
    out
}

/// Stable 64-bit digest of the rendered inputs.
pub fn fingerprint(params: &MarketParams, grid: &SolverGrid) -> u64 {
    let digest = Sha256::digest(render(params, grid).as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_be_bytes(bytes)
}
