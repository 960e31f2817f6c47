//! Backward solver for the reduced value function `h(t, alpha, q)`.
//!
//! After the ansatz `H(t, c, S, alpha, q) = c + q S + h(t, alpha, q)` the
//! value function satisfies
//!
//! ```text
//! 0 = (d_t - zeta alpha d_alpha + eta^2/2 d_alpha_alpha) h + alpha q - phi q^2
//!   + lambda+ ( rho 1{q > -Q} max(0, D/2 + h(alpha+eps+, q-1) - h(alpha+eps+, q))
//!               + h(alpha+eps+, q) - h(alpha, q) )
//!   + lambda- ( rho 1{q < Q}  max(0, D/2 + h(alpha-eps-, q+1) - h(alpha-eps-, q))
//!               + h(alpha-eps-, q) - h(alpha, q) )
//! h(T, alpha, q) = -q (D/2 + varphi q)
//! ```
//!
//! The equation is integrated backwards with explicit Euler steps of size
//! `dt / substeps`: central differences in alpha (one-sided on the two edge
//! nodes) and linear interpolation, clamped to the grid, for the jumped
//! arguments `alpha +- eps`. Only the slices at whole multiples of `dt` are
//! kept.

use thiserror::Error;

use crate::params::{fingerprint, MarketParams, SolverGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("UnstableScheme: non-finite value produced while computing time slice {t_index}")]
    UnstableScheme { t_index: usize },
    #[error("GridTooCoarse: jump size {eps} does not fit inside the alpha grid (alpha_max = {alpha_max})")]
    GridTooCoarse { eps: f64, alpha_max: f64 },
}

/// Geometry of the alpha grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaAxis {
    pub n: usize,
    pub d_alpha: f64,
}

impl AlphaAxis {
    pub fn from_grid(grid: &SolverGrid) -> Self {
        Self {
            n: grid.n_alpha,
            d_alpha: grid.d_alpha(),
        }
    }

    fn mid(&self) -> usize {
        self.n / 2
    }

    pub fn node(&self, j: usize) -> f64 {
        (j as f64 - self.mid() as f64) * self.d_alpha
    }

    pub fn alpha_min(&self) -> f64 {
        self.node(0)
    }

    pub fn alpha_max(&self) -> f64 {
        self.node(self.n - 1)
    }

    /// Fractional node index of `alpha` (unclamped).
    pub fn position(&self, alpha: f64) -> f64 {
        let pos = alpha / self.d_alpha + self.mid() as f64;
        let r = pos.round();
        if (pos - r).abs() < 1e-9 {
            r
        } else {
            pos
        }
    }

    /// Index of the node closest to `alpha`, clamped to the grid.
    pub fn nearest(&self, alpha: f64) -> usize {
        let pos = self.position(alpha).round();
        pos.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// Linear interpolation of `row` at fractional index `pos`, clamped to the end nodes.
pub fn interp_index(row: &[f64], pos: f64) -> f64 {
    let last = row.len() - 1;
    if !(pos > 0.0) {
        return row[0];
    }
    if pos >= last as f64 {
        return row[last];
    }
    let k = pos.floor() as usize;
    let w = pos - k as f64;
    if w == 0.0 {
        row[k]
    } else {
        (1.0 - w) * row[k] + w * row[k + 1]
    }
}

/// Interpolates a single `(t, q)` row of `h` at `alpha`.
pub fn interp_alpha(row: &[f64], axis: &AlphaAxis, alpha: f64) -> f64 {
    interp_index(row, axis.position(alpha))
}

/// `h(T, alpha, q)`.
pub fn terminal_condition(q: i32, params: &MarketParams) -> f64 {
    let q = q as f64;
    -q * (params.delta / 2.0 + params.varphi * q)
}

/// Solved `h` on every `(t_index, alpha node, q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSurface {
    pub axis: AlphaAxis,
    pub q_max: i32,
    pub n_dt: usize,
    pub params_fingerprint: u64,
    /// Layout `[t][q + q_max][alpha node]`.
    h: Vec<f64>,
}

impl ValueSurface {
    pub fn n_q(&self) -> usize {
        (2 * self.q_max + 1) as usize
    }

    fn slice_len(&self) -> usize {
        self.n_q() * self.axis.n
    }

    pub fn alpha_nodes(&self) -> Vec<f64> {
        (0..self.axis.n).map(|j| self.axis.node(j)).collect()
    }

    pub fn q_nodes(&self) -> impl Iterator<Item = i32> {
        -self.q_max..=self.q_max
    }

    /// All of `h` at one time index.
    pub fn slice(&self, t: usize) -> &[f64] {
        let len = self.slice_len();
        &self.h[t * len..(t + 1) * len]
    }

    /// `h(t, ., q)` over the alpha nodes.
    pub fn row(&self, t: usize, q: i32) -> &[f64] {
        let n = self.axis.n;
        let qi = (q + self.q_max) as usize;
        &self.slice(t)[qi * n..(qi + 1) * n]
    }

    pub fn get(&self, t: usize, j: usize, q: i32) -> f64 {
        self.row(t, q)[j]
    }

    /// `h(t, alpha, q)` with linear interpolation in alpha.
    pub fn value_at(&self, t: usize, alpha: f64, q: i32) -> f64 {
        interp_alpha(self.row(t, q), &self.axis, alpha)
    }

    pub fn max_abs(&self) -> f64 {
        self.h.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Full value `c + q s + h(t, alpha, q)`.
pub fn reconstruct_value(
    surface: &ValueSurface,
    c: f64,
    s: f64,
    alpha: f64,
    q: i32,
    t_index: usize,
) -> f64 {
    c + q as f64 * s + surface.value_at(t_index, alpha, q)
}

/// Jump sizes expressed in grid cells.
#[derive(Debug, Clone, Copy)]
struct Shifts {
    up: f64,
    down: f64,
}

impl Shifts {
    fn new(params: &MarketParams, axis: &AlphaAxis) -> Self {
        Self {
            up: params.eps_plus / axis.d_alpha,
            down: params.eps_minus / axis.d_alpha,
        }
    }
}

/// Terminal slice, layout `[q + q_max][alpha node]`.
pub fn terminal_slice(params: &MarketParams, axis: &AlphaAxis) -> Vec<f64> {
    (-params.q_max..=params.q_max)
        .flat_map(|q| std::iter::repeat_n(terminal_condition(q, params), axis.n))
        .collect()
}

/// One explicit Euler step of length `tau` backwards in time.
///
/// `next` is `h` at the later time with layout `[q + q_max][alpha node]`.
pub fn backward_substep(next: &[f64], params: &MarketParams, axis: &AlphaAxis, tau: f64) -> Vec<f64> {
    let n = axis.n;
    let q_max = params.q_max;
    let n_q = params.n_q();
    debug_assert_eq!(next.len(), n * n_q);
    let shifts = Shifts::new(params, axis);
    let d = axis.d_alpha;
    let half_spread = params.delta / 2.0;
    let diffusion = 0.5 * params.eta * params.eta;
    let row = |qi: usize| &next[qi * n..(qi + 1) * n];

    let mut out = vec![0.0; next.len()];
    for qi in 0..n_q {
        let q = qi as i32 - q_max;
        let qf = q as f64;
        let h = row(qi);
        for j in 0..n {
            let a = axis.node(j);
            let (dh, d2h) = if j == 0 {
                ((h[1] - h[0]) / d, (h[0] - 2.0 * h[1] + h[2]) / (d * d))
            } else if j == n - 1 {
                (
                    (h[n - 1] - h[n - 2]) / d,
                    (h[n - 1] - 2.0 * h[n - 2] + h[n - 3]) / (d * d),
                )
            } else {
                (
                    (h[j + 1] - h[j - 1]) / (2.0 * d),
                    (h[j + 1] - 2.0 * h[j] + h[j - 1]) / (d * d),
                )
            };
            let mut generator =
                -params.zeta * a * dh + diffusion * d2h + a * qf - params.phi * qf * qf;

            let up = j as f64 + shifts.up;
            let h_up = interp_index(h, up);
            let sell_gain = if q > -q_max {
                let h_up_less = interp_index(row(qi - 1), up);
                params.rho * (half_spread + h_up_less - h_up).max(0.0)
            } else {
                0.0
            };
            generator += params.lambda_plus * (sell_gain + h_up - h[j]);

            let down = j as f64 - shifts.down;
            let h_down = interp_index(h, down);
            let buy_gain = if q < q_max {
                let h_down_more = interp_index(row(qi + 1), down);
                params.rho * (half_spread + h_down_more - h_down).max(0.0)
            } else {
                0.0
            };
            generator += params.lambda_minus * (buy_gain + h_down - h[j]);

            out[qi * n + j] = h[j] + tau * generator;
        }
    }
    out
}

/// Integrates `h` from the terminal condition back to `t = 0`.
///
/// `params` and `grid` are assumed to have passed [`crate::params::validate`].
pub fn solve_dpe(params: &MarketParams, grid: &SolverGrid) -> Result<ValueSurface, SolverError> {
    let axis = AlphaAxis::from_grid(grid);
    let eps = params.eps_plus.max(params.eps_minus);
    if eps >= axis.alpha_max() {
        return Err(SolverError::GridTooCoarse {
            eps,
            alpha_max: axis.alpha_max(),
        });
    }
    let n_slices = params.n_dt + 1;
    let slice_len = axis.n * params.n_q();
    let tau = params.dt / grid.substeps as f64;

    let mut h = vec![0.0; n_slices * slice_len];
    let terminal = terminal_slice(params, &axis);
    h[params.n_dt * slice_len..].copy_from_slice(&terminal);

    let mut current = terminal;
    for t in (0..params.n_dt).rev() {
        for _ in 0..grid.substeps {
            current = backward_substep(&current, params, &axis, tau);
        }
        if current.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::UnstableScheme { t_index: t });
        }
        h[t * slice_len..(t + 1) * slice_len].copy_from_slice(&current);
    }

    Ok(ValueSurface {
        axis,
        q_max: params.q_max,
        n_dt: params.n_dt,
        params_fingerprint: fingerprint(params, grid),
        h,
    })
}

/// Coarse a-priori bound on `max |h|`; exceeding it signals instability.
pub fn value_bound(params: &MarketParams, grid: &SolverGrid) -> f64 {
    let q = params.q_max;
    let max_terminal = terminal_condition(q, params)
        .abs()
        .max(terminal_condition(-q, params).abs());
    10.0 * max_terminal
        + params.horizon
            * (q as f64 * grid.alpha_max
                + params.lambda_plus * params.delta / 2.0
                + params.lambda_minus * params.delta / 2.0)
}

/// Binary posting decisions on the solver grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PostingPolicy {
    pub axis: AlphaAxis,
    pub q_max: i32,
    pub n_dt: usize,
    /// Layout `[t][q + q_max][alpha node]`, as in [`ValueSurface`].
    post_ask: Vec<bool>,
    post_bid: Vec<bool>,
}

impl PostingPolicy {
    /// Builds a policy from raw decision tensors, checking sizes.
    pub fn from_parts(
        axis: AlphaAxis,
        q_max: i32,
        n_dt: usize,
        post_bid: Vec<bool>,
        post_ask: Vec<bool>,
    ) -> Option<Self> {
        let len = (n_dt + 1) * axis.n * (2 * q_max + 1) as usize;
        (post_bid.len() == len && post_ask.len() == len).then_some(Self {
            axis,
            q_max,
            n_dt,
            post_ask,
            post_bid,
        })
    }

    fn index(&self, t: usize, j: usize, q: i32) -> usize {
        let n_q = (2 * self.q_max + 1) as usize;
        (t * n_q + (q + self.q_max) as usize) * self.axis.n + j
    }

    pub fn ask(&self, t: usize, j: usize, q: i32) -> bool {
        self.post_ask[self.index(t, j, q)]
    }

    pub fn bid(&self, t: usize, j: usize, q: i32) -> bool {
        self.post_bid[self.index(t, j, q)]
    }

    /// `(post_bid, post_ask)` at the alpha node nearest to `alpha`.
    pub fn decide(&self, t: usize, alpha: f64, q: i32) -> (bool, bool) {
        let j = self.axis.nearest(alpha);
        (self.bid(t, j, q), self.ask(t, j, q))
    }

    /// Number of `(t, alpha, q)` nodes where either decision differs.
    pub fn count_differences(&self, other: &PostingPolicy) -> usize {
        self.post_ask
            .iter()
            .zip(&other.post_ask)
            .chain(self.post_bid.iter().zip(&other.post_bid))
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Evaluates the optimal posting indicators on every node of `surface`,
/// using `params.rho` as the fill probability.
pub fn extract_policy(surface: &ValueSurface, params: &MarketParams) -> PostingPolicy {
    let axis = surface.axis;
    let shifts = Shifts::new(params, &axis);
    let q_max = surface.q_max;
    let half_spread = params.delta / 2.0;
    let cap = (surface.n_dt + 1) * surface.slice_len();
    let mut post_ask = Vec::with_capacity(cap);
    let mut post_bid = Vec::with_capacity(cap);

    for t in 0..=surface.n_dt {
        for q in -q_max..=q_max {
            let row = surface.row(t, q);
            for j in 0..axis.n {
                let up = j as f64 + shifts.up;
                let ask = q > -q_max && {
                    let diff = interp_index(surface.row(t, q - 1), up) - interp_index(row, up);
                    half_spread + params.rho * diff > 0.0
                };
                let down = j as f64 - shifts.down;
                let bid = q < q_max && {
                    let diff = interp_index(surface.row(t, q + 1), down) - interp_index(row, down);
                    half_spread + params.rho * diff > 0.0
                };
                post_ask.push(ask);
                post_bid.push(bid);
            }
        }
    }

    PostingPolicy {
        axis,
        q_max,
        n_dt: surface.n_dt,
        post_ask,
        post_bid,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::default_params;

    fn axis() -> AlphaAxis {
        AlphaAxis::from_grid(&SolverGrid::default())
    }

    #[test]
    fn terminal_values() {
        let p = default_params();
        assert_eq!(terminal_condition(0, &p), 0.0);
        assert!((terminal_condition(7, &p) + 0.525).abs() < 1e-15);
        assert!((terminal_condition(-7, &p) + 0.455).abs() < 1e-15);
    }

    #[test]
    fn axis_is_exactly_symmetric() {
        let a = axis();
        for j in 0..a.n {
            assert_eq!(a.node(j), -a.node(a.n - 1 - j));
        }
        assert_eq!(a.node(a.n / 2), 0.0);
        assert!((a.alpha_max() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn interpolation_rules() {
        let a = axis();
        let row: Vec<f64> = (0..a.n).map(|j| (j as f64).powi(2)).collect();
        for k in [0, 7, 25, 50] {
            assert_eq!(interp_alpha(&row, &a, a.node(k)), row[k]);
        }
        let midpoint = 0.5 * (a.node(10) + a.node(11));
        assert!((interp_alpha(&row, &a, midpoint) - 0.5 * (row[10] + row[11])).abs() < 1e-9);
        assert_eq!(interp_alpha(&row, &a, a.alpha_max() + 0.01), row[a.n - 1]);
        assert_eq!(interp_alpha(&row, &a, a.alpha_min() - 0.01), row[0]);
    }

    #[test]
    fn nearest_node_clamps() {
        let a = axis();
        assert_eq!(a.nearest(0.0), 25);
        assert_eq!(a.nearest(1.0), 50);
        assert_eq!(a.nearest(-1.0), 0);
        assert_eq!(a.nearest(a.node(30) + 0.4 * a.d_alpha), 30);
    }

    #[test]
    fn terminal_slice_is_exact() {
        let p = default_params();
        let s = solve_dpe(&p, &SolverGrid::default()).unwrap();
        for q in -p.q_max..=p.q_max {
            for &v in s.row(p.n_dt, q) {
                assert_eq!(v, terminal_condition(q, &p));
            }
        }
    }

    #[test]
    fn flat_row_without_flow() {
        let mut p = default_params();
        p.lambda_plus = 0.0;
        p.lambda_minus = 0.0;
        p.eta = 0.0;
        p.phi = 0.0;
        let s = solve_dpe(&p, &SolverGrid::default()).unwrap();
        for t in 0..=p.n_dt {
            assert!(s.row(t, 0).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn jump_larger_than_grid_is_rejected() {
        let mut p = default_params();
        p.eps_plus = 0.05;
        assert!(matches!(
            solve_dpe(&p, &SolverGrid::default()),
            Err(SolverError::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn unstable_step_is_reported() {
        let p = default_params();
        let g = SolverGrid {
            alpha_min: -0.0004,
            alpha_max: 0.0004,
            n_alpha: 401,
            substeps: 1,
        };
        // eps exceeds alpha_max, so shrink the jumps to reach the stability check.
        let mut p2 = p;
        p2.eps_plus = 0.0001;
        p2.eps_minus = 0.0001;
        p2.eta = 0.01;
        assert!(matches!(
            solve_dpe(&p2, &g),
            Err(SolverError::UnstableScheme { .. })
        ));
    }

    #[test]
    fn surface_stays_within_a_priori_bound() {
        let p = default_params();
        let g = SolverGrid::default();
        let s = solve_dpe(&p, &g).unwrap();
        assert!(s.max_abs() <= value_bound(&p, &g));
    }

    #[test]
    fn substep_preserves_reflection_symmetry() {
        let p = default_params();
        let axis = AlphaAxis::from_grid(&SolverGrid::default());
        let n = axis.n;
        let slice: Vec<f64> = (-p.q_max..=p.q_max)
            .flat_map(|q| (0..n).map(move |j| (q, j)))
            .map(|(q, j)| {
                let (a, q) = (axis.node(j), q as f64);
                a * q + 30.0 * a * a - 0.01 * q * q
            })
            .collect();
        let out = backward_substep(&slice, &p, &axis, 0.5);
        let at = |q: i32, j: usize| out[(q + p.q_max) as usize * n + j];
        for q in -p.q_max..=p.q_max {
            for j in 0..n {
                assert!((at(q, j) - at(-q, n - 1 - j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn policy_respects_inventory_bounds() {
        let p = default_params();
        let s = solve_dpe(&p, &SolverGrid::default()).unwrap();
        let pol = extract_policy(&s, &p);
        for t in 0..=p.n_dt {
            for j in 0..s.axis.n {
                assert!(!pol.ask(t, j, -p.q_max));
                assert!(!pol.bid(t, j, p.q_max));
            }
        }
    }

    #[test]
    fn zero_difference_posts() {
        // Flat surface: every interior inventory level posts on both sides.
        let mut p = default_params();
        p.varphi = 0.0;
        p.delta = 0.01;
        let a = axis();
        let n_q = p.n_q();
        let surface = ValueSurface {
            axis: a,
            q_max: p.q_max,
            n_dt: 0,
            params_fingerprint: 0,
            h: vec![0.0; a.n * n_q],
        };
        let pol = extract_policy(&surface, &p);
        assert!(pol.ask(0, 3, 0) && pol.bid(0, 3, 0));
        assert!(pol.ask(0, 3, p.q_max) && !pol.bid(0, 3, p.q_max));
    }

    #[test]
    fn reconstruct_at_maturity() {
        let p = default_params();
        let s = solve_dpe(&p, &SolverGrid::default()).unwrap();
        let v = reconstruct_value(&s, 10.0, 100.0, 0.003, 2, p.n_dt);
        assert!((v - 209.95).abs() < 1e-9);
        assert_eq!(
            reconstruct_value(&s, 0.0, 100.0, 0.0, 0, 5),
            s.value_at(5, 0.0, 0)
        );
    }

    #[test]
    fn rho_changes_the_policy() {
        let p = default_params();
        let g = SolverGrid::default();
        let low = extract_policy(&solve_dpe(&p, &g).unwrap(), &p);
        let p1 = p.with_rho(1.0);
        let high = extract_policy(&solve_dpe(&p1, &g).unwrap(), &p1);
        assert!(low.count_differences(&high) > 0);
    }
}
