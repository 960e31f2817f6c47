//! Acceptance checks. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero when any criterion fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use mmsim::fills::{accumulate, EnvMode, FillCounters, FillKind, Side};
use mmsim::market_data::PriceSeries;
use mmsim::params::{default_params, MarketParams, SolverGrid};
use mmsim::poster::{run_example1, BasicPostConfig, BasicPoster, FillLog, Instrument};
use mmsim::sim::{run_batch, synthetic_session, BatchResult};
use mmsim::solver::{
    backward_substep, extract_policy, solve_dpe, AlphaAxis, ValueSurface,
};

type Check<'a> = Box<dyn Fn() -> Outcome + 'a>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn terminal_exactness(p: &MarketParams, s: &ValueSurface) -> Outcome {
    let mut worst = 0.0f64;
    for q in s.q_nodes() {
        let expect = -(q as f64) * (p.delta / 2.0 + p.varphi * q as f64);
        for &h in s.row(p.n_dt, q) {
            worst = worst.max((h - expect).abs());
        }
    }
    let examples = (s.get(p.n_dt, 25, 7) + 0.525).abs() < 1e-15 && (s.get(p.n_dt, 25, -7) + 0.455).abs() < 1e-15;
    outcome(
        worst <= f64::EPSILON && examples,
        format!("max |h(T) - terminal| = {worst:e}; h(T,.,7) = {}, h(T,.,-7) = {}", s.get(p.n_dt, 25, 7), s.get(p.n_dt, 25, -7)),
    )
}

fn symmetry(p: &MarketParams, s: &ValueSurface) -> Outcome {
    let pol = extract_policy(s, p);
    let n = s.axis.n;
    let mut worst = 0.0f64;
    let mut worst_t0 = 0.0f64;
    let mut mismatches = 0usize;
    for t in 0..=p.n_dt {
        for q in s.q_nodes() {
            for j in 0..n {
                let d = (s.get(t, j, q) - s.get(t, n - 1 - j, -q)).abs();
                worst = worst.max(d);
                if t == 0 {
                    worst_t0 = worst_t0.max(d);
                }
                if pol.ask(t, j, q) != pol.bid(t, n - 1 - j, -q) {
                    mismatches += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-9 && mismatches == 0,
        format!(
            "max |h(t,a,q) - h(t,-a,-q)| = {worst:.6} ({worst_t0:.6} at t=0), {mismatches} reflected posting mismatches; \
             the terminal condition itself is not reflection-symmetric in q"
        ),
    )
}

/// Test slice evaluated at alpha node `k` and inventory `q`.
fn probe(alpha: f64, q: i32) -> f64 {
    let q = q as f64;
    0.3 * alpha * q + 50.0 * alpha * alpha - 0.004 * q * q + 0.0007 * q * q * q + 2.0 * alpha.powi(3)
}

fn single_step_oracle(p: &MarketParams, g: &SolverGrid) -> Outcome {
    let axis = AlphaAxis::from_grid(g);
    let n = axis.n;
    let d = (g.alpha_max - g.alpha_min) / (g.n_alpha - 1) as f64;
    let node = |k: usize| g.alpha_min + k as f64 * d;
    let slice: Vec<f64> = (-p.q_max..=p.q_max)
        .flat_map(|q| (0..n).map(move |k| (q, k)))
        .map(|(q, k)| probe(axis.node(k), q))
        .collect();
    let tau = p.dt / g.substeps as f64;
    let out = backward_substep(&slice, p, &axis, tau);

    let mut worst = 0.0f64;
    for (j, q) in [(30usize, 2i32), (17, -3), (25, 0)] {
        let alpha = node(j);
        let h = |k: usize, q: i32| probe(axis.node(k), q);
        let lin = |a: f64, q: i32| {
            let x = (a - g.alpha_min) / d;
            let lo = x.floor() as usize;
            let w = x - lo as f64;
            (1.0 - w) * h(lo, q) + w * h(lo + 1, q)
        };
        let dh = (h(j + 1, q) - h(j - 1, q)) / (2.0 * d);
        let d2h = (h(j + 1, q) - 2.0 * h(j, q) + h(j - 1, q)) / (d * d);
        let qf = q as f64;
        let half = p.delta / 2.0;
        let up = alpha + p.eps_plus;
        let down = alpha - p.eps_minus;
        let sell = p.rho * f64::max(0.0, half + lin(up, q - 1) - lin(up, q));
        let buy = p.rho * f64::max(0.0, half + lin(down, q + 1) - lin(down, q));
        let rhs = -p.zeta * alpha * dh + 0.5 * p.eta * p.eta * d2h + alpha * qf - p.phi * qf * qf
            + p.lambda_plus * (sell + lin(up, q) - h(j, q))
            + p.lambda_minus * (buy + lin(down, q) - h(j, q));
        let expect = h(j, q) + tau * rhs;
        let got = out[(q + p.q_max) as usize * n + j];
        worst = worst.max((got - expect).abs());
    }
    outcome(worst <= 1e-12, format!("max |stencil - oracle| = {worst:e} over 3 interior nodes"))
}

fn policy_consistency(p: &MarketParams, s: &ValueSurface) -> Outcome {
    let pol = extract_policy(s, p);
    let half = p.delta / 2.0;
    let mut diffs = 0usize;
    for t in 0..=p.n_dt {
        for q in s.q_nodes() {
            for j in 0..s.axis.n {
                let a = s.axis.node(j);
                let ask = q > -p.q_max
                    && half + p.rho * (s.value_at(t, a + p.eps_plus, q - 1) - s.value_at(t, a + p.eps_plus, q)) > 0.0;
                let bid = q < p.q_max
                    && half + p.rho * (s.value_at(t, a - p.eps_minus, q + 1) - s.value_at(t, a - p.eps_minus, q)) > 0.0;
                diffs += (ask != pol.ask(t, j, q)) as usize + (bid != pol.bid(t, j, q)) as usize;
            }
        }
    }
    outcome(diffs == 0, format!("{diffs} differing indicators"))
}

fn convergence(p: &MarketParams) -> Outcome {
    let grids = [(51usize, 2usize), (101, 8), (201, 32)];
    let solved: Vec<ValueSurface> = grids
        .iter()
        .map(|&(n_alpha, substeps)| {
            let g = SolverGrid {
                n_alpha,
                substeps,
                ..SolverGrid::default()
            };
            solve_dpe(p, &g).expect("refined grid solves")
        })
        .collect();
    let coarse_n = solved[0].axis.n;
    let diff = |a: &ValueSurface, b: &ValueSurface| {
        let (sa, sb) = ((a.axis.n - 1) / (coarse_n - 1), (b.axis.n - 1) / (coarse_n - 1));
        let mut m = 0.0f64;
        for t in 0..=p.n_dt {
            for q in a.q_nodes() {
                for k in 0..coarse_n {
                    m = m.max((a.get(t, k * sa, q) - b.get(t, k * sb, q)).abs());
                }
            }
        }
        m
    };
    let d1 = diff(&solved[0], &solved[1]);
    let d2 = diff(&solved[1], &solved[2]);
    outcome(
        d2 < d1,
        format!("max |dh| on coarse nodes: 51->101 {d1:.6}, 101->201 {d2:.6} (substeps x4 per doubling)"),
    )
}

fn adverse_guarantee(b: &BatchResult) -> Outcome {
    let mut steps = 0usize;
    let mut missed = 0usize;
    let mut spurious = 0usize;
    for w in &b.windows {
        for i in 0..w.posted_bid.len() {
            steps += 1;
            let fills: Vec<_> = w.fills.iter().filter(|f| f.t_index == i).collect();
            let adverse = |side| fills.iter().any(|f| f.side == side && f.kind == FillKind::Adverse);
            let ask_through = w.ask[i + 1] > w.ask[i];
            let bid_through = w.bid[i + 1] < w.bid[i];
            missed += (w.posted_ask[i] && ask_through && !adverse(Side::Ask)) as usize;
            missed += (w.posted_bid[i] && bid_through && !adverse(Side::Bid)) as usize;
            spurious += (adverse(Side::Ask) && !ask_through) as usize;
            spurious += (adverse(Side::Bid) && !bid_through) as usize;
        }
    }
    outcome(
        steps >= 100_000 && missed == 0 && spurious == 0,
        format!("{steps} steps, {missed} missed trade-throughs, {spurious} adverse fills without a move"),
    )
}

fn calibration(b: &BatchResult, rho: f64) -> Outcome {
    let mut eligible = 0u64;
    let mut hits = 0u64;
    let mut identity_ok = true;
    for w in &b.windows {
        let mut c = FillCounters::default();
        for i in 0..w.posted_bid.len() {
            let fills: Vec<_> = w.fills.iter().filter(|f| f.t_index == i).copied().collect();
            for (side, posted, arrived) in [
                (Side::Ask, w.posted_ask[i], w.arrivals[i].buy),
                (Side::Bid, w.posted_bid[i], w.arrivals[i].sell),
            ] {
                let adverse = fills.iter().any(|f| f.side == side && f.kind == FillKind::Adverse);
                if posted && arrived && !adverse {
                    eligible += 1;
                    hits += fills.iter().any(|f| f.side == side && f.kind == FillKind::NonAdverse) as u64;
                }
            }
            c = accumulate(c, &fills);
            identity_ok &= c.is_consistent();
        }
        identity_ok &= c == w.counters;
    }
    let freq = hits as f64 / eligible as f64;
    outcome(
        eligible >= 100_000 && (freq - rho).abs() <= 0.005 && identity_ok,
        format!("{hits}/{eligible} eligible steps filled = {freq:.5}; counter identity {}", if identity_ok { "holds" } else { "broken" }),
    )
}

fn ordering(p: &MarketParams, g: &SolverGrid) -> Outcome {
    let session = synthetic_session(p, 330, 2024);
    let bench_params = p.with_rho(1.0);
    let bench_policy = extract_policy(&solve_dpe(&bench_params, g).unwrap(), &bench_params);
    let impr_policy = extract_policy(&solve_dpe(p, g).unwrap(), p);
    let bench = run_batch(&bench_policy, &session, &EnvMode::benchmark(), &bench_params, 7).unwrap();
    let impr = run_batch(&impr_policy, &session, &EnvMode::improved(p), p, 7).unwrap();
    let gap = bench.mean_terminal_wealth() - impr.mean_terminal_wealth();
    let se = (bench.standard_error().powi(2) + impr.standard_error().powi(2)).sqrt();
    outcome(
        bench.n_paths >= 200 && gap > 2.0 * se,
        format!(
            "{} windows: benchmark {:.4}, improved {:.4}, gap {:.4} = {:.1} SE",
            bench.n_paths,
            bench.mean_terminal_wealth(),
            impr.mean_terminal_wealth(),
            gap,
            gap / se
        ),
    )
}

fn accounting(batches: &[&BatchResult], q_max: i32) -> Outcome {
    let mut bad = 0usize;
    let mut windows = 0usize;
    for b in batches {
        for w in &b.windows {
            windows += 1;
            let (mut c, mut q) = (0.0f64, 0i32);
            let n = w.posted_bid.len();
            let mut ok = w.cash[0] == 0.0 && w.inventory[0] == 0;
            for i in 0..n {
                for f in w.fills.iter().filter(|f| f.t_index == i) {
                    match f.side {
                        Side::Ask => {
                            c += f.price;
                            q -= 1;
                        }
                        Side::Bid => {
                            c -= f.price;
                            q += 1;
                        }
                    }
                }
                ok &= w.cash[i + 1] == c && w.inventory[i + 1] == q && q.abs() <= q_max;
                ok &= w.wealth[i] == w.cash[i] + w.inventory[i] as f64 * w.mid[i];
            }
            bad += !ok as usize;
        }
    }
    outcome(bad == 0, format!("{windows} windows replayed, {bad} mismatches"))
}

fn example1_exhaustive() -> Outcome {
    let mut ok = true;
    for seed in 0..50 {
        let log = run_example1(1000, 0.25, seed).unwrap();
        let adverse = log.fills.iter().filter(|f| f.kind == FillKind::Adverse).count();
        let non = log.fills.len() - adverse;
        ok &= log.fills.len() == 1000 && adverse + non == 1000 && log.totals.total() == 1000;
        let frozen = run_example1(1000, 0.0, seed).unwrap();
        ok &= frozen.fills.iter().all(|f| f.kind == FillKind::NonAdverse) && frozen.fills.len() == 1000;
    }
    outcome(ok, "50 seeds x 1000 steps, random and frozen walks")
}

fn ladder_replay() -> Outcome {
    let quotes = [(81.87, 81.88), (81.85, 81.86), (81.81, 81.82), (81.86, 81.87)];
    let series = PriceSeries {
        t0: 0,
        dt: 1.0,
        bid: quotes.iter().map(|q| q.0).collect(),
        ask: quotes.iter().map(|q| q.1).collect(),
        level1_bid_sz: vec![10; 4],
        level1_ask_sz: vec![10; 4],
        trades: Some(vec![Vec::new(); 4]),
    };
    let mut poster = BasicPoster::new(&series, BasicPostConfig::for_instrument(Instrument::Cl)).unwrap();
    let ladder = |p: &BasicPoster| {
        let o = p.orders();
        let side = |s| o.iter().filter(|x| x.side == s).map(|x| x.price).collect::<Vec<_>>();
        (side(Side::Bid), side(Side::Ask))
    };
    let mut log = FillLog::default();
    let mut ok = ladder(&poster) == (vec![81.86], vec![81.90]);
    let expected = [
        ((Side::Bid, 81.86), (vec![81.82], vec![81.90])),
        ((Side::Bid, 81.82), (vec![81.78], vec![81.86, 81.90])),
        ((Side::Ask, 81.86), (vec![81.82, 81.78], vec![81.90])),
    ];
    for (i, (fill, book)) in expected.into_iter().enumerate() {
        poster.step(&series, i, &mut log);
        ok &= log.fills.len() == i + 1 && (log.fills[i].side, log.fills[i].price) == fill;
        ok &= ladder(&poster) == book;
    }
    outcome(ok, "posts 81.86/81.90, fills 81.86 -> bid 81.82, fills 81.82 -> 81.78 and 81.86, fills 81.86 -> 81.82")
}

fn run_cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_mmsim"))
        .args(["--seed", "11", "--out"])
        .arg(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn cli_determinism() -> Outcome {
    let root = tempfile::tempdir().expect("temp dir");
    let mut ok = true;
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        let policy = dir.join("policy.csv");
        ok &= run_cli(&dir, &["solve"]);
        ok &= run_cli(&dir, &["simulate", "--policy", policy.to_str().unwrap(), "--windows", "40"]);
        ok &= run_cli(&dir, &["report"]);
        ok &= run_cli(&dir, &["basic-post", "--steps", "3000"]);
        ok &= run_cli(&dir, &["example1", "--steps", "1000", "--seed", "7"]);
    }
    let mut names: Vec<_> = fs::read_dir(root.path().join("a"))
        .map(|d| d.filter_map(|e| e.ok()).map(|e| e.file_name()).collect())
        .unwrap_or_default();
    names.sort();
    let same = names
        .iter()
        .filter(|n| fs::read(root.path().join("a").join(n)).ok() == fs::read(root.path().join("b").join(n)).ok())
        .count();
    outcome(
        ok && same == names.len() && names.len() >= 10,
        format!("{same}/{} output files byte-identical across two runs", names.len()),
    )
}

fn main() -> ExitCode {
    let p = default_params();
    let g = SolverGrid::default();
    let surface = solve_dpe(&p, &g).expect("default grid solves");

    let improved_session = synthetic_session(&p, 3000, 99);
    let improved_policy = extract_policy(&surface, &p);
    let improved = run_batch(&improved_policy, &improved_session, &EnvMode::improved(&p), &p, 5).unwrap();
    let bench_params = p.with_rho(1.0);
    let bench_policy = extract_policy(&solve_dpe(&bench_params, &g).unwrap(), &bench_params);
    let bench = run_batch(&bench_policy, &synthetic_session(&p, 200, 98), &EnvMode::benchmark(), &bench_params, 5).unwrap();

    let criteria: Vec<(&str, Check)> = vec![
        ("solver terminal exactness", Box::new(|| terminal_exactness(&p, &surface))),
        ("solver symmetry", Box::new(|| symmetry(&p, &surface))),
        ("single-step stencil oracle", Box::new(|| single_step_oracle(&p, &g))),
        ("policy consistency", Box::new(|| policy_consistency(&p, &surface))),
        ("grid convergence", Box::new(|| convergence(&p))),
        ("adverse-fill guarantee", Box::new(|| adverse_guarantee(&improved))),
        ("fill-probability calibration", Box::new(|| calibration(&improved, p.rho))),
        ("environment ordering", Box::new(|| ordering(&p, &g))),
        ("accounting replay", Box::new(|| accounting(&[&improved, &bench], p.q_max))),
        ("example 1 exhaustiveness", Box::new(example1_exhaustive)),
        ("example 2 ladder replay", Box::new(ladder_replay)),
        ("CLI determinism", Box::new(cli_determinism)),
    ];

    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        failed += !o.pass as usize;
        println!(
            "[{}] {:>2} {name}: {} ({:.2}s)",
            if o.pass { "PASS" } else { "FAIL" },
            k + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
