use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mmsim::export::{self, ExportError};
use mmsim::fills::{accumulate, EnvMode, FillCounters};
use mmsim::market_data::{
    default_window, parse_lob_csv, resample_forward_fill, synthetic_quotes, DataError, PriceSeries,
    QuoteWalk,
};
use mmsim::params::{default_params, load_config, validate, ConfigError, MarketParams, SolverGrid};
use mmsim::poster::{
    fill_type_table, run_basic_posting, run_example1, BasicPostConfig, Instrument, PosterError,
};
use mmsim::report::{fill_summary, snapshot_rows, terminal_cash_histogram, ReportError};
use mmsim::sim::{run_batch, synthetic_session, SimError};
use mmsim::solver::{extract_policy, solve_dpe, SolverError};

#[derive(Parser)]
#[command(name = "mmsim", version, about = "Optimal posting solver and market-making backtests")]
struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Parameter file, or `default` for the built-in parameters.
    #[arg(long, global = true, default_value = "default")]
    config: String,
    #[arg(long, global = true, value_enum, default_value_t = Mode::Improved)]
    mode: Mode,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Benchmark,
    Improved,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the value surface; writes surface.csv and policy.csv.
    Solve,
    /// Backtest a policy over consecutive windows; writes batch_wealth.csv,
    /// fills.csv and snapshot_<i>.csv.
    Simulate {
        /// Policy file written by `solve`.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Order-book CSV; a synthetic session is generated when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of synthetic windows.
        #[arg(long, default_value_t = 330)]
        windows: usize,
        /// Number of windows exported as path snapshots.
        #[arg(long, default_value_t = 3)]
        snapshots: usize,
    },
    /// Static-offset ladder posting; writes basic_fills.csv and basic_summary.csv.
    BasicPost {
        /// Order-book CSV; a synthetic random walk is used when absent.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "CL")]
        instrument: String,
        /// Overrides the instrument's preset offset.
        #[arg(long)]
        offset_ticks: Option<i64>,
        /// Synthetic walk length.
        #[arg(long, default_value_t = 23_400)]
        steps: usize,
        #[arg(long, default_value_t = 0.25)]
        walk_p: f64,
        #[arg(long, default_value = "synthetic")]
        date: String,
    },
    /// Always-filled touch quoting on a random walk; writes example1_fills.csv
    /// and example1_summary.csv.
    Example1 {
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, default_value_t = 0.25)]
        walk_p: f64,
    },
    /// Histogram and fill summary of a `simulate` run; writes histogram.csv and summary.csv.
    Report {
        /// Directory holding batch_wealth.csv and fills.csv (defaults to --out).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        bins: usize,
    },
}

enum CliError {
    Validation(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Io(m) => m,
        }
    }
}

macro_rules! validation_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Validation(e.to_string())
            }
        }
    )*};
}

validation_error!(ConfigError, SolverError, SimError, PosterError, ReportError);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(format!("I/O error: {e}"))
    }
}

impl From<ExportError> for CliError {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::Io(_) => CliError::Io(e.to_string()),
            ExportError::Csv(ref c) if c.is_io_error() => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io(_) => CliError::Io(e.to_string()),
            DataError::Csv(ref c) if c.is_io_error() => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(format!("cannot open {}: {e}", path.display())))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

fn load(config: &str) -> Result<(MarketParams, SolverGrid), CliError> {
    if config == "default" {
        return Ok(validate(default_params(), SolverGrid::default()).map_err(ConfigError::from)?);
    }
    let text = fs::read_to_string(config)
        .map_err(|e| CliError::Io(format!("cannot read {config}: {e}")))?;
    Ok(load_config(&text)?)
}

fn load_series(path: &Path, dt: f64) -> Result<PriceSeries, CliError> {
    let records = parse_lob_csv(open(path)?)?;
    let (start, end) = default_window(&records).ok_or(DataError::EmptyInput)?;
    let resampled = resample_forward_fill(&records, dt, start, end)?;
    if resampled.dropped_leading > 0 {
        eprintln!(
            "note: dropped {} leading samples without a quote",
            resampled.dropped_leading
        );
    }
    Ok(resampled.series)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (params, grid) = load(&cli.config)?;
    fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    let mode = match cli.mode {
        Mode::Benchmark => EnvMode::benchmark(),
        Mode::Improved => EnvMode::improved(&params),
    };

    match cli.command {
        Command::Solve => {
            let surface = solve_dpe(&params, &grid)?;
            let policy = extract_policy(&surface, &params);
            export::write_surface(&surface, create(out, "surface.csv")?)?;
            export::write_policy(&surface, &policy, create(out, "policy.csv")?)?;
        }
        Command::Simulate {
            policy,
            data,
            windows,
            snapshots,
        } => {
            let path = policy.ok_or_else(|| {
                CliError::Validation(
                    "PolicyShapeMismatch: no policy given; run `solve` and pass --policy".into(),
                )
            })?;
            let policy = export::read_policy(open(&path)?, &params, &grid)?;
            let session = match data {
                Some(d) => load_series(&d, params.dt)?,
                None => synthetic_session(&params, windows, cli.seed),
            };
            let batch = run_batch(&policy, &session, &mode, &params, cli.seed)?;
            export::write_batch_wealth(&batch, create(out, "batch_wealth.csv")?)?;
            export::write_fills(&batch, create(out, "fills.csv")?)?;
            for (i, w) in batch.windows.iter().take(snapshots).enumerate() {
                export::write_snapshot(&snapshot_rows(w), create(out, &format!("snapshot_{i}.csv"))?)?;
            }
            println!(
                "{} windows, mean terminal wealth {:.6} (se {:.6})",
                batch.n_paths,
                batch.mean_terminal_wealth(),
                batch.standard_error()
            );
        }
        Command::BasicPost {
            data,
            instrument,
            offset_ticks,
            steps,
            walk_p,
            date,
        } => {
            let inst = Instrument::parse(&instrument).ok_or_else(|| {
                CliError::Validation(format!("unknown instrument {instrument:?}; use ES, NQ, CL or ZN"))
            })?;
            let mut config = BasicPostConfig::for_instrument(inst);
            config.seed = cli.seed;
            if let Some(k) = offset_ticks {
                config.offset_ticks = k;
            }
            let series = match data {
                Some(d) => load_series(&d, params.dt)?,
                None => {
                    let mut p = params;
                    p.delta = inst.tick();
                    let walk = QuoteWalk {
                        walk_p,
                        s0: 100.0,
                        tick: inst.tick(),
                        level1_size: 10,
                    };
                    synthetic_quotes(&p, steps, cli.seed, walk)?
                }
            };
            let log = run_basic_posting(&series, config)?;
            let row = fill_type_table(&log);
            export::write_fill_log(&log, create(out, "basic_fills.csv")?)?;
            export::write_table2(&date, inst.as_str(), &row, create(out, "basic_summary.csv")?)?;
            if !log.flagged_steps.is_empty() {
                eprintln!("note: {} steps skipped a repost", log.flagged_steps.len());
            }
            println!("{} fills, {} adverse, {} non-adverse", row.total, row.adverse, row.non_adverse);
        }
        Command::Example1 { steps, walk_p } => {
            let log = run_example1(steps, walk_p, cli.seed)?;
            let row = fill_type_table(&log);
            export::write_fill_log(&log, create(out, "example1_fills.csv")?)?;
            export::write_table2("synthetic", "walk", &row, create(out, "example1_summary.csv")?)?;
            println!("{} fills, {} adverse, {} non-adverse", row.total, row.adverse, row.non_adverse);
        }
        Command::Report { input, bins } => {
            let input = input.unwrap_or_else(|| out.to_path_buf());
            let wealth = export::read_batch_wealth(open(&input.join("batch_wealth.csv"))?)?;
            let fills = export::read_fills(open(&input.join("fills.csv"))?)?;
            let events: Vec<_> = fills.into_iter().map(|(_, f)| f).collect();
            let counters = accumulate(FillCounters::default(), &events);
            let histogram = terminal_cash_histogram(&wealth, bins)?;
            export::write_histogram(&histogram, create(out, "histogram.csv")?)?;
            export::write_summary(&fill_summary(&counters), create(out, "summary.csv")?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
