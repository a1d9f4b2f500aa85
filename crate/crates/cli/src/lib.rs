//! The `clicktionary` command: serve games, simulate bot populations, export
//! bubble maps, and run the analysis battery.
//!
//! Exit codes: 0 on success, 1 on a usage error (bad flags, missing seed,
//! bad config), 2 on a data error. Failures print one `error: <reason>`
//! line on stderr.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use config::Settings;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(
    io::Error,
    clicktionary_core::analysis::AnalysisError,
    clicktionary_core::storage::StorageError,
    clicktionary_core::bots::SimError,
    clicktionary_core::maps::MapError,
    clicktionary_core::GameError,
    clicktionary_core::lobby::LobbyError,
    clicktionary_server::ServerError,
    csv::Error
);

#[derive(Debug, Parser)]
#[command(name = "clicktionary", version, about = "Clicktionary game server and bubble-map analysis")]
pub struct Cli {
    /// Settings file (sectioned key = value)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed for every randomized step
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Root of logs/, exports/, maps/ and of every relative path
    #[arg(long, global = true, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Log more to stderr; repeat for more detail
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Worker threads for parallel steps
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the game server until interrupted
    Serve(ServeArgs),
    /// Play bot pairs through the game engine and log them like real sessions
    Simulate(SimulateArgs),
    /// Write per-pair bubble maps from the event logs
    Export(ExportArgs),
    /// Average exported bubble maps into per-image importance maps
    Aggregate(AggregateArgs),
    /// Split-half consistency, median split, kurtosis and normality report
    Analyze(AnalyzeArgs),
    /// Correlate importance maps with external heatmaps
    Compare(CompareArgs),
    /// Print the top-10 board as CSV
    Leaderboard,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on [server] listen
    #[arg(long)]
    pub listen: Option<String>,
    /// Image manifest, JSON lines [server] manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Clock resolution in ms [server] tick_ms
    #[arg(long)]
    pub tick_ms: Option<u64>,
    /// Wait before a bot partner is assigned [server] bot_wait_ms
    #[arg(long)]
    pub bot_wait_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Population {
    /// Every pair shares one hotspot per image
    Hotspot,
    /// Independent random walkers
    Uniform,
    /// Half tight hotspot pairs, half walkers
    Mixed,
}

impl FromStr for Population {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML); overrides --population, --pairs and --images
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub population: Option<Population>,
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Synthetic images to play when no manifest is given
    #[arg(long)]
    pub images: Option<usize>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Export name under exports/
    #[arg(long)]
    pub experiment: Option<String>,
    /// Only write the event logs
    #[arg(long)]
    pub no_export: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub experiment: Option<String>,
    /// Check that every played image is in this manifest
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Only sessions whose id starts with this
    #[arg(long)]
    pub session_prefix: Option<String>,
    #[arg(long)]
    pub include_bot: bool,
    #[arg(long)]
    pub include_abandoned: bool,
    #[arg(long)]
    pub include_incomplete: bool,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    #[arg(long)]
    pub experiment: Option<String>,
    /// Count bubbles from skipped rounds too
    #[arg(long)]
    pub include_skipped: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub experiment: Option<String>,
    /// Random splits for split-half consistency
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub include_skipped: bool,
    /// Write the report here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for the CSV tables
    #[arg(long)]
    pub tables: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub experiment: Option<String>,
    /// Heatmap manifest: JSON lines of {image_id, source, path}
    #[arg(long)]
    pub heatmaps: Option<PathBuf>,
    /// Only this source; default is every source in the manifest
    #[arg(long)]
    pub source: Option<String>,
    /// Image manifest supplying categories
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub include_skipped: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tables: Option<PathBuf>,
}

pub type Out<'a> = &'a mut (dyn Write + Send);

/// Runs the command with the process environment and standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, std::env::vars(), &mut io::stdout(), &mut io::stderr())
}

/// Runs the command against explicit environment variables and streams.
pub fn run_with<I, T, E>(argv: I, env: E, out: Out, err: Out) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    E: IntoIterator<Item = (String, String)>,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    1
                }
            };
        }
    };
    match execute(cli, env, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if let CliError::Usage(_) = e {
                let _ = writeln!(err, "{}", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        2 => tracing::Level::DEBUG,
        _ => tracing::Level::TRACE,
    };
    // a second call in the same process keeps the first subscriber
    let _ = tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_max_level(level)
        .try_init();
}

fn execute<E>(cli: Cli, env: E, out: Out, err: Out) -> Result<(), CliError>
where
    E: IntoIterator<Item = (String, String)>,
{
    init_logging(cli.verbose);
    let mut settings = match &cli.config {
        Some(p) => Settings::load_file(p)?,
        None => Settings::default(),
    };
    settings.overlay_env(env);
    let data_dir = settings
        .pick(cli.data_dir, "global", "data_dir")?
        .unwrap_or_else(|| PathBuf::from("."));
    let seed = settings.pick(cli.seed, "global", "seed")?;
    let jobs: Option<usize> = settings.pick(cli.jobs, "global", "jobs")?;
    let mut ctx = commands::Ctx {
        settings,
        data_dir,
        seed,
        out,
        err,
    };
    match jobs {
        Some(0) => Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Data(e.to_string()))?;
            pool.install(|| commands::dispatch(cli.command, &mut ctx))
        }
        None => commands::dispatch(cli.command, &mut ctx),
    }
}
