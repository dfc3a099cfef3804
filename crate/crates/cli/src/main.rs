mod commands;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use msmac::analytic::{AnalyticOptions, BufferedPrefactor, CollisionRate};

/// Mini-slot carrier-sensing MAC: analytic model and simulator.
#[derive(Debug, Parser)]
#[command(name = "msmac", version, about)]
struct Cli {
    /// More progress output on stderr (repeatable).
    #[arg(long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only errors on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate a scenario without running anything.
    Validate(ScenarioArgs),
    /// Evaluate the analytic model.
    Analyze {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the simulator.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Write the event log of the first replication as JSON lines.
        #[arg(long, value_name = "PATH")]
        export_log: Option<PathBuf>,
    },
    /// Analytic model against simulation, with tolerances.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_name = "FILE")]
        profile: Option<PathBuf>,
    },
    /// Compare over a grid of parameter values.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, value_name = "FILE")]
        profile: Option<PathBuf>,
        /// `key=logspace(a,b,n)`, `key=linspace(a,b,n)` or `key=[v, ...]`
        /// (repeatable; the grid is the cartesian product).
        #[arg(long = "axis", value_name = "AXIS", required = true)]
        axes: Vec<String>,
        /// Evaluate only the analytic model at each point.
        #[arg(long)]
        analytic_only: bool,
    },
}

#[derive(Debug, Args, Clone)]
struct ScenarioArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// `dotted.key=value`, applied before validation (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Warn about unknown keys instead of rejecting them.
    #[arg(long)]
    lenient: bool,
}

#[derive(Debug, Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = Prefactor::OwnRate)]
    buffered_prefactor: Prefactor,
    #[arg(long, value_enum, default_value_t = Collision::Partner)]
    collision_rate: Collision,
}

#[derive(Debug, Args, Clone)]
struct RunArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "SLOTS")]
    horizon: Option<u64>,
    #[arg(long)]
    replications: Option<u32>,
    /// Confidence level of the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
}

#[derive(Debug, Args, Clone)]
struct OutArgs {
    /// Directory for the manifest, inputs and results.
    #[arg(long, value_name = "DIR", env = "MSMAC_OUT", default_value = "msmac-out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Prefactor {
    OwnRate,
    SensedRate,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Collision {
    Partner,
    Own,
}

impl ModelArgs {
    fn options(&self) -> AnalyticOptions {
        AnalyticOptions {
            buffered_prefactor: match self.buffered_prefactor {
                Prefactor::OwnRate => BufferedPrefactor::OwnRate,
                Prefactor::SensedRate => BufferedPrefactor::SensedRate,
            },
            collision_rate: match self.collision_rate {
                Collision::Partner => CollisionRate::Partner,
                Collision::Own => CollisionRate::Own,
            },
            ..AnalyticOptions::default()
        }
    }
}

impl RunArgs {
    /// The run flags as overrides, so they end up in the manifest.
    fn overrides(&self) -> Vec<String> {
        let mut o = Vec::new();
        if let Some(s) = self.seed {
            o.push(format!("run.seed={s}"));
        }
        if let Some(h) = self.horizon {
            o.push(format!("run.horizon_slots={h}"));
        }
        if let Some(r) = self.replications {
            o.push(format!("run.replications={r}"));
        }
        o
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "error",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .format_target(false)
        .init();
    match commands::dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
