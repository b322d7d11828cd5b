use clap::{Args, Parser, Subcommand};
use neqsig_cli::{
    cmd_additivity, cmd_analyze, cmd_predict, cmd_relax, cmd_simulate, load_config,
    resolve_out, CliError,
};
use std::path::PathBuf;

/// Hidden-variables simulator and statistics for two-state systems.
#[derive(Parser)]
#[command(name = "neqsig", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Top-level seed, overriding the config's
    #[arg(long)]
    seed: Option<u64>,
    /// Output file path (overrides config/env output directory)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact transmission curves over the angle grid (CSV)
    Predict(Common),
    /// Simulate the photon protocol into an event file (CSV/JSONL)
    Simulate(Common),
    /// Fit and test an event stream, emitting a JSON report
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Event file path, or `-` for standard input
        #[arg(long)]
        events: String,
    },
    /// Expectation-additivity test across arrangements (JSON report)
    Additivity(Common),
    /// Coarse-grained H-function relaxation run (CSV series + histogram)
    Relax(Common),
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let (common, default_name): (&Common, &str) = match &cli.cmd {
        Cmd::Predict(c) => (c, "predict.csv"),
        Cmd::Simulate(c) => (c, "events.csv"),
        Cmd::Analyze { common, .. } => (common, "report.json"),
        Cmd::Additivity(c) => (c, "additivity.json"),
        Cmd::Relax(c) => (c, "relax.csv"),
    };
    let cfg = load_config(common.config.as_deref())?;
    let seed = cfg.effective_seed(common.seed);
    let out = resolve_out(common.out.as_deref(), &cfg, default_name);
    match &cli.cmd {
        Cmd::Predict(_) => cmd_predict(&cfg, seed, &out)?,
        Cmd::Simulate(_) => cmd_simulate(&cfg, seed, &out)?,
        Cmd::Analyze { events, .. } => cmd_analyze(&cfg, seed, events, &out)?,
        Cmd::Additivity(_) => cmd_additivity(&cfg, seed, &out)?,
        Cmd::Relax(_) => cmd_relax(&cfg, seed, &out)?,
    }
    Ok(out)
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => eprintln!("wrote {}", out.display()),
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code() as i32);
        }
    }
}
