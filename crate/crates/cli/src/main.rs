use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use encstore_cli::commands::{cmd_plan, cmd_reduce, cmd_sweep, cmd_verify, CliError};
use encstore_cli::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "encstore",
    version,
    about = "Storage siting and sizing under an emissions-neutrality constraint"
)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// `builtin` or `mps-only`.
    #[arg(long, global = true)]
    solver: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Pick representative days and write repdays.csv.
    Reduce {
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        variance: Option<String>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve one cell and write outcome.json and records.csv.
    Plan {
        #[arg(long)]
        perspective: Option<String>,
        /// `on` or `off`.
        #[arg(long)]
        enc: Option<String>,
        #[arg(long)]
        carbon_price: Option<String>,
        #[arg(long)]
        storage_price: Option<String>,
        /// Also bound the PhSI with the single-level model.
        #[arg(long)]
        pcsle: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Solve the configured grid and write sweep.csv and report/.
    Sweep {
        #[arg(long)]
        carbon_prices: Option<String>,
        #[arg(long)]
        storage_prices: Option<String>,
        #[arg(long)]
        perspectives: Option<String>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the reduction, dispatch, duality and selection audits.
    Verify {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn configure(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        cfg.apply_text(&text)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    }
    let mut flags: Vec<(&str, &Option<String>)> = vec![("solver", &cli.solver)];
    match &cli.cmd {
        Cmd::Reduce {
            k, variance, seed, ..
        } => {
            flags.extend([("k", k), ("variance", variance), ("seed", seed)]);
        }
        Cmd::Plan {
            perspective,
            enc,
            carbon_price,
            storage_price,
            ..
        } => {
            flags.extend([
                ("perspective", perspective),
                ("enc", enc),
                ("carbon_price", carbon_price),
                ("storage_price", storage_price),
            ]);
        }
        Cmd::Sweep {
            carbon_prices,
            storage_prices,
            perspectives,
            ..
        } => {
            flags.extend([
                ("carbon_prices", carbon_prices),
                ("storage_prices", storage_prices),
                ("perspectives", perspectives),
            ]);
        }
        Cmd::Verify { .. } => {}
    }
    for kv in &cli.set {
        cfg.apply_override(kv)
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)
                .map_err(|e| CliError::Usage(e.to_string()))?;
        }
    }
    if let Cmd::Plan { pcsle: true, .. } = cli.cmd {
        cfg.pcsle = true;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = configure(cli)?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| CliError::Domain(e.to_string()))?;
    }
    match &cli.cmd {
        Cmd::Reduce { out, .. } => cmd_reduce(&cfg, out),
        Cmd::Plan { out, .. } => cmd_plan(&cfg, out),
        Cmd::Sweep { out, .. } => cmd_sweep(&cfg, out),
        Cmd::Verify { out } => cmd_verify(&cfg, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
