//! Command-line front end: `ionheat <command> [--config FILE] [--set key=value]...`.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::RunConfig;
use output::Output;

/// Directory used when neither `--out-dir` nor `IONHEAT_OUT_DIR` is given.
pub const DEFAULT_OUT_DIR: &str = "ionheat-out";

#[derive(Debug, Parser)]
#[command(name = "ionheat", version, about = "Technical-noise heating budgets for surface-electrode ion traps")]
struct Cli {
    /// TOML run configuration; defaults describe the bundled trap.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all artifacts.
    #[arg(long, global = true, env = "IONHEAT_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Override a config key, e.g. `--set trap.rf_amplitude=45`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed for stochastic commands (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Unit-voltage potential and field of each electrode group along a line.
    Fields,
    /// Equilibrium, secular frequencies, pseudopotential gradient and distances.
    Trap,
    /// Propagate a noise spectrum through a transfer chain.
    Chain,
    /// Heating budget at the operating point under each correlation scenario.
    Budget,
    /// Fit heating rate against injected PSD.
    Fit {
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Stochastic ion-dynamics check of the heating formulas.
    Oracle {
        /// secular, rf_noise or drive
        #[arg(long)]
        kind: Option<String>,
    },
    /// Generate a synthetic heating-rate dataset.
    Synth {
        #[arg(long)]
        regime: Option<String>,
    },
    /// Run the acceptance criteria and print a pass/fail table.
    Reproduce {
        /// Criterion to run; repeat for several. All when omitted.
        #[arg(long = "criterion")]
        criteria: Vec<u8>,
    },
}

/// Parses `argv` (program name first), runs the command and returns the exit code:
/// 0 on success, 1 for usage or validation errors, 2 for numerical failures.
pub fn dispatch<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> i32 {
    let numerical = e.chain().any(|c| c.downcast_ref::<ionheat::Error>().is_some_and(ionheat::Error::is_numerical));
    if numerical {
        2
    } else {
        1
    }
}

fn execute(cli: Cli) -> Result<()> {
    let mut overrides = cli.set.clone();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    match &cli.command {
        Command::Fit { regime: Some(r), .. } | Command::Synth { regime: Some(r) } => {
            let section = if matches!(cli.command, Command::Fit { .. }) { "fit" } else { "synth" };
            overrides.push(format!("{section}.regime=\"{r}\""));
        }
        _ => {}
    }
    if let Command::Oracle { kind: Some(k) } = &cli.command {
        overrides.push(format!("oracle.kind=\"{k}\""));
    }
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Command::Fit { data: Some(d), .. } = &cli.command {
        // Command-line paths are relative to the working directory, not the config.
        cfg.fit.data = Some(std::path::absolute(d)?);
    }
    let out = Output::new(&cli.out_dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)))?;
    match cli.command {
        Command::Fields => commands::fields::run(&cfg, out),
        Command::Trap => commands::trap::run(&cfg, out),
        Command::Chain => commands::chain::run(&cfg, out),
        Command::Budget => commands::budget::run(&cfg, out),
        Command::Fit { .. } => commands::fit::run(&cfg, out),
        Command::Oracle { .. } => commands::oracle::run(&cfg, out),
        Command::Synth { .. } => commands::synth::run(&cfg, out),
        Command::Reproduce { criteria } => commands::reproduce::run(&criteria, out),
    }
}
