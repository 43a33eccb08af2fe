//! Command-line front end: simulate tracks, fit the mixture, select `(K, m)`
//! by ICL and summarise a fit.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;
pub mod samples;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_fit, cmd_select, cmd_simulate, cmd_summarize, render_table, RunOptions};
pub use config::RunConfig;
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "logitn-gp", version, about = "Logistic-normal GP mixtures for animal movement tracks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a synthetic track.
    Simulate(CommonArgs),
    /// Fit one chain.
    Fit(CommonArgs),
    /// Fit every (K, m) pair and rank them by ICL.
    Select(CommonArgs),
    /// Print posterior means and intervals of a finished fit.
    Summarize(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
    /// No progress output.
    #[arg(long, short)]
    pub quiet: bool,
}

impl CommonArgs {
    fn load(&self) -> Result<(RunConfig, RunOptions)> {
        let cfg = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        let opts = RunOptions { seed: self.seed, out: self.out.clone(), force: self.force, quiet: self.quiet };
        Ok((cfg, opts))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let (cfg, opts) = a.load()?;
            let dir = cmd_simulate(&cfg, &opts)?;
            println!("{}", dir.display());
        }
        Command::Fit(a) => {
            let (cfg, opts) = a.load()?;
            let dir = cmd_fit(&cfg, &opts)?;
            println!("{}", dir.display());
        }
        Command::Select(a) => {
            let (cfg, opts) = a.load()?;
            let sel = cmd_select(&cfg, &opts)?;
            for (i, c) in sel.cells.iter().enumerate() {
                let mark = if i == sel.selected { " *" } else { "" };
                match &c.result {
                    Ok(r) => println!("K={} m={}  icl={}{mark}", c.k, c.m, output::num(r.icl)),
                    Err(e) => println!("K={} m={}  failed: {e}", c.k, c.m),
                }
            }
        }
        Command::Summarize(a) => {
            let (cfg, opts) = a.load()?;
            let dir = opts.out.or(cfg.out).ok_or(CliError::NoOutput)?;
            print!("{}", render_table(&cmd_summarize(&dir)?));
        }
    }
    Ok(())
}
