//! Command-line front end: configuration, run orchestration, CSV output and
//! the convergence and entropy study harnesses.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod study;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "spfp", version, about = "Structure-preserving Fokker-Planck solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Single run: diagnostics.csv plus snapshots.
    Run(Overrides),
    /// Grid-refinement study: orders.csv.
    Convergence(Overrides),
    /// Entropy decay on coarse grids: entropy.csv.
    Entropy(Overrides),
    /// Check the configuration and print it with defaults filled in.
    Validate(Overrides),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// mid, nc2, nc4, nc6 or gauss8.
    #[arg(long)]
    pub quadrature: Option<String>,
    /// euler, rk4, ssprk3, si1 or si2.
    #[arg(long)]
    pub integrator: Option<String>,
    /// Point counts of the convergence study, e.g. 21,41,81.
    #[arg(long, value_delimiter = ',')]
    pub grids: Option<Vec<usize>>,
    /// Study times (convergence) or snapshot times (run), e.g. 1,10,20.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
}

impl Overrides {
    /// Loads the configuration, applies the flags and validates the result.
    pub fn resolve(&self, snapshot_times: bool) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(q) = &self.quadrature {
            cfg.scheme.quadrature = q.clone();
            cfg.study.quadratures = vec![q.clone()];
        }
        if let Some(i) = &self.integrator {
            cfg.scheme.integrator = i.clone();
            cfg.study.integrators = vec![i.clone()];
        }
        if let Some(g) = &self.grids {
            cfg.study.grids = g.clone();
        }
        if let Some(t) = &self.times {
            if snapshot_times {
                cfg.output.snapshot_times = t.clone();
            } else {
                cfg.study.times = t.clone();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn execute(command: &Command) -> Result<()> {
    match command {
        Command::Run(o) => {
            let cfg = o.resolve(true)?;
            let out = study::single_run(&cfg)?;
            let dir = &cfg.output.dir;
            output::write(&dir.join("diagnostics.csv"), &output::diagnostics_csv(&out.outcome.report))?;
            for (k, (t, f)) in out.snapshots.iter().enumerate() {
                output::write(&dir.join("snapshots").join(output::snapshot_name(k, *t)), &output::snapshot_csv(f, *t))?;
            }
            println!(
                "{} steps to t = {}; mass drift {:.3e}; output in {}",
                out.outcome.steps,
                cfg.time.t_final,
                out.outcome.report.mass_drift(),
                dir.display()
            );
        }
        Command::Convergence(o) => {
            let cfg = o.resolve(false)?;
            let rows = study::convergence_study(&cfg)?;
            let path = cfg.output.dir.join("orders.csv");
            output::write(&path, &output::orders_csv(&rows, cfg.study.grids.len()))?;
            println!("{} rows written to {}", rows.len(), path.display());
        }
        Command::Entropy(o) => {
            let cfg = o.resolve(false)?;
            let series = study::entropy_study(&cfg)?;
            let path = cfg.output.dir.join("entropy.csv");
            output::write(&path, &output::entropy_csv(&series, cfg.output.stride))?;
            println!("entropy history for grids {:?} written to {}", cfg.study.entropy_grids, path.display());
        }
        Command::Validate(o) => {
            let cfg = o.resolve(false)?;
            print!("{}", cfg.to_toml());
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
