use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tdoc::artifacts::{exit_code, outcome_name, Experiment};
use tdoc::config::{Axis, ExperimentConfig};
use tdoc::{reference, sweep, validate, Error, Result};

/// Monotonically convergent optimal control of time-dependent targets.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize one config and write its artifacts.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Run a config once per value of one parameter.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// alpha, n, eta, gamma or sigma.
        #[arg(long)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Check a config without optimizing.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Also run the dense-oracle suite.
        #[arg(long)]
        deep: bool,
    },
    /// Write the reference path r(t) of a config's [reference] section.
    Reference {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file or preset name.
    config: String,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output sampling stride in time steps.
    #[arg(long)]
    stride: Option<usize>,
    /// Iteration limit.
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Resume from a checkpoint file.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Write a checkpoint after every iteration.
    #[arg(long)]
    checkpoint: bool,
    /// No per-iteration progress lines.
    #[arg(long, short)]
    quiet: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::from_arg(&self.config)?;
        if let Some(out) = &self.out {
            c.output.dir = out.clone();
        }
        if let Some(stride) = self.stride {
            c.output.stride = stride;
        }
        if let Some(k) = self.max_iter {
            c.control.max_iterations = k;
        }
        if let Some(r) = &self.resume {
            c.output.resume = Some(r.clone());
        }
        c.output.checkpoint |= self.checkpoint;
        Ok(c)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Run { common } => run(&common),
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let config = common.load()?;
            let summary = sweep::run_sweep(&config, axis, &values)?;
            print!("{}", summary.to_csv());
            let failed = summary.rows.iter().any(|r| r.result.is_err());
            Ok(if failed { 1 } else { 0 })
        }
        Command::Validate { common, deep } => {
            let config = common.load()?;
            let mut report = validate::validate(&config);
            if deep {
                report.checks.extend(validate::deep_suite().checks);
            }
            print!("{report}");
            if report.passed() {
                Ok(0)
            } else if config.check().is_empty() {
                Ok(1)
            } else {
                Ok(4)
            }
        }
        Command::Reference { common } => {
            let config = common.load()?;
            let file = reference::generate_reference_trajectory(&config)?;
            println!("{}", file.display());
            Ok(0)
        }
    }
}

fn run(common: &Common) -> Result<i32> {
    let config = common.load()?;
    let failures = config.check();
    if !failures.is_empty() {
        return Err(Error::Config(failures.join("; ")));
    }
    let mut experiment = Experiment::new(config)?;
    let quiet = common.quiet;
    let outcome = experiment.run_with(|_, r| {
        if !quiet {
            eprintln!(
                "k={:5} J={:.10} J1={:.8} dJ={:+.3e} max|e|={:.4e} loss={:.2e}",
                r.k, r.j, r.j1, r.delta_j, r.max_field, r.norm_loss
            );
        }
        true
    })?;
    let artifacts = experiment.finish(outcome)?;
    let r = &artifacts.final_record;
    println!(
        "{} after {} iterations, J1 = {:.8}, J = {:.8}, dJ = {:.3e}; artifacts in {}",
        outcome_name(outcome),
        artifacts.iterations,
        r.j1,
        r.j,
        r.delta_j,
        artifacts.dir.display()
    );
    Ok(exit_code(outcome))
}
