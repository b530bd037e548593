//! `qnuis`: precision bounds, classification, orthogonalization and Monte-Carlo simulation
//! for quantum models with nuisance parameters.
//!
//! Exit codes: 0 on success, 2 for model or configuration errors, 3 for numerical failures,
//! 1 when the environment fails (writing output, starting threads).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod output;
mod spec;

use std::io::{self, Write};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};
use crate::spec::ModelSpec;

#[derive(Debug, Parser)]
#[command(
    name = "qnuis",
    version,
    about = "Quantum Cramér–Rao bounds with nuisance parameters"
)]
struct Cli {
    /// Worker threads (0 = one per logical core).
    #[arg(long, global = true, env = "QNUIS_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate SLD, RLD, Holevo and Nagaoka bounds at a point.
    Bound(commands::BoundArgs),
    /// Classify a model (D-invariant, asymptotically classical, classical, quasi-classical).
    Classify(commands::ClassifyArgs),
    /// Integrate the global orthogonalization ODE and emit the trajectory.
    Orthogonalize(commands::OrthogonalizeArgs),
    /// Monte-Carlo simulation of a repetitive or two-step estimation strategy.
    Simulate(commands::SimulateArgs),
    /// Describe a model at a point, or fit it to outcome counts.
    Model(commands::DescribeArgs),
}

/// Model selection shared by every command.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// JSON model specification file: {"zoo", "config", "point", "partition", "weight"}.
    #[arg(long)]
    spec: Option<String>,
    /// Zoo model name (overrides the spec file).
    #[arg(long)]
    model: Option<String>,
    /// Hilbert-space dimension for dimension-generic zoo models.
    #[arg(long)]
    d_h: Option<usize>,
    /// Parameter point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    point: Option<String>,
    /// Number of parameters of interest (the leading ones); default all.
    #[arg(long)]
    interest: Option<usize>,
    /// Weight matrix for the interest block: "identity" or rows like "1,0;0,2".
    #[arg(long)]
    weight: Option<String>,
}

impl ModelArgs {
    /// The spec file (if any) with command-line overrides applied.
    pub fn resolve(&self) -> CliResult<ModelSpec> {
        let mut spec = match &self.spec {
            Some(path) => ModelSpec::from_file(path)?,
            None => ModelSpec::default(),
        };
        if let Some(m) = &self.model {
            spec.zoo = Some(m.clone());
        }
        if let Some(d) = self.d_h {
            spec.config.d_h = Some(d);
        }
        if let Some(p) = &self.point {
            spec.point = Some(spec::parse_list(p)?);
        }
        if let Some(k) = self.interest {
            spec.partition = Some(k);
        }
        if let Some(w) = &self.weight {
            spec.weight = Some(serde_json::Value::String(w.clone()));
        }
        Ok(spec)
    }
}

fn run(cli: Cli, out: &mut impl Write) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()?;
    // Output is assembled in memory, so nothing partial is printed on failure.
    let mut buf = Vec::new();
    pool.install(|| match &cli.command {
        Command::Bound(a) => commands::run_bound(a, &mut buf),
        Command::Classify(a) => commands::run_classify(a, &mut buf),
        Command::Orthogonalize(a) => commands::run_orthogonalize(a, &mut buf),
        Command::Simulate(a) => commands::run_simulate(a, &mut buf),
        Command::Model(a) => commands::run_model(a, &mut buf),
    })?;
    out.write_all(&buf)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out).and_then(|_| out.flush().map_err(CliError::from)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qnuis: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
