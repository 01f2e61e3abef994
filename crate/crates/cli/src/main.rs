//! Command line driver for the mixql engine: load CSV tables into a
//! workspace, run recursive dialect scripts, train mixture-model views,
//! query them, and keep them maintained under inserts and deletes.

mod commands;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use workspace::Workspace;

#[derive(Parser)]
#[command(name = "mixql", version, about = "Mixture-model views over a recursive SQL engine")]
struct Cli {
    /// Workspace directory holding workspace.toml, data/ and views/.
    #[arg(long, global = true, default_value = ".")]
    workspace: PathBuf,
    /// Seed for commands that draw random numbers (train, generate).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the per-iteration evaluation trace of `run` as CSV.
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a CSV file as a table, copying it into the workspace.
    Load { table: String, csv: PathBuf },
    /// Parse, validate, lower and evaluate a dialect script.
    Run {
        script: PathBuf,
        /// Also write the result relation to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a mixture model over a table and persist it as a model view.
    Train {
        view: String,
        /// Model family: gmm, mlr or moe.
        #[arg(long)]
        model: String,
        #[arg(long)]
        table: String,
        /// Number of mixture components.
        #[arg(long)]
        k: usize,
        /// EM iterations (the recursion bound of one engine run).
        #[arg(long, default_value_t = 10)]
        iterations: u32,
        /// Keep running until a whole run gains less than this.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Lower bound for random initialization (default: data minimum).
        #[arg(long)]
        lo: Option<f64>,
        /// Upper bound for random initialization (default: data maximum).
        #[arg(long)]
        hi: Option<f64>,
    },
    /// Posterior responsibilities (id, k, p) of a table under a view.
    Infer {
        view: String,
        #[arg(long)]
        table: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Hard cluster assignment (id, k): the argmax responsibility.
    Assign {
        view: String,
        #[arg(long)]
        table: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Purity and NMI of an assignment against labeled truth.
    Eval {
        /// Assignment relation: a registered table or a CSV path.
        assignments: String,
        /// Truth relation with (id, label): a registered table or a CSV path.
        truth: String,
    },
    /// Write a seeded synthetic dataset with a hidden label column.
    Generate {
        /// Generator family: gaussian or linear.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
        /// Lower bound of the parameter range.
        #[arg(long, default_value_t = 0.0)]
        lo: f64,
        /// Upper bound of the parameter range.
        #[arg(long, default_value_t = 10.0)]
        hi: f64,
        /// Noise standard deviation around each component.
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        /// Z-score the features (zero mean, unit variance per coordinate).
        #[arg(long)]
        normalize: bool,
        out: PathBuf,
    },
    /// Bind a trained gmm view to a table so mutations maintain it.
    Attach {
        #[arg(long)]
        table: String,
        #[arg(long)]
        view: String,
        /// Retain-set strategy: entropy or distance.
        #[arg(long)]
        strategy: String,
        /// Mahalanobis radius (distance strategy only).
        #[arg(long)]
        radius: Option<f64>,
        /// Maximum original points staged per statement.
        #[arg(long, default_value_t = 0)]
        budget: usize,
        /// Stochastic refinement passes per statement.
        #[arg(long, default_value_t = 0)]
        passes: u32,
        /// Rebuild statistics from the base table at every statement
        /// instead of persisting them beside the view.
        #[arg(long)]
        no_precompute: bool,
    },
    /// Insert rows from a CSV, firing any maintenance triggers.
    Insert { table: String, csv: PathBuf },
    /// Delete rows by id, firing any maintenance triggers.
    Delete {
        table: String,
        /// Comma-separated row ids.
        #[arg(long, value_delimiter = ',', required = true)]
        ids: Vec<i64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let mut ws = Workspace::open(&cli.workspace)?;
    match cli.command {
        Command::Load { table, csv } => {
            commands::cmd_load(&mut ws, &table, &csv)?;
        }
        Command::Run { script, out } => {
            commands::cmd_run(&ws, &script, out.as_deref(), cli.trace.as_deref())?;
        }
        Command::Train { view, model, table, k, iterations, epsilon, lo, hi } => {
            commands::cmd_train(
                &mut ws, &view, &model, &table, k, iterations, epsilon, lo, hi, cli.seed,
            )?;
        }
        Command::Infer { view, table, out } => {
            commands::cmd_infer(&ws, &view, &table, out.as_deref())?;
        }
        Command::Assign { view, table, out } => {
            commands::cmd_assign(&ws, &view, &table, out.as_deref())?;
        }
        Command::Eval { assignments, truth } => {
            commands::cmd_eval(&ws, &assignments, &truth)?;
        }
        Command::Generate { kind, n, d, k, lo, hi, noise, normalize, out } => {
            commands::cmd_generate(&kind, n, d, k, cli.seed, lo, hi, noise, normalize, &out)?;
        }
        Command::Attach { table, view, strategy, radius, budget, passes, no_precompute } => {
            commands::cmd_attach(
                &mut ws,
                &table,
                &view,
                &strategy,
                radius,
                budget,
                passes,
                cli.seed,
                !no_precompute,
            )?;
        }
        Command::Insert { table, csv } => {
            commands::cmd_insert(&mut ws, &table, &csv)?;
        }
        Command::Delete { table, ids } => {
            commands::cmd_delete(&mut ws, &table, &ids)?;
        }
    }
    Ok(())
}
