//! `cascade` — decide whether a network of load-balancing cells will
//! synchronize to the fully-loaded state and stay there, then check the
//! verdict by direct nonlinear simulation.

mod commands;
mod output;
mod scenario;

use clap::{Parser, Subcommand, ValueEnum};
use commands::{GenerateArgs, SweepArgs};
use scenario::InitialSpec;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    /// Dump the command's main JSON artifact to stdout.
    Json,
    /// Dump the command's main CSV artifact to stdout.
    Csv,
}

#[derive(Parser)]
#[command(
    name = "cascade",
    version,
    about = "Cascade stability of cellular load balancing: analytic audits and nonlinear simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (JSON, schema 1).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (default: scenario's out_dir, else ./out).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Machine-readable stdout besides the human-readable lines.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a Poisson site field, build the thinned Delaunay neighbor
    /// graph, and write topology + spectrum files.
    Generate {
        /// Expected sites per square kilometer.
        #[arg(long)]
        intensity: f64,
        /// Region as WIDTHxHEIGHT in meters, e.g. 1000x1000.
        #[arg(long)]
        region: String,
        /// Probability of keeping each candidate neighbor link.
        #[arg(long, default_value_t = 1.0)]
        prob: f64,
    },
    /// Analytic stability verdict; the exit code is the gate (0 stable,
    /// 2 unstable, 3 not guaranteed).
    Audit,
    /// Integrate the nonlinear dynamics and compare with the audit.
    Simulate {
        /// Override initial loads: uniform:LO,HI | ones-perturbed | from-radio.
        #[arg(long)]
        initial: Option<InitialSpec>,
    },
    /// Least-squares fit of a polynomial load policy from a (load, rate) CSV.
    Fit {
        /// CSV with 'load' and 'rate' columns.
        #[arg(long)]
        samples: PathBuf,
        /// Polynomial degree (1..=6).
        #[arg(long)]
        degree: usize,
    },
    /// Run scenario variants in parallel and log verdict/outcome pairs.
    Sweep {
        /// JSON pointer to vary, e.g. /simulation/horizon.
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values for --param.
        #[arg(long)]
        values: Option<String>,
        /// Inclusive seed range LO..HI.
        #[arg(long)]
        seeds: Option<String>,
        /// Parallel worker threads.
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    /// Summarize the manifest and the cumulative concordance ledger.
    Report,
}

fn main() {
    let cli = Cli::try_parse().unwrap_or_else(|error| {
        // Keep exit code 2 reserved for the Unstable verdict.
        let _ = error.print();
        std::process::exit(if error.use_stderr() { 1 } else { 0 });
    });

    let scenario_arg = |name: &str| {
        cli.scenario
            .clone()
            .ok_or_else(|| anyhow::anyhow!("the {name} command needs --scenario <file>"))
    };

    let result = match &cli.command {
        Command::Generate {
            intensity,
            region,
            prob,
        } => commands::cmd_generate(
            &GenerateArgs {
                intensity_per_km2: *intensity,
                region: region.clone(),
                connection_probability: *prob,
                seed: cli.seed.unwrap_or(0),
            },
            cli.out_dir
                .as_deref()
                .unwrap_or(std::path::Path::new("out")),
            cli.format,
        ),
        Command::Audit => scenario_arg("audit").and_then(|path| {
            commands::cmd_audit(&path, cli.seed, cli.out_dir.as_deref(), cli.format)
        }),
        Command::Simulate { initial } => scenario_arg("simulate").and_then(|path| {
            commands::cmd_simulate(
                &path,
                cli.seed,
                initial.as_ref(),
                cli.out_dir.as_deref(),
                cli.format,
            )
        }),
        Command::Fit { samples, degree } => commands::cmd_fit(
            samples,
            *degree,
            cli.out_dir
                .as_deref()
                .unwrap_or(std::path::Path::new("out")),
            cli.format,
        ),
        Command::Sweep {
            param,
            values,
            seeds,
            jobs,
        } => scenario_arg("sweep").and_then(|path| {
            commands::cmd_sweep(
                &path,
                cli.seed,
                &SweepArgs {
                    param: param.clone(),
                    values: values.clone(),
                    seeds: seeds.clone(),
                    jobs: *jobs,
                },
                cli.out_dir.as_deref(),
            )
        }),
        Command::Report => commands::cmd_report(
            cli.out_dir
                .as_deref()
                .unwrap_or(std::path::Path::new("out")),
        ),
    };

    match result {
        Ok(code) => std::process::exit(code),
        Err(error) => {
            eprintln!("error: {error:#}");
            std::process::exit(1);
        }
    }
}
