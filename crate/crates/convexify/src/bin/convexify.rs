//! Command-line front end: `forward`, `invert`, `verify`, `sweep` and
//! `landscape`, all driven by a flat key = value config file.
//!
//! Exit codes: 0 on success, 2 for configuration problems, 1 for runtime
//! failures. On failure a machine-readable JSON object is printed to stderr.

use clap::{Args, Parser, Subcommand};
use convexify::config::RunConfig;
use convexify::{pipeline, ConvexifyError};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "convexify",
    about = "Recover a parabolic zeroth-order coefficient from lateral Cauchy data \
             by minimizing a weighted, globally convex cost"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Path to the flat key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `noise.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `carleman.lambda`.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the grid dump and the (optionally noisy) Cauchy traces.
    Forward(Common),
    /// Minimize the weighted cost and recover the coefficient.
    Invert(Common),
    /// Run the structural checks and write a verification report.
    Verify(Common),
    /// Invert once per weight strength in the scan.
    Sweep(Common),
    /// Slice the cost along random directions with and without the weight.
    Landscape(Common),
}

fn load_config(common: &Common) -> Result<(RunConfig, PathBuf), ConvexifyError> {
    // a thread cap of n >= 1 is honored trivially: execution is serial
    if let Ok(v) = std::env::var("CONVEXIFY_THREADS") {
        let n: usize = v.parse().map_err(|_| {
            ConvexifyError::Config(format!("CONVEXIFY_THREADS must be a positive integer, got {v:?}"))
        })?;
        if n == 0 {
            return Err(ConvexifyError::Config(
                "CONVEXIFY_THREADS must be at least 1".into(),
            ));
        }
    }
    let mut cfg = match &common.config {
        Some(path) => RunConfig::parse(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(lambda) = common.lambda {
        if lambda < 0.0 {
            return Err(ConvexifyError::Config(format!(
                "--lambda must be nonnegative, got {lambda}"
            )));
        }
        cfg.lambda = lambda;
    }
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    Ok((cfg, out))
}

fn run(cli: Cli) -> Result<(), ConvexifyError> {
    let common = match &cli.command {
        Command::Forward(c)
        | Command::Invert(c)
        | Command::Verify(c)
        | Command::Sweep(c)
        | Command::Landscape(c) => c,
    };
    let (cfg, out) = load_config(common)?;
    match cli.command {
        Command::Forward(_) => {
            pipeline::cmd_forward(&cfg, &out)?;
            println!("wrote grid.csv and traces.csv to {}", out.display());
        }
        Command::Invert(_) => {
            let report = pipeline::cmd_invert(&cfg, &out)?;
            println!(
                "inverted with lambda = {}: relative L2 error {:.4e} over {} nodes ({})",
                report.lambda,
                report.best_rel_l2,
                report.comparison_nodes,
                out.display()
            );
        }
        Command::Verify(_) => {
            let report = pipeline::cmd_verify(&cfg, &out)?;
            println!(
                "verification {}: see {}/verify.json",
                if report.pass { "passed" } else { "FAILED" },
                out.display()
            );
            if !report.pass {
                return Err(ConvexifyError::Config(
                    "verification checks failed; inspect verify.json".into(),
                ));
            }
        }
        Command::Sweep(_) => {
            let rows = pipeline::cmd_sweep(&cfg, &out)?;
            for r in &rows {
                println!(
                    "lambda = {:>6}: final J = {:.6e}, rel L2 = {:.4e}, {} iters",
                    r.lambda, r.final_j, r.rel_l2_c, r.iters
                );
            }
        }
        Command::Landscape(_) => {
            let report = pipeline::cmd_landscape(&cfg, &out)?;
            println!(
                "landscape at lambda = {}: {} non-convex slices without the weight, \
                 {} with it ({}/landscape.csv)",
                report.lambda_star,
                report.flagged_lambda0.len(),
                report.flagged_lambdastar.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let kind = match &err {
                ConvexifyError::Config(_) | ConvexifyError::Parse(_) => "config",
                ConvexifyError::Io(_) => "io",
                _ => "runtime",
            };
            eprintln!(
                "{}",
                json!({ "error": { "kind": kind, "message": err.to_string() } })
            );
            if kind == "config" {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
