use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use corostefan::config::RunPlan;
use corostefan::run::{run_plan, RunOptions, RunReport};
use corostefan::scenarios;

/// Thermomechanical Stefan simulator with an energy audit after every step.
#[derive(Parser)]
#[command(name = "corostefan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration and write energy.csv, fields_NNNN.vtk and report.json.
    Run(RunArgs),
    /// List the shipped scenario presets.
    Scenarios,
    /// Parse and validate a configuration without running it.
    CheckConfig {
        /// TOML file, or the name of a shipped preset.
        path: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file, or the name of a shipped preset.
    #[arg(long)]
    config: String,
    /// Overrides the step count of every segment.
    #[arg(long)]
    steps: Option<usize>,
    /// Overrides the step size of every segment.
    #[arg(long)]
    tau: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Exit with status 2 when any step fails the audit.
    #[arg(long)]
    strict_audit: bool,
}

fn load(spec: &str) -> Result<RunPlan> {
    let path = PathBuf::from(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        return RunPlan::parse(&text).with_context(|| format!("in {}", path.display()));
    }
    match scenarios::source(spec) {
        Some(text) => RunPlan::parse(text).with_context(|| format!("in preset {spec}")),
        None => bail!("{spec} is neither a readable file nor a shipped scenario"),
    }
}

fn summarize(report: &RunReport) {
    for s in &report.segments {
        println!(
            "segment {}: {}/{} steps, t = {:.6e}, audit {} (min slack/scale {:.3e}, max |drift| {:.3e})",
            s.index,
            s.steps_completed,
            s.steps_requested,
            s.final_time,
            if s.audit.passed { "passed" } else { "FAILED" },
            s.audit.min_relative_slack,
            s.audit.max_abs_relative_drift,
        );
        if let Some(e) = &s.error {
            println!("  stopped: {e}");
        }
        if let Some(st) = &s.stefan {
            println!("  front error vs similarity solution: max {:.4} (omega = {})", st.max_relative_error, st.omega);
        }
        if let Some(d) = &s.dispersion {
            println!(
                "  lambda = {:.3}: measured {:?}, predicted {:?}, relative error {:?}",
                d.lambda, d.measured, d.predicted, d.relative_error
            );
        }
        if let Some(r) = &s.rotation {
            println!(
                "  drift |sph E| {:.3e}, |dev E| {:.3e}, max tr P {:.3e}, max tr Pi {:.3e}",
                r.drift_sph, r.drift_dev, r.max_trace_p, r.max_trace_pi
            );
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let plan = load(&args.config)?.with_overrides(args.steps, args.tau);
    let strict = args.strict_audit || plan.segments.iter().any(|s| s.audit.strict);
    let report = run_plan(&plan, &RunOptions { out_dir: Some(args.out.clone()) })?;
    summarize(&report);
    println!("artifacts in {}", args.out.display());
    if !report.completed {
        eprintln!("run stopped early");
        return Ok(ExitCode::from(1));
    }
    if strict && !report.audit_passed {
        eprintln!("audit failed");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Scenarios => {
            for name in scenarios::names() {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::CheckConfig { path } => load(&path).map(|plan| {
            println!("{}: {} segment(s), valid", plan.name, plan.segments.len());
            ExitCode::SUCCESS
        }),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
