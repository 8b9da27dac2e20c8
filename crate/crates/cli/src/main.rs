mod commands;
mod config;
mod error;
mod expr;
mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use carnot_core::probe::GridSpec;
use clap::{Args, Parser, Subcommand};

use crate::commands::{Expectation, ProbeRequest, SliceWindow};
use crate::config::{BackendKind, ExperimentConfig, Format};
use crate::error::{CliError, CliResult};

/// Distances, semiconcavity probes and Hopf-Lax values on Carnot groups.
#[derive(Debug, Parser)]
#[command(name = "carnot-kit", version)]
struct Cli {
    /// Worker threads (falls back to CARNOT_KIT_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON settings file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file (stdout when absent).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Distance from the identity to a point.
    Dist(DistArgs),
    /// Second-difference scan or first-order limit of a registered field.
    Probe(ProbeArgs),
    /// Solve a Hopf-Lax problem file, one JSON line per (t, p).
    Hopflax(HopflaxArgs),
    /// d0² on the y = 0 plane of the Heisenberg group, as CSV.
    FigureSlice(SliceArgs),
    /// Run a named check suite: core, heisenberg or paper.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct DistArgs {
    /// Builtin group name or path to a group JSON file.
    #[arg(long)]
    group: Option<String>,
    /// Comma-separated coordinates.
    #[arg(long, allow_hyphen_values = true)]
    point: String,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    group: Option<String>,
    /// One of d0, d0sq, neg-d0sq, d0cube, horizontal-sq.
    #[arg(long)]
    field: String,
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// bounded, blowup or limit=VALUE (e.g. limit=-8sqrt(pi)).
    #[arg(long, allow_hyphen_values = true)]
    expect: Option<String>,
    /// Probe point; repeatable. Without points the standard grid is used.
    #[arg(long, allow_hyphen_values = true)]
    point: Vec<String>,
    /// Probe at the unit point of the centre axis.
    #[arg(long)]
    center_axis: bool,
    /// 2 for second-difference scans, 1 for the first-order limit.
    #[arg(long, default_value_t = 2)]
    order: u8,
    /// Direction e1, e2, ... or comma-separated vector; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    dir: Vec<String>,
    /// Decreasing comma-separated |h| levels.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<f64>>,
    /// Relative tolerance for limit expectations.
    #[arg(long, default_value_t = 0.01)]
    tolerance: f64,
}

#[derive(Debug, Args)]
struct HopflaxArgs {
    problem: PathBuf,
    /// Append a semiconcavity verdict of u(t,·) over the problem points.
    #[arg(long)]
    probe_after_solve: bool,
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SliceArgs {
    #[arg(long)]
    group: Option<String>,
    /// Window as lo,hi.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_range, default_value = "-2,2")]
    x_range: (f64, f64),
    #[arg(long, allow_hyphen_values = true, value_parser = parse_range, default_value = "-2,2")]
    z_range: (f64, f64),
    /// Samples per axis.
    #[arg(long, default_value_t = 41)]
    resolution: usize,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    suite: String,
    /// Points used by sampled checks.
    #[arg(long)]
    samples: Option<usize>,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or_else(|| format!("expected lo,hi, got '{s}'"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number '{lo}'"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number '{hi}'"))?;
    Ok((lo, hi))
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cfg.threads(cli.threads)? {
        if n == 0 {
            return Err(CliError::Config("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let seed = cfg.seed(cli.seed);
    let output = cfg.output(cli.output.clone());
    let format = cfg.format(cli.format);

    match cli.command {
        Command::Dist(a) => {
            let spec = cfg.group(a.group.as_deref())?;
            let point = spec.parse_point(&a.point)?;
            let backend = cfg.backend(a.backend, &spec, seed)?;
            let line = commands::dist(&spec, &point, &backend)?;
            commands::emit(output.as_deref(), &(serde_json::to_string(&line).expect("serializes") + "\n"))
        }
        Command::Probe(a) => {
            let spec = cfg.group(a.group.as_deref())?;
            let backend = cfg.backend(a.backend, &spec, seed)?;
            let mut points = a
                .point
                .iter()
                .map(|s| spec.parse_point(s))
                .collect::<carnot_core::Result<Vec<_>>>()?;
            if a.center_axis {
                points.push(commands::center_axis_point(&spec)?);
            }
            let directions = if a.dir.is_empty() {
                None
            } else {
                Some(a.dir.iter().map(|d| commands::parse_direction(&spec, d)).collect::<CliResult<Vec<_>>>()?)
            };
            let expect = a.expect.as_deref().map(str::parse::<Expectation>).transpose()?;
            let grid = cfg.grid.clone().unwrap_or(GridSpec { seed, ..Default::default() });
            let req = ProbeRequest {
                field: a.field,
                backend,
                points,
                grid,
                order: a.order,
                directions,
                ladder: cfg.ladder(a.ladder),
                seed,
                expect,
                tolerance: a.tolerance,
            };
            commands::probe(&spec, &req, output.as_deref(), format)
        }
        Command::Hopflax(a) => {
            let text = commands::hopflax(&a.problem, a.probe_after_solve, &cfg.ladder(a.ladder), seed)?;
            commands::emit(output.as_deref(), &text)
        }
        Command::FigureSlice(a) => {
            let spec = cfg.group(a.group.as_deref())?;
            let w = SliceWindow {
                x: a.x_range,
                z: a.z_range,
                nx: a.resolution,
                nz: a.resolution,
            };
            commands::emit(output.as_deref(), &commands::figure_slice(&spec, &w)?)
        }
        Command::Verify(a) => {
            let opts = verify::VerifyOptions {
                seed,
                samples: a.samples.or(cfg.samples).unwrap_or(10),
            };
            let rep = verify::run(&a.suite, &opts)?;
            let text = match format {
                Format::Json => rep.to_json(),
                Format::Csv => rep.to_csv(),
            };
            commands::emit(output.as_deref(), &text)?;
            if rep.passed() {
                Ok(())
            } else {
                let failed: Vec<&str> = rep
                    .checks
                    .iter()
                    .filter(|c| c.status == report::Status::Fail)
                    .map(|c| c.name.as_str())
                    .collect();
                Err(CliError::Expectation(format!("failed checks: {}", failed.join(", "))))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors share the bad-configuration code
            return if e.use_stderr() { ExitCode::from(4) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("carnot-kit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
