//! `redmule-sim`: run single simulations, parameter sweeps and the
//! self-check suite.
//!
//! Exit status: 0 success, 2 usage or configuration error, 3 bandwidth
//! infeasible configuration, 4 functional mismatch, 1 I/O failure.

mod config;
mod verify;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use redmule_sim::report::{emit, sweep, sweep_csv, Execution, ReportFormat, RunReport, SweepSpec, Workload, CSV_HEADER};
use redmule_sim::SimError;

use config::{parse_format, parse_memory, RunConfig};

#[derive(Parser)]
#[command(name = "redmule-sim", version, about = "Cycle-level GEMM-Op engine simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Simulate one workload and write its report.
    Run {
        /// JSON file with the same fields as the flags; flags win.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        args: RunConfig,
    },
    /// Run the arithmetic, equivalence and graph self-checks.
    Verify {
        /// Smaller sample sizes.
        #[arg(long)]
        quick: bool,
    },
    /// Evaluate the cross product of L, H and P values from a JSON spec.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
        /// Worker threads; defaults to REDMULE_SIM_THREADS, then all cores.
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Failure classes with their exit codes.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Infeasible(anyhow::Error),
    Mismatch(String),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Mismatch(_) => 4,
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<SimError>() {
            Some(SimError::BandwidthInfeasible { .. }) => Failure::Infeasible(e),
            _ => Failure::Usage(e),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::from(anyhow::Error::new(e))
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())).map_err(Failure::Io),
        None => std::io::stdout().write_all(text.as_bytes()).context("writing to stdout").map_err(Failure::Io),
    }
}

fn trace_stem(out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => p.with_extension(""),
        None => PathBuf::from("redmule-sim"),
    }
}

fn write_traces(stem: &Path, exec: &Execution) -> Result<(), Failure> {
    let mut cycles = String::new();
    for r in &exec.output.cycles {
        cycles.push_str(&r.to_string());
        cycles.push('\n');
    }
    let with = |ext: &str| PathBuf::from(format!("{}.{ext}", stem.display()));
    write_output(Some(&with("cycles.txt")), &cycles)?;
    write_output(Some(&with("access.csv")), &exec.output.trace.to_csv())
}

fn cmd_run(config: Option<PathBuf>, args: RunConfig) -> Result<(), Failure> {
    let base = match &config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let r = base.merged(args).resolve()?;
    let mut reports: Vec<RunReport> = Vec::new();
    let mut mismatches = Vec::new();
    for (i, &dims) in r.shapes.iter().enumerate() {
        let workload = Workload { dims, kernel: r.kernel, seed: r.seed, distribution: r.distribution, fp8_format: r.fp8_in };
        let exec = workload.execute(&r.cfg, &r.memory, &r.params, r.freq_mhz, r.check)?;
        if r.trace {
            let stem = trace_stem(r.out.as_deref());
            let stem = if r.shapes.len() > 1 { PathBuf::from(format!("{}-{i}-{dims}", stem.display())) } else { stem };
            write_traces(&stem, &exec)?;
        }
        if exec.report.check_passed == Some(false) {
            mismatches.push(format!("{} {dims}", r.kernel));
        }
        reports.push(exec.report);
    }
    let text = match (r.format, reports.as_slice()) {
        (_, [one]) => emit(one, r.format),
        (ReportFormat::Json, many) => serde_json::to_string_pretty(many).expect("reports serialize") + "\n",
        (ReportFormat::Csv, many) => {
            let mut s = format!("{CSV_HEADER}\n");
            for rep in many {
                s.push_str(emit(rep, ReportFormat::Csv).lines().nth(1).unwrap_or_default());
                s.push('\n');
            }
            s
        }
    };
    write_output(r.out.as_deref(), &text)?;
    if r.out.is_some() {
        for rep in &reports {
            println!(
                "{} {} on {}: {} cycles, utilization {:.4}, {:.2} op/cycle",
                rep.kernel, rep.dims, rep.config, rep.total_cycles, rep.utilization, rep.op_per_cycle
            );
        }
    }
    if !mismatches.is_empty() {
        return Err(Failure::Mismatch(format!("result differs from the golden model: {}", mismatches.join(", "))));
    }
    Ok(())
}

fn sweep_threads(flag: Option<usize>) -> Result<Option<usize>, Failure> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var("REDMULE_SIM_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Usage(anyhow::anyhow!("REDMULE_SIM_THREADS must be a thread count, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn cmd_sweep(spec: &Path, out: Option<&Path>, format: &str, threads: Option<usize>) -> Result<(), Failure> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let spec: SweepSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
    let format = parse_format(format)?;
    let memory = parse_memory(&spec.memory)?;
    let params = redmule_sim::SimParams::default();
    let rows = sweep(&spec.configs(), &spec.workload, &memory, &params, spec.freq_mhz, sweep_threads(threads)?)?;
    let text = match format {
        ReportFormat::Csv => sweep_csv(&rows, &spec.workload, &memory),
        ReportFormat::Json => serde_json::to_string_pretty(&rows).expect("rows serialize") + "\n",
    };
    write_output(out, &text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, args } => cmd_run(config, args),
        Command::Verify { quick } => verify::run(quick).map_err(Failure::Mismatch),
        Command::Sweep { spec, out, format, threads } => cmd_sweep(&spec, out.as_deref(), &format, threads),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(e) | Failure::Infeasible(e) | Failure::Io(e) => eprintln!("error: {e:#}"),
                Failure::Mismatch(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
