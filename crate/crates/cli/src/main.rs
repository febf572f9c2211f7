//! `fxcheck`: verify a fixed-point filter implementation against its design.
//!
//! Exit codes: 0 all passes succeed, 1 at least one violation, 2 usage or
//! configuration error, 3 indeterminate (marginal stability, non-convergent
//! root oracle, unavailable response).

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fxcheck_cli::job::{FixedPointSection, JobFile, Section, VerifySection, JOB_SCHEMA_VERSION};
use fxcheck_cli::render::render_text;
use fxcheck_cli::run::{RunOutput, EXIT_USAGE};
use fxcheck_cli::{parse_job, run, Overrides, Pass};
use fxcheck_core::fixedpoint::{FixedFormat, OverflowMode, RoundingMode};
use fxcheck_core::fixtures;
use fxcheck_core::overflow::{CheckSites, SearchStrategy};
use fxcheck_core::response::write_response_csv;

/// Environment variable holding the default search seed.
const SEED_ENV: &str = "FXCHECK_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "fxcheck",
    version,
    about = "Verify fixed-point digital filters against their design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the verification passes of a job file.
    Verify(VerifyArgs),
    /// Print a job file for a bundled fixture filter.
    Fixture(FixtureArgs),
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Job file (JSON).
    #[arg(long)]
    job: PathBuf,
    /// Comma-separated subset of stability,magnitude,phase,overflow.
    #[arg(long, value_delimiter = ',')]
    passes: Option<Vec<Pass>>,
    /// Fixed-point format "m,n": m integer bits, n fractional bits.
    #[arg(long)]
    format: Option<FixedFormat>,
    /// Number of frequency grid points.
    #[arg(long)]
    grid: Option<usize>,
    /// Overflow search horizon in samples.
    #[arg(long)]
    bound: Option<usize>,
    /// exhaustive, analytic or directed.
    #[arg(long)]
    strategy: Option<SearchStrategy>,
    /// nearest, truncate or floor.
    #[arg(long)]
    rounding: Option<RoundingMode>,
    /// detect, saturate or wraparound.
    #[arg(long = "overflow-mode")]
    overflow_mode: Option<OverflowMode>,
    /// products-and-output or products-only.
    #[arg(long)]
    sites: Option<CheckSites>,
    /// Seed for the directed search (default from FXCHECK_SEED, then 1729).
    #[arg(long)]
    seed: Option<u64>,
    /// Write the ideal and quantized responses as CSV.
    #[arg(long = "emit-csv")]
    emit_csv: Option<PathBuf>,
    /// Write the JSON report to this path.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    json: bool,
    /// Leave wall times out of the JSON report.
    #[arg(long = "no-timing")]
    no_timing: bool,
}

#[derive(Args, Debug)]
struct FixtureArgs {
    /// Fixture name; omit with --list.
    #[arg(required_unless_present = "list")]
    name: Option<String>,
    /// Format written into the job.
    #[arg(long, default_value = "4,10")]
    format: FixedFormat,
    /// List the bundled fixtures.
    #[arg(long)]
    list: bool,
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE as u8)
}

fn env_seed() -> Result<Option<u64>, String> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(format!("{SEED_ENV}: {e}")),
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()
}

fn verify(args: VerifyArgs) -> ExitCode {
    let env_seed = match env_seed() {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    let overrides = Overrides {
        passes: args.passes,
        format: args.format,
        rounding: args.rounding,
        overflow: args.overflow_mode,
        grid: args.grid,
        bound: args.bound,
        strategy: args.strategy,
        seed: args.seed,
        sites: args.sites,
        env_seed,
    };
    let job = match parse_job(&args.job, &overrides) {
        Ok(j) => j,
        Err(e) => return usage_error(e),
    };
    if args.emit_csv.is_some() && !job.runs(Pass::Magnitude) {
        return usage_error("--emit-csv needs the magnitude pass");
    }
    let RunOutput { mut report, responses } = match run(&job) {
        Ok(out) => out,
        Err(e) => return usage_error(e),
    };
    if args.no_timing {
        report.timing = None;
    }
    if let Some(path) = &args.emit_csv {
        match &responses {
            Some((ideal, fixed)) => {
                if let Err(e) = write_file(path, |w| write_response_csv(w, ideal, fixed, job.filter.fs_hz())) {
                    return usage_error(format!("{}: {e}", path.display()));
                }
            }
            None => eprintln!("warning: no CSV written, the magnitude pass did not run"),
        }
    }
    let json = report.to_json();
    if let Some(path) = &args.report {
        if let Err(e) = write_file(path, |w| w.write_all(json.as_bytes())) {
            return usage_error(format!("{}: {e}", path.display()));
        }
    }
    if args.json {
        print!("{json}");
    } else {
        print!("{}", render_text(&report));
    }
    ExitCode::from(report.summary.exit_code as u8)
}

fn fixture(args: FixtureArgs) -> ExitCode {
    if args.list {
        for f in fixtures::all() {
            println!("{:<12} {}", f.name, f.description);
        }
        return ExitCode::SUCCESS;
    }
    let name = args.name.expect("required unless --list");
    let Some(f) = fixtures::by_name(&name) else {
        return usage_error(format!(
            "unknown fixture {name:?} (available: {})",
            fixtures::NAMES.join(", ")
        ));
    };
    let job = JobFile {
        schema_version: JOB_SCHEMA_VERSION,
        filter: Section::Inline(f.filter),
        spec: Section::Inline(f.spec),
        fixedpoint: FixedPointSection {
            format: Some(args.format),
            ..FixedPointSection::default()
        },
        verify: VerifySection::default(),
    };
    println!("{}", serde_json::to_string_pretty(&job).expect("jobs serialize"));
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match cli.command {
        Command::Verify(args) => verify(args),
        Command::Fixture(args) => fixture(args),
    }
}
