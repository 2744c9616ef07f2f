use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use domstab::precision::DEFAULT_K;
use domstab::report::{emit_report, epsilon_section, run_scenario, ReportFormat, RunOptions};
use domstab::scenario::{build_scenario, load_scenario_file, Analysis, ModeName};
use domstab::Error;

/// Stability analysis of classifier domains at finite precision.
#[derive(Debug, Parser)]
#[command(name = "domstab", version, about)]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the scenario mode.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Worker threads for probe fan-out.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Resolution,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    CsvSummary,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Machine-epsilon calibration; needs no scenario.
    Epsilon,
    /// Classifier axiom check.
    Axioms,
    /// Density of every set at every resolution.
    Density,
    /// Ball tester on every probe.
    Stability,
    /// Sub-series tester on every probe.
    Series,
    /// Stable-point against accumulation-point verdicts.
    CrossCheck,
    /// Brute-force verdicts on a finite support.
    Oracle,
    /// Every analysis listed in the scenario.
    Run,
}

impl Command {
    fn analysis(self) -> Option<Analysis> {
        Some(match self {
            Command::Epsilon => Analysis::Epsilon,
            Command::Axioms => Analysis::Axioms,
            Command::Density => Analysis::Density,
            Command::Stability => Analysis::Stability,
            Command::Series => Analysis::Series,
            Command::CrossCheck => Analysis::CrossCheck,
            Command::Oracle => Analysis::Oracle,
            Command::Run => return None,
        })
    }
}

const EXIT_AXIOMS: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("domstab: {e}");
            ExitCode::from(match e {
                Error::Schema(_) => EXIT_SCHEMA,
                _ => EXIT_RUNTIME,
            })
        }
    }
}

fn write_out(bytes: &[u8], out: Option<&Path>) -> domstab::Result<()> {
    use std::io::Write;
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout().lock().write_all(bytes).map_err(|e| Error::Io(e.to_string())),
    }
}

fn run(cli: &Cli) -> domstab::Result<u8> {
    let format = match cli.format {
        FormatArg::Json => ReportFormat::Json,
        FormatArg::CsvSummary => ReportFormat::CsvSummary,
    };
    let Some(path) = &cli.scenario else {
        if let Command::Epsilon = cli.command {
            let mut text =
                serde_json::to_vec_pretty(&epsilon_section(DEFAULT_K)).map_err(|e| Error::Io(e.to_string()))?;
            text.push(b'\n');
            write_out(&text, cli.out.as_deref())?;
            return Ok(0);
        }
        return Err(Error::Schema(vec!["--scenario: required for this command".into()]));
    };

    let mut file = load_scenario_file(path)?;
    if let Some(seed) = cli.seed {
        file.seed = seed;
    }
    if let Some(m) = cli.mode {
        file.mode = match m {
            ModeArg::Strict => ModeName::Strict,
            ModeArg::Resolution => ModeName::Resolution,
        };
    }
    if let Some(a) = cli.command.analysis() {
        file.analyses = vec![a];
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let scenario = build_scenario(file, base)?;
    let report = run_scenario(&scenario, &RunOptions { workers: cli.workers })?;
    emit_report(&report, format, cli.out.as_deref())?;

    if let Some(f) = &report.failure {
        eprintln!("domstab: {f}");
    }
    Ok(if report.induced_axiom_violation() {
        EXIT_AXIOMS
    } else if report.blocker_inconsistent() {
        EXIT_RUNTIME
    } else {
        0
    })
}
