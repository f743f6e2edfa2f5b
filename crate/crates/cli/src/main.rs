use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use forestry_mpc_cli::{bundled, exit, load, report, runner};

/// Collision-free sway-damping MPC for a forestry crane: scenario
/// validation, closed-loop runs and reports.
///
/// Exit codes: 0 success, 1 I/O error, 2 usage error, 3 validation failure,
/// 4 solver failure, 5 collision.
#[derive(Debug, Parser)]
#[command(name = "crane-mpc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check scenario files (or bundled names) without running them.
    Validate {
        #[arg(required = true)]
        scenarios: Vec<String>,
    },
    /// Run scenarios in closed loop and write log.csv, timing.csv and
    /// metrics.json.
    Run {
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Output directory. With several scenarios each run goes to a
        /// subdirectory named after it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop every solve after this many iterations instead of at the
        /// wall-clock budget, which makes the outputs reproducible.
        #[arg(long)]
        iteration_cap: Option<usize>,
        /// Seed for disturbance jitter; overrides `run.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tabulate the metrics of finished runs.
    Report {
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
        /// Write the table here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Print the bundled scenario names.
    ListScenarios,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Validate { scenarios } => validate(&scenarios),
        Command::Run { scenarios, out, iteration_cap, seed } => run(&scenarios, out.as_deref(), iteration_cap, seed),
        Command::Report { run_dirs, out, format } => report(&run_dirs, out.as_deref(), format),
        Command::ListScenarios => {
            for name in bundled::names() {
                println!("{name}");
            }
            exit::OK
        }
    };
    ExitCode::from(code)
}

fn validate(scenarios: &[String]) -> u8 {
    let mut code = exit::OK;
    for s in scenarios {
        match load(s, None) {
            Ok(l) => println!("ok {} ({})", l.spec.name, s),
            Err(d) => {
                eprintln!("{d}");
                code = exit::VALIDATION;
            }
        }
    }
    code
}

fn run(scenarios: &[String], out: Option<&Path>, iteration_cap: Option<usize>, seed: Option<u64>) -> u8 {
    if iteration_cap == Some(0) {
        eprintln!("--iteration-cap must be at least 1");
        return exit::USAGE;
    }
    let mut code = exit::OK;
    for s in scenarios {
        let loaded = match load(s, seed) {
            Ok(l) => l,
            Err(d) => {
                eprintln!("{d}");
                code = code.max(exit::VALIDATION);
                continue;
            }
        };
        let mut spec = loaded.spec;
        if let Some(cap) = iteration_cap {
            spec.mpc.solver.max_iterations = cap;
            spec.mpc.solver.budget_ms = None;
        }
        let dir = match (out, scenarios.len()) {
            (Some(o), 1) => o.to_path_buf(),
            (Some(o), _) => o.join(&spec.name),
            (None, _) => loaded.file.run.output.as_ref().map_or_else(|| Path::new("runs").join(&spec.name), PathBuf::from),
        };
        match runner::execute(&spec, Some(&dir)) {
            Ok(o) => {
                let m = &o.metrics;
                println!(
                    "{}: {:?}, min sd {:.3} m, settle {}, goal error {:.3}, p95 solve {:.1} ms -> {}",
                    m.scenario,
                    o.status,
                    m.min_continuous_sd,
                    m.settle_periods.map_or("never".into(), |p| format!("{p:.2} periods")),
                    m.final_goal_error,
                    m.solve_ms_p95,
                    dir.display()
                );
                if let Some(f) = &m.failure {
                    eprintln!("{}: solver failure at {f}", m.scenario);
                }
                code = code.max(o.status.exit_code());
            }
            Err(e) => {
                eprintln!("{s}: {e}");
                code = code.max(exit::IO);
            }
        }
    }
    code
}

fn report(run_dirs: &[PathBuf], out: Option<&Path>, format: Format) -> u8 {
    let mut runs = Vec::new();
    let mut code = exit::OK;
    for d in run_dirs {
        match report::read_metrics(d) {
            Ok(m) => runs.push((d.clone(), m)),
            Err(e) => {
                eprintln!("{e}");
                code = exit::VALIDATION;
            }
        }
    }
    if code != exit::OK {
        return code;
    }
    let rows = report::build(&runs);
    let text = match format {
        Format::Csv => report::to_csv(&rows),
        Format::Json => report::to_json(&rows),
    };
    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text) {
                eprintln!("{}: {e}", path.display());
                return exit::IO;
            }
        }
        None => print!("{text}"),
    }
    exit::OK
}
