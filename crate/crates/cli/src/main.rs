use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edflow_cli::{commands, core_exit_code, parse_config, suites, CliError, EXIT_CONFIG, EXIT_OK, EXIT_VALIDATION};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "edflow", version, about = "Conformal Einstein-Dirac flow laboratory on the flat spin 3-torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalues and clusters of the pencil near eigen.target.
    Spectrum { config: PathBuf },
    /// Integrate the coupled flow and write trajectory, snapshots and summary.
    Flow { config: PathBuf },
    /// Print the normalized configuration.
    Config { config: PathBuf },
    /// Finite-difference check of the eigenpair derivative formulas.
    PerturbValidate {
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Orders, energy estimate, axioms and uniqueness of the parabolic solver.
    ParabolicValidate {
        #[arg(long, default_value_t = 20)]
        instances: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Conformal covariance residuals of the conformal Laplacian.
    CovarianceCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

// a closed stdout (e.g. piped into `head`) is not an error for a batch run
fn print(v: &Value) {
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(v).expect("report serializes"));
}

fn suite(result: edflow_core::Result<Value>, report: Option<PathBuf>) -> Result<i32, CliError> {
    let v = match result {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(core_exit_code(&e));
        }
    };
    print(&v);
    if let Some(path) = report {
        std::fs::write(path, serde_json::to_string_pretty(&v).expect("report serializes") + "\n")?;
    }
    Ok(if suites::report_passed(&v) { EXIT_OK } else { EXIT_VALIDATION })
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Spectrum { config } => {
            let out = commands::spectrum(&parse_config(&config)?)?;
            print(&out.summary);
            Ok(out.code)
        }
        Command::Flow { config } => {
            let out = commands::flow(&parse_config(&config)?)?;
            print(&out.summary);
            Ok(out.code)
        }
        Command::Config { config } => {
            let _ = write!(std::io::stdout(), "{}", parse_config(&config)?.normalized());
            Ok(EXIT_OK)
        }
        Command::PerturbValidate { report } => suite(suites::perturb_validate(), report),
        Command::ParabolicValidate { instances, seed, report } => {
            suite(suites::parabolic_validate(instances, seed), report)
        }
        Command::CovarianceCheck { seed, report } => suite(suites::covariance_check(seed), report),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { EXIT_OK as u8 });
        }
    };
    let code = dispatch(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
