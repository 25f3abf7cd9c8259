use clap::{Parser, Subcommand};
use filippov_consensus::scenario::{self, catalog_entry, Scenario, ScenarioError, CATALOG};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Simulate nonlinear and quantized consensus protocols from scenario files.
#[derive(Parser)]
#[command(name = "fcsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a bundled scenario by name.
    Run {
        scenario: String,
        /// Seed for a uniform initial-state generator.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: scenario `output`, else `out/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override a scenario field, e.g. `integrator.t_end=50`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// List bundled scenarios.
    ListExamples,
    /// Parse and validate a scenario without running it.
    Validate {
        scenario: String,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print the text of a bundled scenario.
    Show { name: String },
}

fn load(arg: &str, seed: Option<u64>, overrides: &[String]) -> Result<Scenario, ScenarioError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(e) = catalog_entry(arg) {
            return e.scenario(seed, overrides);
        }
    }
    Scenario::load(path, seed, overrides)
}

fn fail(e: &ScenarioError) -> ExitCode {
    eprintln!("error: {e}");
    if let ScenarioError::Integration(filippov_consensus::integrator::IntegratorError::ChatterUnresolved { window, .. }) = e {
        for (t, x) in window {
            eprintln!("  t = {t:.12}  x = {x:?}");
        }
    }
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListExamples => {
            let width = CATALOG.iter().map(|e| e.name.len()).max().unwrap_or(0);
            for e in CATALOG {
                println!("{:width$}  {}", e.name, e.summary);
            }
            ExitCode::SUCCESS
        }
        Command::Show { name } => match catalog_entry(&name) {
            Some(e) => {
                print!("{}", e.text);
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("error: no bundled scenario named `{name}`");
                ExitCode::from(2)
            }
        },
        Command::Validate { scenario, overrides } => match load(&scenario, None, &overrides) {
            Ok(s) => {
                for w in s.protocol.warnings() {
                    eprintln!("warning: {w}");
                }
                println!("{}: ok ({} agents, {} channels)", s.name, s.protocol.n(), s.protocol.channels().len());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run {
            scenario,
            seed,
            out,
            overrides,
        } => {
            let s = match load(&scenario, seed, &overrides) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            for w in s.protocol.warnings() {
                eprintln!("warning: {w}");
            }
            let dir = out
                .or_else(|| s.output.clone())
                .unwrap_or_else(|| Path::new("out").join(&s.name));
            let outcome = match scenario::run(&s) {
                Ok(o) => o,
                Err(e) => return fail(&e),
            };
            if let Err(e) = scenario::write_artifacts(&outcome, &dir) {
                return fail(&e);
            }
            let r = &outcome.report;
            println!(
                "{}: {} steps, termination {}, theorem {}, {} member: {}",
                s.name,
                outcome.trajectory.times.len() - 1,
                r["termination"],
                r["theorem"],
                r["reference_set"].as_str().unwrap_or("?"),
                r["member_final"]
            );
            println!("artifacts in {}", dir.display());
            ExitCode::SUCCESS
        }
    }
}
