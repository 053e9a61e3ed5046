//! The `crosswalk` command: pipeline stages that hand off through files in
//! a run directory, fixture management, and the review API.

pub mod analyze;
pub mod annotations;
pub mod args;
pub mod error;
pub mod pipeline;
pub mod run;
pub mod server;

use std::ffi::OsString;

use clap::Parser;
use crosswalk_core::gateway::FixtureStore;

pub use args::Cli;
use args::{Command, FixturesCommand, ServeArgs};
pub use error::CliError;
use run::StageReport;

fn summarize(stage: &str, r: &StageReport) {
    println!(
        "{stage}: run {} in {} ({} artifact(s), {} failure(s))",
        r.run_id,
        r.run_dir.display(),
        r.artifacts.len(),
        r.failures.len()
    );
    for f in &r.failures {
        let aspect = f.aspect.map(|a| format!(" aspect {a}")).unwrap_or_default();
        eprintln!("  {} {}{aspect}: {}", f.method_key, f.subject, f.message);
    }
}

fn cmd_fixtures(cmd: &FixturesCommand) -> Result<i32, CliError> {
    match cmd {
        FixturesCommand::Import { from, fixtures } => {
            if !from.is_dir() {
                return Err(CliError::Config(format!("{} is not a directory", from.display())));
            }
            let src = FixtureStore::open(from).map_err(CliError::config)?;
            let dst = FixtureStore::open(fixtures).map_err(CliError::config)?;
            let n = dst.import_from(&src).map_err(CliError::io)?;
            println!("imported {n} fixture(s) into {}", fixtures.display());
        }
        FixturesCommand::List { fixtures } => {
            let store = FixtureStore::open(fixtures).map_err(CliError::config)?;
            for (key, e) in store.entries() {
                println!("{key}\t{}\t{}", e.model_id, e.recorded_at.to_rfc3339());
            }
        }
    }
    Ok(error::EXIT_OK)
}

fn cmd_serve(args: &ServeArgs) -> Result<i32, CliError> {
    let taxonomy = run::taxonomy_from(args.taxonomy.as_deref())?;
    if run::list_runs(&args.out).is_empty() {
        return Err(CliError::Config(format!("no runs found under {}", args.out.display())));
    }
    let rt = tokio::runtime::Runtime::new().map_err(CliError::io)?;
    rt.block_on(server::serve(server::AppState::new(&args.out, taxonomy), args.port))
        .map_err(|e| CliError::Io(format!("cannot serve on port {}: {e}", args.port)))?;
    Ok(error::EXIT_OK)
}

/// Runs a parsed command and returns its exit code.
pub fn execute(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Extract(a) => pipeline::cmd_extract(a).map(|r| {
            summarize("extract", &r);
            r.exit_code()
        }),
        Command::Crosswalk(a) => pipeline::cmd_crosswalk(a).map(|r| {
            summarize("crosswalk", &r);
            r.exit_code()
        }),
        Command::Analyze(a) => analyze::cmd_analyze(a).map(|r| {
            summarize("analyze", &r);
            r.exit_code()
        }),
        Command::Serve(a) => cmd_serve(a),
        Command::Fixtures(c) => cmd_fixtures(c),
    }
}

/// Parses `argv` (program name first), runs it and returns the exit code.
/// Errors are printed to stderr.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { error::EXIT_CONFIG } else { error::EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
