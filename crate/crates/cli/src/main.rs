mod args;
mod commands;
mod output;

use clap::Parser;
use serde_json::Value;
use std::io::Write;
use std::process::ExitCode;

use args::{load_config, resolve, Cli, Command, Common};
use bdkit::harness::DEFAULT_MASTER_SEED;
use output::Outcome;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Core(bdkit::Error),
}

impl From<bdkit::Error> for CliError {
    fn from(e: bdkit::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "invalid configuration: {m}"),
            CliError::Io(m) => write!(f, "{m}"),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use bdkit::Error as E;
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Core(e) if e.is_numeric() => 2,
            CliError::Core(E::TooManyFailedReplicates(_) | E::DegenerateEstimate { .. } | E::BudgetExceeded { .. }) => 2,
            CliError::Core(_) => 1,
        }
    }
}

/// Run-wide settings after merging flags, config file and environment.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub workers: Option<usize>,
    pub ci_level: Option<f64>,
    pub threshold: Option<f64>,
}

fn settings(common: &Common) -> Result<Settings, CliError> {
    let seed = match common.seed {
        Some(s) => s,
        None => match std::env::var("BDKIT_SEED") {
            Ok(s) => s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("BDKIT_SEED must be an unsigned integer, got {s:?}")))?,
            Err(_) => DEFAULT_MASTER_SEED,
        },
    };
    if common.workers == Some(0) {
        return Err(CliError::Config("--workers must be positive".into()));
    }
    if let Some(level) = common.ci_level {
        if !(level > 0.0 && level < 1.0) {
            return Err(CliError::Config(format!("--ci-level must lie in (0, 1), got {level}")));
        }
    }
    if let Some(t) = common.threshold {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Config(format!("--threshold must be positive, got {t}")));
        }
    }
    Ok(Settings {
        seed,
        workers: common.workers,
        ci_level: common.ci_level,
        threshold: common.threshold,
    })
}

fn run(cli: Cli) -> Result<(Outcome, bool), CliError> {
    let file = load_config(cli.config.as_deref())?;
    let name = cli.command.name();
    macro_rules! resolved {
        ($args:expr) => {{
            let r = resolve(name, file, &cli.common, $args)?;
            let s = settings(&r.common)?;
            let mut echo = r.echo.clone();
            if let Value::Object(m) = &mut echo {
                m.insert("seed".into(), s.seed.into());
            }
            (r, s, echo)
        }};
    }
    let (outcome, common, echo, is_verify) = match &cli.command {
        Command::Analytic(a) => {
            let (r, _, echo) = resolved!(a);
            (commands::analytic(&r.args)?, r.common, echo, false)
        }
        Command::Sis(a) => {
            let (r, _, echo) = resolved!(a);
            (commands::sis(&r.args)?, r.common, echo, false)
        }
        Command::Extinction(a) => {
            let (r, _, echo) = resolved!(a);
            (commands::extinction(&r.args)?, r.common, echo, false)
        }
        Command::Household(a) => {
            let (r, _, echo) = resolved!(a);
            (commands::household(&r.args)?, r.common, echo, false)
        }
        Command::Simulate(a) => {
            let (r, s, echo) = resolved!(a);
            (commands::simulate(&r.args, &s)?, r.common, echo, false)
        }
        Command::Verify(a) => {
            let (r, s, echo) = resolved!(a);
            (commands::verify(&r.args, &s)?, r.common, echo, true)
        }
    };
    if is_verify {
        let _ = writeln!(std::io::stdout(), "# config {echo}");
    } else {
        output::print_table(&outcome.rows, &echo, common.no_timestamp);
    }
    if let Some(path) = &common.output {
        output::write_csv(path, &outcome.rows, &echo, common.no_timestamp)?;
    }
    if let Some(path) = &common.report {
        output::write_report(path, &outcome, &echo, common.no_timestamp)?;
    }
    Ok((outcome, is_verify))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok((outcome, is_verify)) => {
            if is_verify && !outcome.all_pass() {
                let failed: Vec<String> = outcome
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| c.id.to_string())
                    .chain(outcome.errors.iter().cloned())
                    .collect();
                eprintln!("verification failed: {}", failed.join(", "));
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
