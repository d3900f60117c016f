use clap::{ArgAction, Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::path::{Path, PathBuf};

use crate::CliError;

/// Exact, asymptotic and simulated quantities of birth-death type processes.
#[derive(Debug, Parser)]
#[command(name = "bdkit", version)]
pub struct Cli {
    /// JSON file with default values for any option; command-line flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(flatten)]
    pub common: Common,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct Common {
    /// Write results as CSV to this file.
    #[arg(long, global = true, value_name = "FILE")]
    pub output: Option<PathBuf>,

    /// Write a JSON report to this file.
    #[arg(long, global = true, value_name = "FILE")]
    pub report: Option<PathBuf>,

    /// Leave out the timestamp line so outputs are byte-identical across runs.
    #[arg(long, global = true, action = ArgAction::SetTrue)]
    #[serde(default)]
    pub no_timestamp: bool,

    /// Master seed; defaults to $BDKIT_SEED, then a fixed value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for replicates; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Confidence level for reported intervals.
    #[arg(long, global = true)]
    pub ci_level: Option<f64>,

    /// z-score bound for pass/fail verdicts.
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary weights, E[A_n], E[T] and E[C] for a birth-rate model.
    Analytic(AnalyticArgs),
    /// Exact and asymptotic quantities of the homogeneous SIS epidemic.
    Sis(SisArgs),
    /// Extinction probabilities p_Q over distributions and a lambda grid.
    Extinction(ExtinctionArgs),
    /// Threshold parameter, severity and endemic level of the household model.
    Household(HouseholdArgs),
    /// Monte Carlo estimates from the event-driven simulator.
    Simulate(SimulateArgs),
    /// Run the acceptance suite.
    Verify(VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Analytic(_) => "analytic",
            Command::Sis(_) => "sis",
            Command::Extinction(_) => "extinction",
            Command::Household(_) => "household",
            Command::Simulate(_) => "simulate",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    /// branching, sis, household-field or custom; simulate also accepts household.
    #[arg(long)]
    pub model: Option<String>,
    /// Infection or offspring rate lambda.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Population size N.
    #[arg(long = "n")]
    pub n: Option<usize>,
    /// Household size.
    #[arg(long)]
    pub h: Option<usize>,
    /// Number of households.
    #[arg(long)]
    pub m: Option<usize>,
    /// Within-household rate lambda_L.
    #[arg(long)]
    pub lambda_l: Option<f64>,
    /// Global rate lambda_G.
    #[arg(long)]
    pub lambda_g: Option<f64>,
    /// Outside prevalence s for household-field.
    #[arg(long)]
    pub prevalence: Option<f64>,
    /// Birth rates alpha(1), alpha(2), ... for custom.
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct AnalyticArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Truncation point for unbounded models.
    #[arg(long)]
    pub n_max: Option<usize>,
    /// Number of E[A_n] rows to print.
    #[arg(long)]
    pub rows: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SisArgs {
    /// Population size N.
    #[arg(long = "n")]
    pub n: Option<usize>,
    /// Infection or offspring rate lambda.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Also print the quasi-stationary distribution.
    #[arg(long, action = ArgAction::SetTrue)]
    #[serde(default)]
    pub distribution: bool,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ExtinctionArgs {
    /// Lifetime law, repeatable: exp, det, gamma:k=2, unif:w=1, twopoint:a=0.5,p=0.5.
    #[arg(long = "dist")]
    pub dists: Option<Vec<String>>,
    /// Comma-separated lambda values.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    /// Population size for endemic extinction-time means.
    #[arg(long = "n")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct HouseholdArgs {
    /// Household size.
    #[arg(long)]
    pub h: Option<usize>,
    /// Global rate lambda_G.
    #[arg(long)]
    pub lambda_g: Option<f64>,
    /// Within-household rate lambda_L.
    #[arg(long)]
    pub lambda_l: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Lifetime law, repeatable; each gets its own estimate.
    #[arg(long = "dist")]
    pub dists: Option<Vec<String>>,
    /// single, endemic, count or prevalence.
    #[arg(long)]
    pub init: Option<String>,
    /// Starting number alive for --init count.
    #[arg(long)]
    pub count: Option<usize>,
    /// Starting infected fraction for --init prevalence.
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Lifetimes of those alive at time zero: equilibrium or fresh.
    #[arg(long)]
    pub residuals: Option<String>,
    /// Stop when the population reaches this size.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Record and stop at the first hit of this level.
    #[arg(long)]
    pub level: Option<usize>,
    /// Stop at this time.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Household model: time averages start after this time.
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Comma-separated: T, C, S, A(n), extinct, hit(level).
    #[arg(long, value_delimiter = ',')]
    pub quantities: Option<Vec<String>>,
    /// Number of replicates.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Event budget per replicate.
    #[arg(long)]
    pub max_events: Option<u64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Comma-separated criterion numbers; all by default.
    #[arg(long, value_delimiter = ',')]
    pub criteria: Option<Vec<u8>>,
    /// Scale every replicate count down for a fast smoke run.
    #[arg(long)]
    pub reps_scale: Option<f64>,
}

/// Options after merging the config file under the command line.
#[derive(Debug, Clone)]
pub struct Resolved<T> {
    pub common: Common,
    pub args: T,
    /// Echoed into every output.
    pub echo: Value,
}

pub fn load_config(path: Option<&Path>) -> Result<Map<String, Value>, CliError> {
    let Some(path) = path else {
        return Ok(Map::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(CliError::Config(format!("{} must hold a JSON object", path.display()))),
        Err(e) => Err(CliError::Config(format!("{}: {e}", path.display()))),
    }
}

/// Overlay `flags` on `file`: set flags (non-null, non-false) win.
fn overlay(file: &mut Map<String, Value>, flags: Value) {
    if let Value::Object(flags) = flags {
        for (k, v) in flags {
            if !(v.is_null() || v == Value::Bool(false)) {
                file.insert(k, v);
            }
        }
    }
}

fn keys_of<T: Serialize + Default>() -> Vec<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

pub fn resolve<T>(command: &str, mut file: Map<String, Value>, common: &Common, args: &T) -> Result<Resolved<T>, CliError>
where
    T: Serialize + DeserializeOwned + Default,
{
    if let Some(c) = file.remove("command") {
        if c.as_str() != Some(command) {
            return Err(CliError::Config(format!(
                "config file is for command {c}, but {command:?} was requested"
            )));
        }
    }
    let common_keys = keys_of::<Common>();
    let arg_keys = keys_of::<T>();
    let mut common_map = Map::new();
    let mut arg_map = Map::new();
    for (k, v) in file {
        if common_keys.contains(&k) {
            common_map.insert(k, v);
        } else if arg_keys.contains(&k) {
            arg_map.insert(k, v);
        } else {
            return Err(CliError::Config(format!("unknown config key {k:?} for command {command:?}")));
        }
    }
    overlay(&mut common_map, to_value(common)?);
    overlay(&mut arg_map, to_value(args)?);
    let common: Common = serde_json::from_value(Value::Object(common_map.clone()))
        .map_err(|e| CliError::Config(format!("config: {e}")))?;
    let args: T = serde_json::from_value(Value::Object(arg_map.clone()))
        .map_err(|e| CliError::Config(format!("config: {e}")))?;

    let mut echo = Map::new();
    echo.insert("command".into(), Value::String(command.into()));
    for (k, v) in common_map.into_iter().chain(arg_map) {
        // paths are not part of the experiment
        if k != "output" && k != "report" && k != "no_timestamp" {
            echo.insert(k, v);
        }
    }
    Ok(Resolved {
        common,
        args,
        echo: Value::Object(echo),
    })
}

fn to_value<T: Serialize>(x: &T) -> Result<Value, CliError> {
    serde_json::to_value(x).map_err(|e| CliError::Config(e.to_string()))
}
