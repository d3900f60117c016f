use bdkit::bd_analytic::stationary_weights;
use bdkit::engine::{HouseholdConfig, HouseholdInit, InitialCondition, ResidualMode, SimulationOptions, StopCondition, StopRule};
use bdkit::harness::{
    estimate_many, run_replicates, HouseholdScenario, MCEstimate, Observation, Quantity, ResultRow, RunSettings, Scenario,
    Source,
};
use bdkit::sis_analytic::{
    endemic_extinction_mean, extinction_probability, household_endemic, household_rstar, household_severity_mean,
    sis_duration_asymptotic, sis_mean_duration_exact, sis_mean_progeny_exact, sis_progeny_asymptotic,
    sis_quasi_stationary, supercritical_rate,
};
use bdkit::verification::{Verifier, VerifyConfig, CRITERIA};
use bdkit::{BirthRateModel, LifetimeDistribution};

use std::io::Write;

use crate::args::{AnalyticArgs, ExtinctionArgs, HouseholdArgs, ModelArgs, SimulateArgs, SisArgs, VerifyArgs};
use crate::output::Outcome;
use crate::{CliError, Settings};

const DEFAULT_N_MAX: usize = 1_000_000;
const DEFAULT_ROWS: usize = 10;
const DEFAULT_REPS: usize = 10_000;

fn required<T: Copy>(value: Option<T>, flag: &str, context: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("{context} needs --{flag}")))
}

fn parse_dists(dists: &Option<Vec<String>>, default: &[&str]) -> Result<Vec<LifetimeDistribution>, CliError> {
    let list: Vec<String> = match dists {
        Some(d) if !d.is_empty() => d.clone(),
        _ => default.iter().map(|s| s.to_string()).collect(),
    };
    list.iter().map(|s| s.parse().map_err(CliError::Core)).collect()
}

fn build_model(m: &ModelArgs) -> Result<BirthRateModel, CliError> {
    let kind = m.model.as_deref().ok_or_else(|| CliError::Config("--model is required".into()))?;
    let model = match kind {
        "branching" => BirthRateModel::branching(required(m.lambda, "lambda", "branching")?)?,
        "sis" => BirthRateModel::sis(required(m.n, "n", "sis")?, required(m.lambda, "lambda", "sis")?)?,
        "household-field" => BirthRateModel::household_field(
            required(m.h, "h", kind)?,
            required(m.lambda_l, "lambda-l", kind)?,
            required(m.lambda_g, "lambda-g", kind)?,
            required(m.prevalence, "prevalence", kind)?,
        )?,
        "custom" => BirthRateModel::custom(
            m.rates
                .clone()
                .ok_or_else(|| CliError::Config("custom needs --rates".into()))?,
        )?,
        other => {
            return Err(CliError::Config(format!(
                "unknown model {other:?}; expected branching, sis, household-field or custom"
            )))
        }
    };
    Ok(model)
}

pub fn analytic(args: &AnalyticArgs) -> Result<Outcome, CliError> {
    let model = build_model(&args.model)?;
    let label = model.label();
    let summary = stationary_weights(&model, args.n_max.unwrap_or(DEFAULT_N_MAX))?;
    let mut rows = Vec::new();
    rows.push(ResultRow::exact("pi", &label, summary.pi0).at(0));
    for n in 1..=args.rows.unwrap_or(DEFAULT_ROWS).min(summary.weights.len()) {
        rows.push(ResultRow::log_weight("A", &label, summary.mean_occupation(n), Source::Exact).at(n as u64));
    }
    rows.push(ResultRow::log_weight("T", &label, summary.mean_duration, Source::Exact));
    rows.push(ResultRow::log_weight("C", &label, summary.mean_progeny, Source::Exact));
    rows.push(ResultRow::log_weight("S", &label, summary.mean_severity(), Source::Exact));
    Ok(Outcome {
        rows,
        ..Outcome::default()
    })
}

pub fn sis(args: &SisArgs) -> Result<Outcome, CliError> {
    let n = required(args.n, "n", "sis")?;
    let lambda = required(args.lambda, "lambda", "sis")?;
    let label = BirthRateModel::sis(n, lambda)?.label();
    let mut rows = vec![ResultRow::log_weight("T", &label, sis_mean_duration_exact(n, lambda)?, Source::Exact)];
    if n >= 2 {
        rows.push(ResultRow::log_weight("T", &label, sis_duration_asymptotic(n as f64, lambda)?, Source::Asymptotic));
    }
    rows.push(ResultRow::log_weight("C", &label, sis_mean_progeny_exact(n, lambda)?, Source::Exact));
    if lambda > 1.0 {
        rows.push(ResultRow::log_weight("C", &label, sis_progeny_asymptotic(n as f64, lambda)?, Source::Asymptotic));
        rows.push(ResultRow::exact("c", &label, supercritical_rate(lambda)));
    }
    let q = sis_quasi_stationary(n, lambda)?;
    rows.push(ResultRow::exact("mode", &label, q.mode() as f64));
    rows.push(ResultRow::exact("quasi_mean", &label, q.quasi_mean()));
    if args.distribution {
        for (k, p) in q.pi.iter().enumerate() {
            rows.push(ResultRow::exact("pi", &label, *p).at(k as u64));
        }
        for (k, p) in q.pi_tilde.iter().enumerate() {
            rows.push(ResultRow::exact("pi_tilde", &label, *p).at(k as u64 + 1));
        }
    }
    Ok(Outcome {
        rows,
        ..Outcome::default()
    })
}

pub fn extinction(args: &ExtinctionArgs) -> Result<Outcome, CliError> {
    let dists = parse_dists(&args.dists, &["exp", "det", "gamma:k=2", "gamma:k=0.5", "unif:w=1"])?;
    let lambdas = args.lambdas.clone().unwrap_or_else(|| vec![1.5, 2.0, 3.0]);
    let mut rows = Vec::new();
    for &lambda in &lambdas {
        let model = BirthRateModel::branching(lambda)?.label();
        for dist in &dists {
            let sol = extinction_probability(dist, lambda)?;
            rows.push(ResultRow::exact("p_Q", &model, sol.p_q).for_dist(dist.label()));
        }
    }
    if let Some(n) = args.n {
        for &lambda in lambdas.iter().filter(|&&l| l > 1.0) {
            let model = BirthRateModel::sis(n, lambda)?.label();
            for dist in &dists {
                let m = endemic_extinction_mean(n, lambda, dist)?;
                rows.push(ResultRow::log_weight("T_endemic", &model, m.mean, Source::Asymptotic).for_dist(dist.label()));
            }
        }
    }
    Ok(Outcome {
        rows,
        ..Outcome::default()
    })
}

pub fn household(args: &HouseholdArgs) -> Result<Outcome, CliError> {
    let h = required(args.h, "h", "household")?;
    let lambda_g = required(args.lambda_g, "lambda-g", "household")?;
    let lambda_l = required(args.lambda_l, "lambda-l", "household")?;
    let label = format!("household(h={h},lambda_g={lambda_g},lambda_l={lambda_l})");
    let mut rows = vec![
        ResultRow::exact("R*", &label, household_rstar(h, lambda_g, lambda_l)?),
        ResultRow::exact("S", &label, household_severity_mean(h, lambda_l)?),
    ];
    let eq = household_endemic(h, lambda_g, lambda_l)?;
    rows.push(ResultRow::exact("prevalence", &label, eq.proportion));
    rows.push(ResultRow::exact("mean_infectives", &label, eq.mean_infectives));
    for (j, p) in eq.phi.iter().enumerate() {
        rows.push(ResultRow::exact("phi", &label, *p).at(j as u64));
    }
    Ok(Outcome {
        rows,
        ..Outcome::default()
    })
}

fn residual_mode(s: Option<&str>) -> Result<ResidualMode, CliError> {
    match s.unwrap_or("equilibrium") {
        "equilibrium" => Ok(ResidualMode::EquilibriumResidual),
        "fresh" => Ok(ResidualMode::FreshQ),
        other => Err(CliError::Config(format!("unknown residual mode {other:?}; expected equilibrium or fresh"))),
    }
}

fn stop_rule(args: &SimulateArgs) -> Result<StopRule, CliError> {
    let mut conditions = vec![StopCondition::Extinction];
    conditions.extend(args.cap.map(StopCondition::Cap));
    conditions.extend(args.level.map(StopCondition::HittingLevel));
    conditions.extend(args.horizon.map(StopCondition::TimeHorizon));
    Ok(StopRule::new(conditions)?)
}

fn row_for(q: Quantity, model: &str, dist: &str, est: &bdkit::harness::MCEstimate) -> ResultRow {
    let (name, at) = match q {
        Quantity::Occupation(n) => ("A".to_string(), Some(n as u64)),
        Quantity::HitFraction(l) => ("hit".to_string(), Some(l as u64)),
        other => (other.to_string(), None),
    };
    let row = ResultRow::monte_carlo(name, model, dist, est);
    match at {
        Some(n) => row.at(n),
        None => row,
    }
}

pub fn simulate(args: &SimulateArgs, settings: &Settings) -> Result<Outcome, CliError> {
    let dists = parse_dists(&args.dists, &["exp"])?;
    let quantities: Vec<Quantity> = match &args.quantities {
        Some(q) if !q.is_empty() => q.iter().map(|s| s.parse()).collect::<Result<_, _>>()?,
        _ => vec![Quantity::Duration, Quantity::Progeny, Quantity::Severity],
    };
    let mut run = RunSettings::new(args.reps.unwrap_or(DEFAULT_REPS), settings.seed);
    run.workers = settings.workers;
    if let Some(level) = settings.ci_level {
        run.ci_level = level;
    }
    let options = SimulationOptions {
        max_events: args.max_events.unwrap_or(bdkit::engine::DEFAULT_EVENT_BUDGET),
    };
    let stop = stop_rule(args)?;
    let residuals = residual_mode(args.residuals.as_deref())?;
    let mut rows = Vec::new();

    if args.model.model.as_deref() == Some("household") {
        let m = &args.model;
        let config = HouseholdConfig {
            households: required(m.m, "m", "household")?,
            household_size: required(m.h, "h", "household")?,
            lambda_global: required(m.lambda_g, "lambda-g", "household")?,
            lambda_local: required(m.lambda_l, "lambda-l", "household")?,
            burn_in: args.burn_in.unwrap_or(0.0),
        };
        let init = match args.init.as_deref().unwrap_or("single") {
            "single" => HouseholdInit::OneInfective,
            "prevalence" => HouseholdInit::Prevalence {
                fraction: required(args.fraction, "fraction", "--init prevalence")?,
                residuals,
            },
            other => {
                return Err(CliError::Config(format!(
                    "household simulation supports --init single or prevalence, not {other:?}"
                )))
            }
        };
        for dist in &dists {
            let scenario = HouseholdScenario {
                config,
                dist: dist.clone(),
                init,
                stop: stop.clone(),
                options,
            };
            let label = bdkit::harness::Experiment::label(&scenario);
            // the last column is the time-average prevalence after burn-in
            let (samples, failed) = run_replicates(&scenario, &run, |rec| {
                let mut v: Vec<f64> = quantities.iter().map(|&q| rec.observe(q)).collect();
                v.push(rec.mean_prevalence);
                v
            })?;
            for j in 0..=quantities.len() {
                let column: Vec<f64> = samples.iter().map(|r| r[j]).collect();
                let mut est = MCEstimate::from_samples(&column, run.ci_level)?;
                est.failed_reps = failed;
                rows.push(match quantities.get(j) {
                    Some(q) => row_for(*q, &label, &dist.label(), &est),
                    None => ResultRow::monte_carlo("prevalence", &label, dist.label(), &est),
                });
            }
        }
    } else {
        let model = build_model(&args.model)?;
        let init = match args.init.as_deref().unwrap_or("single") {
            "single" => InitialCondition::SingleIndividual,
            "endemic" => InitialCondition::EndemicLevel { residuals },
            "count" => InitialCondition::Count {
                count: required(args.count, "count", "--init count")?,
                residuals,
            },
            other => {
                return Err(CliError::Config(format!(
                    "unknown initial condition {other:?}; expected single, endemic or count"
                )))
            }
        };
        for dist in &dists {
            let scenario = Scenario {
                model: model.clone(),
                dist: dist.clone(),
                init,
                stop: stop.clone(),
                options,
            };
            let ests = estimate_many(&scenario, &quantities, &run)?;
            rows.extend(quantities.iter().zip(&ests).map(|(q, e)| row_for(*q, &model.label(), &dist.label(), e)));
        }
    }
    Ok(Outcome {
        rows,
        ..Outcome::default()
    })
}

pub fn verify(args: &VerifyArgs, settings: &Settings) -> Result<Outcome, CliError> {
    let mut config = VerifyConfig {
        master_seed: settings.seed,
        workers: settings.workers,
        ..VerifyConfig::default()
    };
    if let Some(t) = settings.threshold {
        config.threshold = t;
    }
    if let Some(scale) = args.reps_scale {
        if !(scale > 0.0 && scale <= 1.0) {
            return Err(CliError::Config(format!("--reps-scale must lie in (0, 1], got {scale}")));
        }
        config.reps_scale = scale;
    }
    let ids: Vec<u8> = args.criteria.clone().unwrap_or_else(|| CRITERIA.to_vec());
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.contains(id)) {
        return Err(CliError::Config(format!("no acceptance criterion {bad}; expected 1 to 11")));
    }
    let verifier = Verifier::new(config);
    let mut outcome = Outcome::default();
    for id in ids {
        match verifier.run(id) {
            Ok(check) => {
                let _ = write!(std::io::stdout(), "{check}");
                outcome.rows.extend(check.rows.iter().cloned());
                outcome.checks.push(check);
            }
            Err(e) => {
                let _ = writeln!(std::io::stdout(), "criterion {id:>2} FAIL  error: {e}");
                outcome.errors.push(format!("criterion {id}: {e}"));
            }
        }
    }
    Ok(outcome)
}
