//! Monte Carlo estimation and analytic-vs-simulated verdicts.
//!
//! Replicate `i` always draws from stream `i` of the master seed and results
//! are reduced in replicate order, so every estimate is bit-identical for any
//! worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::fmt;
use std::str::FromStr;

use crate::bd_analytic::BirthRateModel;
use crate::engine::{
    simulate, simulate_household, HouseholdConfig, HouseholdInit, HouseholdRecord,
    InitialCondition, Outcome, SimulationOptions, SimulationRecord, StopRule,
};
use crate::error::{invalid, Error, Result};
use crate::lifetimes::LifetimeDistribution;
use crate::rng::RandomStream;

pub const DEFAULT_THRESHOLD: f64 = 4.0;
pub const DEFAULT_CI_LEVEL: f64 = 0.95;
pub const DEFAULT_MAX_FAILED_FRACTION: f64 = 1e-3;
pub const DEFAULT_MASTER_SEED: u64 = 20_240_601;

/// Per-replicate statistic to average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Duration `T`.
    Duration,
    /// Total number ever alive `C`.
    Progeny,
    /// Sum of lifetimes consumed `S`.
    Severity,
    /// Time with exactly `n` alive, `A_n`.
    Occupation(usize),
    ExtinctFraction,
    HitFraction(usize),
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Quantity::Duration => write!(f, "T"),
            Quantity::Progeny => write!(f, "C"),
            Quantity::Severity => write!(f, "S"),
            Quantity::Occupation(n) => write!(f, "A({n})"),
            Quantity::ExtinctFraction => write!(f, "extinct"),
            Quantity::HitFraction(l) => write!(f, "hit({l})"),
        }
    }
}

impl FromStr for Quantity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let inner = |s: &str, prefix: &str| -> Option<Result<usize>> {
            let rest = s.strip_prefix(prefix)?.strip_suffix(')')?;
            Some(rest.trim().parse().map_err(|_| invalid(format!("bad index in {s:?}"))))
        };
        match s.trim() {
            "T" => Ok(Quantity::Duration),
            "C" => Ok(Quantity::Progeny),
            "S" => Ok(Quantity::Severity),
            "extinct" => Ok(Quantity::ExtinctFraction),
            other => {
                if let Some(n) = inner(other, "A(") {
                    let n = n?;
                    if n == 0 {
                        return Err(invalid("A(n) needs n >= 1"));
                    }
                    Ok(Quantity::Occupation(n))
                } else if let Some(l) = inner(other, "hit(") {
                    Ok(Quantity::HitFraction(l?))
                } else {
                    Err(invalid(format!(
                        "unknown quantity {other:?}; expected T, C, S, A(n), extinct or hit(level)"
                    )))
                }
            }
        }
    }
}

/// Something a replicate produced that quantities can be read from.
pub trait Observation {
    fn observe(&self, quantity: Quantity) -> f64;
}

impl Observation for SimulationRecord {
    fn observe(&self, quantity: Quantity) -> f64 {
        match quantity {
            Quantity::Duration => self.duration,
            Quantity::Progeny => self.progeny as f64,
            Quantity::Severity => self.severity,
            Quantity::Occupation(n) => self.occupation(n),
            Quantity::ExtinctFraction => f64::from(u8::from(self.outcome == Outcome::Extinct)),
            Quantity::HitFraction(l) => f64::from(u8::from(self.hitting_time(l).is_some())),
        }
    }
}

impl Observation for HouseholdRecord {
    fn observe(&self, quantity: Quantity) -> f64 {
        match quantity {
            Quantity::Duration => self.duration,
            Quantity::Progeny => self.progeny as f64,
            Quantity::Severity => self.severity,
            Quantity::Occupation(n) => self.occupation(n),
            Quantity::ExtinctFraction => f64::from(u8::from(self.outcome == Outcome::Extinct)),
            Quantity::HitFraction(l) => {
                f64::from(u8::from(self.hitting_times.iter().any(|(lv, _)| *lv == l)))
            }
        }
    }
}

/// A replicable random experiment.
pub trait Experiment: Sync {
    type Record: Observation + Send;
    fn run(&self, rng: &mut RandomStream) -> Result<Self::Record>;
    fn label(&self) -> String;
}

/// A single-population process run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: BirthRateModel,
    pub dist: LifetimeDistribution,
    pub init: InitialCondition,
    pub stop: StopRule,
    #[serde(default)]
    pub options: SimulationOptions,
}

impl Scenario {
    pub fn new(
        model: BirthRateModel,
        dist: LifetimeDistribution,
        init: InitialCondition,
        stop: StopRule,
    ) -> Self {
        Self {
            model,
            dist,
            init,
            stop,
            options: SimulationOptions::default(),
        }
    }

    pub fn with_dist(&self, dist: &LifetimeDistribution) -> Self {
        Self {
            dist: dist.clone(),
            ..self.clone()
        }
    }
}

impl Experiment for Scenario {
    type Record = SimulationRecord;
    fn run(&self, rng: &mut RandomStream) -> Result<SimulationRecord> {
        simulate(&self.model, &self.dist, &self.init, &self.stop, &self.options, rng)
    }
    fn label(&self) -> String {
        self.model.label()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdScenario {
    pub config: HouseholdConfig,
    pub dist: LifetimeDistribution,
    pub init: HouseholdInit,
    pub stop: StopRule,
    #[serde(default)]
    pub options: SimulationOptions,
}

impl HouseholdScenario {
    pub fn with_dist(&self, dist: &LifetimeDistribution) -> Self {
        Self {
            dist: dist.clone(),
            ..self.clone()
        }
    }
}

impl Experiment for HouseholdScenario {
    type Record = HouseholdRecord;
    fn run(&self, rng: &mut RandomStream) -> Result<HouseholdRecord> {
        simulate_household(&self.config, &self.dist, &self.init, &self.stop, &self.options, rng)
    }
    fn label(&self) -> String {
        let c = &self.config;
        format!(
            "household(m={},h={},lambda_g={},lambda_l={})",
            c.households, c.household_size, c.lambda_global, c.lambda_local
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub n_reps: usize,
    pub master_seed: u64,
    /// `None` uses the available parallelism.
    pub workers: Option<usize>,
    pub ci_level: f64,
    /// Replicates hitting the event budget are dropped while their share
    /// stays at or below this fraction; beyond it the estimate fails.
    pub max_failed_fraction: f64,
}

impl RunSettings {
    pub fn new(n_reps: usize, master_seed: u64) -> Self {
        Self {
            n_reps,
            master_seed,
            workers: None,
            ci_level: DEFAULT_CI_LEVEL,
            max_failed_fraction: DEFAULT_MAX_FAILED_FRACTION,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = Some(workers);
        self
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_reps: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Replicates dropped for exceeding the event budget.
    pub failed_reps: usize,
}

impl MCEstimate {
    /// Sample mean, `std_error = sd / sqrt(n)` and a normal-quantile interval.
    pub fn from_samples(values: &[f64], ci_level: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(invalid("need at least two replicates"));
        }
        if !(ci_level > 0.0 && ci_level < 1.0) {
            return Err(invalid(format!("confidence level must lie in (0, 1), got {ci_level}")));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std_error = (var / n).sqrt();
        let z = normal_quantile(0.5 + 0.5 * ci_level);
        Ok(Self {
            mean,
            std_error,
            n_reps: values.len(),
            ci_low: mean - z * std_error,
            ci_high: mean + z * std_error,
            failed_reps: 0,
        })
    }
}

fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonVerdict {
    pub estimate: MCEstimate,
    pub target: f64,
    pub z_score: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// z-test of an estimate against a known target.
pub fn compare(estimate: &MCEstimate, target: f64, threshold: f64) -> Result<ComparisonVerdict> {
    let z_score = if estimate.std_error == 0.0 {
        if estimate.mean == target {
            0.0
        } else {
            return Err(Error::DegenerateEstimate {
                mean: estimate.mean,
                target,
            });
        }
    } else {
        (estimate.mean - target) / estimate.std_error
    };
    Ok(ComparisonVerdict {
        estimate: *estimate,
        target,
        z_score,
        threshold,
        pass: z_score.abs() <= threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCheck {
    pub first: String,
    pub second: String,
    pub difference: f64,
    pub combined_se: f64,
    pub z_score: f64,
    pub pass: bool,
}

/// Two-sample z-test: `|m1 - m2| <= threshold sqrt(se1^2 + se2^2)`.
pub fn compare_pair(
    first: (&str, &MCEstimate),
    second: (&str, &MCEstimate),
    threshold: f64,
) -> PairCheck {
    let difference = first.1.mean - second.1.mean;
    let combined_se = first.1.std_error.hypot(second.1.std_error);
    let z_score = if combined_se > 0.0 {
        difference / combined_se
    } else if difference == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(difference)
    };
    PairCheck {
        first: first.0.to_string(),
        second: second.0.to_string(),
        difference,
        combined_se,
        z_score,
        pass: z_score.abs() <= threshold,
    }
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(invalid("worker count must be positive"));
        }
        builder = builder.num_threads(w);
    }
    builder
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))
}

/// Run every replicate and map each record through `extract`, returning the
/// results in replicate order together with the count of replicates dropped
/// for exceeding the event budget.
pub fn run_replicates<E, T, F>(experiment: &E, settings: &RunSettings, extract: F) -> Result<(Vec<T>, usize)>
where
    E: Experiment,
    T: Send,
    F: Fn(E::Record) -> T + Sync,
{
    if settings.n_reps < 2 {
        return Err(invalid("need at least two replicates"));
    }
    let pool = thread_pool(settings.workers)?;
    let results: Vec<Result<Option<T>>> = pool.install(|| {
        (0..settings.n_reps as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = RandomStream::new(settings.master_seed, i);
                match experiment.run(&mut rng) {
                    Ok(record) => Ok(Some(extract(record))),
                    Err(Error::BudgetExceeded { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect()
    });
    let mut values = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r? {
            Some(v) => values.push(v),
            None => failed += 1,
        }
    }
    if failed as f64 > settings.max_failed_fraction * settings.n_reps as f64 {
        return Err(Error::TooManyFailedReplicates(failed));
    }
    Ok((values, failed))
}

/// Estimate several quantities from one set of replicates.
pub fn estimate_many<E: Experiment>(
    experiment: &E,
    quantities: &[Quantity],
    settings: &RunSettings,
) -> Result<Vec<MCEstimate>> {
    let (rows, failed) = run_replicates(experiment, settings, |rec| {
        quantities.iter().map(|&q| rec.observe(q)).collect::<Vec<f64>>()
    })?;
    (0..quantities.len())
        .map(|j| {
            let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let mut est = MCEstimate::from_samples(&column, settings.ci_level)?;
            est.failed_reps = failed;
            Ok(est)
        })
        .collect()
}

pub fn estimate<E: Experiment>(experiment: &E, quantity: Quantity, settings: &RunSettings) -> Result<MCEstimate> {
    Ok(estimate_many(experiment, &[quantity], settings)?.remove(0))
}

/// Seed for the `index`-th independent sub-experiment of a master seed.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionResult {
    pub dist: String,
    pub estimate: MCEstimate,
    pub verdict: Option<ComparisonVerdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsensitivityReport {
    pub quantity: Quantity,
    pub model: String,
    pub entries: Vec<DistributionResult>,
    pub pairs: Vec<PairCheck>,
    pub pass: bool,
}

impl InsensitivityReport {
    pub fn entry(&self, dist: &str) -> Option<&DistributionResult> {
        self.entries.iter().find(|e| e.dist == dist)
    }
}

/// Estimate `quantity` under each lifetime law, compare each estimate with the
/// analytic `target` when one is given, and test every pair of estimates for
/// agreement. Each law gets its own independent seed derived from the
/// master seed.
pub fn insensitivity_report<E, F>(
    quantity: Quantity,
    build: F,
    dists: &[LifetimeDistribution],
    target: Option<f64>,
    settings: &RunSettings,
    threshold: f64,
) -> Result<InsensitivityReport>
where
    E: Experiment,
    F: Fn(&LifetimeDistribution) -> E,
{
    if dists.len() < 2 {
        return Err(invalid("an insensitivity report needs at least two distributions"));
    }
    let mut entries = Vec::with_capacity(dists.len());
    let mut model = String::new();
    for (i, dist) in dists.iter().enumerate() {
        let experiment = build(dist);
        model = experiment.label();
        let run = settings.with_seed(derive_seed(settings.master_seed, i as u64));
        let est = estimate(&experiment, quantity, &run)?;
        let verdict = target.map(|t| compare(&est, t, threshold)).transpose()?;
        entries.push(DistributionResult {
            dist: dist.label(),
            estimate: est,
            verdict,
        });
    }
    let mut pairs = Vec::new();
    for i in 0..entries.len() {
        for j in i + 1..entries.len() {
            pairs.push(compare_pair(
                (&entries[i].dist, &entries[i].estimate),
                (&entries[j].dist, &entries[j].estimate),
                threshold,
            ));
        }
    }
    let pass = entries
        .iter()
        .all(|e| e.verdict.as_ref().is_none_or(|v| v.pass))
        && pairs.iter().all(|p| p.pass);
    Ok(InsensitivityReport {
        quantity,
        model,
        entries,
        pairs,
        pass,
    })
}

/// Where a reported number came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Exact,
    Asymptotic,
    MonteCarlo,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Exact => "exact",
            Source::Asymptotic => "asymptotic",
            Source::MonteCarlo => "monte-carlo",
        })
    }
}

/// One line of tabular output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub quantity: String,
    pub model: String,
    pub dist: String,
    pub n_or_level: Option<u64>,
    pub value: Option<f64>,
    pub log_value: Option<f64>,
    pub std_error: Option<f64>,
    pub n_reps: Option<usize>,
    pub source: Source,
    pub pass: Option<bool>,
}

impl ResultRow {
    pub fn exact(quantity: impl Into<String>, model: impl Into<String>, value: f64) -> Self {
        Self {
            quantity: quantity.into(),
            model: model.into(),
            dist: "any".into(),
            n_or_level: None,
            value: Some(value),
            log_value: (value > 0.0).then(|| value.ln()),
            std_error: None,
            n_reps: None,
            source: Source::Exact,
            pass: None,
        }
    }

    pub fn log_weight(
        quantity: impl Into<String>,
        model: impl Into<String>,
        w: crate::logspace::LogWeight,
        source: Source,
    ) -> Self {
        Self {
            quantity: quantity.into(),
            model: model.into(),
            dist: "any".into(),
            n_or_level: None,
            value: w.checked_value(),
            log_value: Some(w.ln()),
            std_error: None,
            n_reps: None,
            source,
            pass: None,
        }
    }

    pub fn monte_carlo(
        quantity: impl Into<String>,
        model: impl Into<String>,
        dist: impl Into<String>,
        est: &MCEstimate,
    ) -> Self {
        Self {
            quantity: quantity.into(),
            model: model.into(),
            dist: dist.into(),
            n_or_level: None,
            value: Some(est.mean),
            log_value: (est.mean > 0.0).then(|| est.mean.ln()),
            std_error: Some(est.std_error),
            n_reps: Some(est.n_reps),
            source: Source::MonteCarlo,
            pass: None,
        }
    }

    pub fn at(mut self, n_or_level: u64) -> Self {
        self.n_or_level = Some(n_or_level);
        self
    }

    pub fn for_dist(mut self, dist: impl Into<String>) -> Self {
        self.dist = dist.into();
        self
    }

    pub fn with_pass(mut self, pass: bool) -> Self {
        self.pass = Some(pass);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(mean: f64, se: f64) -> MCEstimate {
        MCEstimate {
            mean,
            std_error: se,
            n_reps: 100,
            ci_low: mean - 2.0 * se,
            ci_high: mean + 2.0 * se,
            failed_reps: 0,
        }
    }

    #[test]
    fn compare_examples() {
        let v = compare(&est(1.39, 0.01), 1.386294, 4.0).unwrap();
        assert!((v.z_score - 0.3706).abs() < 1e-3);
        assert!(v.pass);
        let v = compare(&est(1.50, 0.01), 1.386294, 4.0).unwrap();
        assert!((v.z_score - 11.37).abs() < 1e-2);
        assert!(!v.pass);
        let v = compare(&est(2.0, 0.0), 2.0, 4.0).unwrap();
        assert!(v.pass);
        assert_eq!(v.z_score, 0.0);
        assert!(matches!(compare(&est(2.0, 0.0), 2.1, 4.0), Err(Error::DegenerateEstimate { .. })));
    }

    #[test]
    fn estimate_from_samples() {
        let e = MCEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 0.95).unwrap();
        assert_eq!(e.mean, 2.5);
        let sd = (5.0f64 / 3.0).sqrt();
        assert!((e.std_error - sd / 2.0).abs() < 1e-15);
        assert!((e.ci_high - e.mean - 1.959964 * e.std_error).abs() < 1e-6);
        assert!(MCEstimate::from_samples(&[1.0], 0.95).is_err());
        assert!(MCEstimate::from_samples(&[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn pair_check_is_symmetric() {
        let a = est(1.0, 0.1);
        let b = est(1.3, 0.1);
        let ab = compare_pair(("a", &a), ("b", &b), 4.0);
        let ba = compare_pair(("b", &b), ("a", &a), 4.0);
        assert_eq!(ab.pass, ba.pass);
        assert_eq!(ab.z_score, -ba.z_score);
        assert!(ab.pass);
        assert!(!compare_pair(("a", &a), ("c", &est(2.0, 0.1)), 4.0).pass);
        assert!(compare_pair(("a", &est(1.0, 0.0)), ("b", &est(1.0, 0.0)), 4.0).pass);
    }

    #[test]
    fn quantity_text_round_trip() {
        for q in [
            Quantity::Duration,
            Quantity::Progeny,
            Quantity::Severity,
            Quantity::Occupation(3),
            Quantity::ExtinctFraction,
            Quantity::HitFraction(40),
        ] {
            assert_eq!(q.to_string().parse::<Quantity>().unwrap(), q);
        }
        assert!("A(0)".parse::<Quantity>().is_err());
        assert!("X".parse::<Quantity>().is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: Vec<u64> = (0..100).map(|i| derive_seed(42, i)).collect();
        let mut unique = seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), seeds.len());
    }
}
