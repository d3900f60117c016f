//! Exact event-driven simulation of birth-death type processes.
//!
//! Death times are held in a min-queue. Births form a Poisson stream whose
//! rate depends only on the current size, so after every event the waiting
//! time to the next birth is redrawn as `Exp(alpha(n))`; by memorylessness
//! this is exact and needs no thinning. Each newborn gets a fresh lifetime.

mod household;
mod queue;

pub use household::{simulate_household, HouseholdConfig, HouseholdInit, HouseholdRecord};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::bd_analytic::{stationary_weights, BirthRateModel};
use crate::error::{invalid, Error, Result};
use crate::lifetimes::LifetimeDistribution;
use queue::DeathQueue;

pub const DEFAULT_EVENT_BUDGET: u64 = 10_000_000_000;

/// Lifetimes given to individuals alive at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// A full fresh lifetime.
    FreshQ,
    /// The stationary excess life, as if the process had been running.
    #[default]
    EquilibriumResidual,
}

impl ResidualMode {
    fn draw<R: Rng + ?Sized>(self, dist: &LifetimeDistribution, rng: &mut R) -> f64 {
        match self {
            ResidualMode::FreshQ => dist.sample(rng),
            ResidualMode::EquilibriumResidual => dist.sample_residual(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitialCondition {
    /// One individual with a fresh lifetime.
    SingleIndividual,
    /// `floor((lambda - 1) N / lambda)` individuals; SIS with `lambda > 1` only.
    EndemicLevel { residuals: ResidualMode },
    Count { count: usize, residuals: ResidualMode },
}

impl InitialCondition {
    pub fn initial_count(&self, model: &BirthRateModel) -> Result<usize> {
        match *self {
            InitialCondition::SingleIndividual => Ok(1),
            InitialCondition::Count { count, .. } => {
                if count == 0 {
                    return Err(invalid("initial count must be positive"));
                }
                if let Some(bound) = model.state_bound() {
                    if count > bound {
                        return Err(invalid(format!(
                            "initial count {count} exceeds the state bound {bound}"
                        )));
                    }
                }
                Ok(count)
            }
            InitialCondition::EndemicLevel { .. } => match *model {
                BirthRateModel::Sis { population, lambda } if lambda > 1.0 => {
                    let level = ((lambda - 1.0) * population as f64 / lambda).floor() as usize;
                    if level == 0 {
                        Err(invalid(format!(
                            "endemic level is zero for N = {population}, lambda = {lambda}"
                        )))
                    } else {
                        Ok(level)
                    }
                }
                _ => Err(invalid(
                    "endemic-level start requires a supercritical SIS model",
                )),
            },
        }
    }

    fn residuals(&self) -> ResidualMode {
        match *self {
            InitialCondition::SingleIndividual => ResidualMode::FreshQ,
            InitialCondition::EndemicLevel { residuals } | InitialCondition::Count { residuals, .. } => {
                residuals
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    Extinction,
    /// Stop once the population reaches `K`.
    Cap(usize),
    /// Stop the first time the population reaches the level.
    HittingLevel(usize),
    TimeHorizon(f64),
}

/// A set of stop conditions; the first to trigger ends the run. Extinction
/// always ends a non-regenerative run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StopRule {
    conditions: Vec<StopCondition>,
}

impl StopRule {
    pub fn new(conditions: Vec<StopCondition>) -> Result<Self> {
        if conditions.is_empty() {
            return Err(invalid("a stop rule needs at least one condition"));
        }
        for c in &conditions {
            match *c {
                StopCondition::Cap(0) | StopCondition::HittingLevel(0) => {
                    return Err(invalid("cap and hitting levels must be positive"))
                }
                StopCondition::TimeHorizon(t) if !(t > 0.0) => {
                    return Err(invalid(format!("time horizon must be positive, got {t}")))
                }
                _ => {}
            }
        }
        Ok(Self { conditions })
    }

    pub fn extinction() -> Self {
        Self {
            conditions: vec![StopCondition::Extinction],
        }
    }

    pub fn extinction_or_cap(cap: usize) -> Self {
        Self {
            conditions: vec![StopCondition::Extinction, StopCondition::Cap(cap)],
        }
    }

    pub fn hitting_level(level: usize) -> Self {
        Self {
            conditions: vec![StopCondition::Extinction, StopCondition::HittingLevel(level)],
        }
    }

    pub fn time_horizon(t: f64) -> Self {
        Self {
            conditions: vec![StopCondition::Extinction, StopCondition::TimeHorizon(t)],
        }
    }

    pub fn with(mut self, condition: StopCondition) -> Self {
        self.conditions.push(condition);
        self
    }

    pub fn conditions(&self) -> &[StopCondition] {
        &self.conditions
    }

    pub(crate) fn cap(&self) -> Option<usize> {
        self.conditions
            .iter()
            .filter_map(|c| match c {
                StopCondition::Cap(k) => Some(*k),
                _ => None,
            })
            .min()
    }

    pub(crate) fn levels(&self) -> Vec<usize> {
        let mut levels: Vec<usize> = self
            .conditions
            .iter()
            .filter_map(|c| match c {
                StopCondition::HittingLevel(i) => Some(*i),
                _ => None,
            })
            .collect();
        levels.sort_unstable();
        levels.dedup();
        levels
    }

    pub(crate) fn horizon(&self) -> Option<f64> {
        self.conditions
            .iter()
            .filter_map(|c| match c {
                StopCondition::TimeHorizon(t) => Some(*t),
                _ => None,
            })
            .min_by(f64::total_cmp)
    }

    pub(crate) fn check_start(&self, initial: usize) -> Result<()> {
        match self.cap() {
            Some(k) if k <= initial => Err(invalid(format!(
                "cap {k} must exceed the initial count {initial}"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Extinct,
    CapHit,
    LevelHit,
    HorizonEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationOptions {
    /// Maximum number of births plus deaths in one replicate.
    pub max_events: u64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            max_events: DEFAULT_EVENT_BUDGET,
        }
    }
}

/// One replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    /// Time alive until the run stopped (the extinction time `T` when extinct).
    pub duration: f64,
    /// Individuals ever alive, including the initial ones.
    pub progeny: u64,
    /// Person-time consumed, the integral of the population size.
    pub severity: f64,
    /// Sum of every lifetime handed out, including the unconsumed parts of
    /// those still alive at the stop.
    pub lifetime_total: f64,
    /// `occupation[n]` is the time spent with exactly `n` alive.
    pub occupation: Vec<f64>,
    pub outcome: Outcome,
    pub hitting_times: Vec<(usize, f64)>,
    pub final_state: usize,
    pub max_state: usize,
    pub events: u64,
}

impl SimulationRecord {
    pub fn occupation(&self, n: usize) -> f64 {
        self.occupation.get(n).copied().unwrap_or(0.0)
    }

    pub fn hitting_time(&self, level: usize) -> Option<f64> {
        self.hitting_times.iter().find(|(l, _)| *l == level).map(|(_, t)| *t)
    }

    /// Per-replicate accounting identities; returns a description of the
    /// first violation.
    pub fn check_invariants(&self, state_bound: Option<usize>) -> std::result::Result<(), String> {
        let total: f64 = self.occupation.iter().sum();
        if (total - self.duration).abs() > 1e-9 * self.duration.max(1e-300) {
            return Err(format!("sum of occupations {total} != duration {}", self.duration));
        }
        if self.outcome == Outcome::Extinct {
            let s = self.severity;
            if (s - self.lifetime_total).abs() > 1e-9 * s.max(1e-300) {
                return Err(format!("severity {s} != lifetime total {}", self.lifetime_total));
            }
            if self.final_state != 0 {
                return Err("extinct run ended with individuals alive".into());
            }
        }
        if let Some(b) = state_bound {
            if self.max_state > b {
                return Err(format!("state {} exceeds bound {b}", self.max_state));
            }
        }
        if self.occupation.first().is_some_and(|&a| a != 0.0) {
            return Err("time recorded in state 0".into());
        }
        Ok(())
    }
}

/// Simulate one replicate of the original (absorbing) process.
pub fn simulate<R: Rng + ?Sized>(
    model: &BirthRateModel,
    dist: &LifetimeDistribution,
    init: &InitialCondition,
    stop: &StopRule,
    options: &SimulationOptions,
    rng: &mut R,
) -> Result<SimulationRecord> {
    model.validate()?;
    let initial = init.initial_count(model)?;
    stop.check_start(initial)?;
    let cap = stop.cap().unwrap_or(usize::MAX);
    let levels = stop.levels();
    let horizon = stop.horizon().unwrap_or(f64::INFINITY);
    let residuals = init.residuals();

    let mut deaths = DeathQueue::with_capacity(initial.max(16));
    let mut lifetime_total = 0.0;
    for _ in 0..initial {
        let life = residuals.draw(dist, rng);
        lifetime_total += life;
        deaths.push(life, ());
    }

    let mut n = initial;
    let mut t = 0.0;
    let mut progeny = initial as u64;
    let mut severity = 0.0;
    let mut occupation = vec![0.0; initial + 1];
    let mut events = 0u64;
    let mut max_state = initial;
    let mut hitting_times = Vec::new();
    let mut next_level = 0;
    while next_level < levels.len() && levels[next_level] <= n {
        hitting_times.push((levels[next_level], 0.0));
        next_level += 1;
    }

    let outcome = if !hitting_times.is_empty() {
        Outcome::LevelHit
    } else {
        loop {
            if n == 0 {
                break Outcome::Extinct;
            }
            let rate = model.rate(n);
            let t_birth = if rate > 0.0 {
                t + rng.sample::<f64, _>(Exp1) / rate
            } else {
                f64::INFINITY
            };
            let t_death = deaths.next_time();
            let is_birth = t_birth < t_death;
            let t_next = if is_birth { t_birth } else { t_death };

            if t_next >= horizon {
                let dt = horizon - t;
                occupation[n] += dt;
                severity += n as f64 * dt;
                t = horizon;
                break Outcome::HorizonEnd;
            }
            let dt = t_next - t;
            occupation[n] += dt;
            severity += n as f64 * dt;
            t = t_next;

            events += 1;
            if events > options.max_events {
                return Err(Error::BudgetExceeded {
                    budget: options.max_events,
                });
            }

            if is_birth {
                n += 1;
                progeny += 1;
                let life = dist.sample(rng);
                lifetime_total += life;
                deaths.push(t + life, ());
                if n > max_state {
                    max_state = n;
                    occupation.push(0.0);
                }
                if next_level < levels.len() && n >= levels[next_level] {
                    hitting_times.push((levels[next_level], t));
                    break Outcome::LevelHit;
                }
                if n >= cap {
                    break Outcome::CapHit;
                }
            } else {
                deaths.pop();
                n -= 1;
            }
        }
    };

    Ok(SimulationRecord {
        duration: t,
        progeny,
        severity,
        lifetime_total,
        occupation,
        outcome,
        hitting_times,
        final_state: n,
        max_state,
        events,
    })
}

/// Time-average occupancy of the regenerative process over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegenerativeOccupancy {
    /// Fraction of time in state `n`, from `n = 0`.
    pub fractions: Vec<f64>,
    /// Completed excursions away from 0.
    pub cycles: u64,
    pub events: u64,
}

/// Simulate the process with regeneration: after extinction it waits an
/// `Exp(1)` time in state 0 and restarts from one individual.
pub fn simulate_regenerative<R: Rng + ?Sized>(
    model: &BirthRateModel,
    dist: &LifetimeDistribution,
    horizon: f64,
    options: &SimulationOptions,
    rng: &mut R,
) -> Result<RegenerativeOccupancy> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid(format!("horizon must be positive and finite, got {horizon}")));
    }
    // Positive recurrence is required for the time averages to mean anything.
    stationary_weights(model, 1_000_000)?;

    let mut deaths = DeathQueue::with_capacity(16);
    let mut time_in = vec![0.0; 2];
    let mut n = 0usize;
    let mut t = 0.0;
    let mut events = 0u64;
    let mut cycles = 0u64;
    loop {
        let rate = if n == 0 { 1.0 } else { model.rate(n) };
        let t_birth = if rate > 0.0 {
            t + rng.sample::<f64, _>(Exp1) / rate
        } else {
            f64::INFINITY
        };
        let t_death = deaths.next_time();
        let is_birth = t_birth < t_death;
        let t_next = if is_birth { t_birth } else { t_death };
        if t_next >= horizon {
            time_in[n] += horizon - t;
            break;
        }
        time_in[n] += t_next - t;
        t = t_next;
        events += 1;
        if events > options.max_events {
            return Err(Error::BudgetExceeded {
                budget: options.max_events,
            });
        }
        if is_birth {
            n += 1;
            deaths.push(t + dist.sample(rng), ());
            if n + 1 > time_in.len() {
                time_in.push(0.0);
            }
        } else {
            deaths.pop();
            n -= 1;
            if n == 0 {
                cycles += 1;
            }
        }
    }
    let fractions = time_in.iter().map(|x| x / horizon).collect();
    Ok(RegenerativeOccupancy {
        fractions,
        cycles,
        events,
    })
}
