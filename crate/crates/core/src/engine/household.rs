//! Household SIS epidemic with `m` households of size `h`.
//!
//! Each infective makes global contacts at rate `lambda_G` with targets
//! chosen uniformly from all `mh` individuals (itself included; contacts with
//! infectives are wasted) and local contacts at rate `lambda_L` with each
//! other member of its household. Only contacts that land on susceptibles
//! matter, so the effective infection rates are
//!
//! ```text
//! global: lambda_G I (mh - I) / mh        local: lambda_L sum_k i_k (h - i_k)
//! ```
//!
//! Households are bucketed by their current number of infectives, which
//! makes choosing the infected household O(h).

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::queue::DeathQueue;
use super::{Outcome, ResidualMode, SimulationOptions, StopRule};
use crate::error::{invalid, Error, Result};
use crate::lifetimes::LifetimeDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HouseholdConfig {
    pub households: usize,
    pub household_size: usize,
    pub lambda_global: f64,
    pub lambda_local: f64,
    /// Time-averaged summaries only accumulate after this time.
    pub burn_in: f64,
}

impl HouseholdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.households == 0 || self.household_size == 0 {
            return Err(invalid("need at least one household of size at least one"));
        }
        for (name, x) in [("lambda_global", self.lambda_global), ("lambda_local", self.lambda_local)] {
            if !(x.is_finite() && x >= 0.0) {
                return Err(invalid(format!("{name} must be finite and nonnegative, got {x}")));
            }
        }
        if !(self.burn_in >= 0.0) {
            return Err(invalid("burn-in must be nonnegative"));
        }
        Ok(())
    }

    pub fn population(&self) -> usize {
        self.households * self.household_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HouseholdInit {
    /// One infective, fresh lifetime, in household 0.
    OneInfective,
    /// Round(`fraction` * mh) infectives placed uniformly at random.
    Prevalence { fraction: f64, residuals: ResidualMode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdRecord {
    pub duration: f64,
    pub progeny: u64,
    pub severity: f64,
    pub lifetime_total: f64,
    /// Time with exactly `n` infectives in the whole population.
    pub occupation: Vec<f64>,
    pub outcome: Outcome,
    pub hitting_times: Vec<(usize, f64)>,
    pub final_state: usize,
    pub max_state: usize,
    pub events: u64,
    /// Length of the window after burn-in.
    pub observed_time: f64,
    /// Time-average infected fraction of the population over the window.
    pub mean_prevalence: f64,
    /// Time-average fraction of households with `j` infectives over the window.
    pub household_state_fractions: Vec<f64>,
}

impl HouseholdRecord {
    pub fn occupation(&self, n: usize) -> f64 {
        self.occupation.get(n).copied().unwrap_or(0.0)
    }

    pub fn check_invariants(&self, population: usize) -> std::result::Result<(), String> {
        let total: f64 = self.occupation.iter().sum();
        if (total - self.duration).abs() > 1e-9 * self.duration.max(1e-300) {
            return Err(format!("sum of occupations {total} != duration {}", self.duration));
        }
        if self.outcome == Outcome::Extinct
            && (self.severity - self.lifetime_total).abs() > 1e-9 * self.severity.max(1e-300)
        {
            return Err(format!(
                "severity {} != lifetime total {}",
                self.severity, self.lifetime_total
            ));
        }
        if self.max_state > population {
            return Err(format!("{} infectives in a population of {population}", self.max_state));
        }
        Ok(())
    }
}

/// Households bucketed by infective count.
struct Buckets {
    infected: Vec<usize>,
    members: Vec<Vec<usize>>,
    position: Vec<usize>,
}

impl Buckets {
    fn new(households: usize, h: usize) -> Self {
        let mut members = vec![Vec::new(); h + 1];
        members[0] = (0..households).collect();
        Self {
            infected: vec![0; households],
            members,
            position: (0..households).collect(),
        }
    }

    fn shift(&mut self, household: usize, up: bool) {
        let from = self.infected[household];
        let to = if up { from + 1 } else { from - 1 };
        let pos = self.position[household];
        let bucket = &mut self.members[from];
        bucket.swap_remove(pos);
        if let Some(&moved) = bucket.get(pos) {
            self.position[moved] = pos;
        }
        self.position[household] = self.members[to].len();
        self.members[to].push(household);
        self.infected[household] = to;
    }

    /// Pick a household with probability proportional to `weight(j)` where
    /// `j` is its infective count.
    fn choose<R: Rng + ?Sized>(&self, rng: &mut R, weight: impl Fn(usize) -> f64) -> usize {
        let total: f64 = (0..self.members.len())
            .map(|j| self.members[j].len() as f64 * weight(j))
            .sum();
        let mut u = rng.random::<f64>() * total;
        let mut last = None;
        for (j, bucket) in self.members.iter().enumerate() {
            let w = bucket.len() as f64 * weight(j);
            if w <= 0.0 {
                continue;
            }
            last = Some(j);
            if u < w {
                return bucket[rng.random_range(0..bucket.len())];
            }
            u -= w;
        }
        // Rounding left u at the very top of the range.
        let j = last.expect("no household has positive weight");
        let bucket = &self.members[j];
        bucket[rng.random_range(0..bucket.len())]
    }
}

pub fn simulate_household<R: Rng + ?Sized>(
    config: &HouseholdConfig,
    dist: &LifetimeDistribution,
    init: &HouseholdInit,
    stop: &StopRule,
    options: &SimulationOptions,
    rng: &mut R,
) -> Result<HouseholdRecord> {
    config.validate()?;
    let h = config.household_size;
    let m = config.households;
    let pop = config.population();
    let pop_f = pop as f64;

    let mut buckets = Buckets::new(m, h);
    let mut deaths: DeathQueue<u32> = DeathQueue::with_capacity(64);
    let mut lifetime_total = 0.0;

    match *init {
        HouseholdInit::OneInfective => {
            let life = dist.sample(rng);
            lifetime_total += life;
            deaths.push(life, 0);
            buckets.shift(0, true);
        }
        HouseholdInit::Prevalence { fraction, residuals } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(invalid(format!("initial prevalence must lie in (0, 1], got {fraction}")));
            }
            let count = ((fraction * pop_f).round() as usize).max(1);
            for individual in sample_indices(rng, pop, count).into_iter() {
                let household = individual / h;
                let life = residuals.draw(dist, rng);
                lifetime_total += life;
                deaths.push(life, household as u32);
                buckets.shift(household, true);
            }
        }
    }

    let mut n: usize = deaths.len();
    stop.check_start(n)?;
    let cap = stop.cap().unwrap_or(usize::MAX);
    let levels = stop.levels();
    let horizon = stop.horizon().unwrap_or(f64::INFINITY);
    let burn_in = config.burn_in;

    // sum_k i_k (h - i_k)
    let mut local_pairs: usize = buckets.infected.iter().map(|&i| i * (h - i)).sum();
    let mut t = 0.0;
    let mut progeny = n as u64;
    let mut severity = 0.0;
    let mut occupation = vec![0.0; n + 1];
    let mut max_state = n;
    let mut events = 0u64;
    let mut hitting_times = Vec::new();
    let mut next_level = 0;
    while next_level < levels.len() && levels[next_level] <= n {
        hitting_times.push((levels[next_level], 0.0));
        next_level += 1;
    }
    let mut window_person_time = 0.0;
    let mut window_states = vec![0.0; h + 1];

    let mut advance = |t_from: f64,
                       t_to: f64,
                       n: usize,
                       buckets: &Buckets,
                       occupation: &mut Vec<f64>,
                       severity: &mut f64| {
        let dt = t_to - t_from;
        occupation[n] += dt;
        *severity += n as f64 * dt;
        if t_to > burn_in {
            let w = t_to - t_from.max(burn_in);
            window_person_time += n as f64 * w;
            for (j, bucket) in buckets.members.iter().enumerate() {
                window_states[j] += bucket.len() as f64 * w;
            }
        }
    };

    let outcome = if !hitting_times.is_empty() {
        Outcome::LevelHit
    } else {
        loop {
            if n == 0 {
                break Outcome::Extinct;
            }
            let global_rate = config.lambda_global * n as f64 * (pop - n) as f64 / pop_f;
            let local_rate = config.lambda_local * local_pairs as f64;
            let rate = global_rate + local_rate;
            let t_birth = if rate > 0.0 {
                t + rng.sample::<f64, _>(Exp1) / rate
            } else {
                f64::INFINITY
            };
            let t_death = deaths.next_time();
            let is_birth = t_birth < t_death;
            let t_next = if is_birth { t_birth } else { t_death };

            if t_next >= horizon {
                advance(t, horizon, n, &buckets, &mut occupation, &mut severity);
                t = horizon;
                break Outcome::HorizonEnd;
            }
            advance(t, t_next, n, &buckets, &mut occupation, &mut severity);
            t = t_next;

            events += 1;
            if events > options.max_events {
                return Err(Error::BudgetExceeded {
                    budget: options.max_events,
                });
            }

            if is_birth {
                let household = if rng.random::<f64>() * rate < global_rate {
                    buckets.choose(rng, |j| (h - j) as f64)
                } else {
                    buckets.choose(rng, |j| (j * (h - j)) as f64)
                };
                let i = buckets.infected[household];
                // i (h - i) -> (i + 1)(h - i - 1)
                local_pairs = local_pairs + (h - i - 1) - i;
                buckets.shift(household, true);
                n += 1;
                progeny += 1;
                let life = dist.sample(rng);
                lifetime_total += life;
                deaths.push(t + life, household as u32);
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
                let (_, household) = deaths.pop().expect("death queue empty with infectives alive");
                let household = household as usize;
                let i = buckets.infected[household];
                // i (h - i) -> (i - 1)(h - i + 1)
                local_pairs = local_pairs + (i - 1) - (h - i);
                buckets.shift(household, false);
                n -= 1;
            }
        }
    };

    let observed_time = (t - burn_in).max(0.0);
    let (mean_prevalence, household_state_fractions) = if observed_time > 0.0 {
        (
            window_person_time / (observed_time * pop_f),
            window_states.iter().map(|x| x / (observed_time * m as f64)).collect(),
        )
    } else {
        (0.0, vec![0.0; h + 1])
    };

    Ok(HouseholdRecord {
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
        observed_time,
        mean_prevalence,
        household_state_fractions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    fn cfg(m: usize, h: usize, lg: f64, ll: f64) -> HouseholdConfig {
        HouseholdConfig {
            households: m,
            household_size: h,
            lambda_global: lg,
            lambda_local: ll,
            burn_in: 0.0,
        }
    }

    #[test]
    fn buckets_track_counts() {
        let mut b = Buckets::new(5, 3);
        b.shift(2, true);
        b.shift(2, true);
        b.shift(4, true);
        b.shift(2, false);
        assert_eq!(b.infected, vec![0, 0, 1, 0, 1]);
        let mut sizes: Vec<usize> = b.members.iter().map(|v| v.len()).collect();
        assert_eq!(sizes, vec![3, 2, 0, 0]);
        for (j, bucket) in b.members.iter().enumerate() {
            for (pos, &k) in bucket.iter().enumerate() {
                assert_eq!(b.infected[k], j);
                assert_eq!(b.position[k], pos);
            }
        }
        sizes.clear();
    }

    #[test]
    fn isolated_household_respects_size() {
        let config = cfg(1, 4, 0.0, 2.0);
        let dist = LifetimeDistribution::exponential();
        for i in 0..200 {
            let r = simulate_household(&config, &dist, &HouseholdInit::OneInfective, &StopRule::extinction(), &SimulationOptions::default(), &mut RandomStream::new(4, i))
                .unwrap();
            r.check_invariants(4).unwrap();
            assert_eq!(r.outcome, Outcome::Extinct);
        }
    }

    #[test]
    fn prevalence_start_and_horizon() {
        let config = HouseholdConfig { burn_in: 5.0, ..cfg(200, 3, 0.8, 0.5) };
        let init = HouseholdInit::Prevalence { fraction: 0.3, residuals: ResidualMode::EquilibriumResidual };
        let r = simulate_household(&config, &LifetimeDistribution::deterministic(), &init, &StopRule::time_horizon(20.0), &SimulationOptions::default(), &mut RandomStream::new(1, 0))
            .unwrap();
        r.check_invariants(600).unwrap();
        if r.outcome == Outcome::HorizonEnd {
            assert_eq!(r.observed_time, 15.0);
            let total: f64 = r.household_state_fractions.iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            let from_states: f64 = r.household_state_fractions.iter().enumerate().map(|(j, f)| j as f64 * f).sum::<f64>() / 3.0;
            assert!((from_states - r.mean_prevalence).abs() < 1e-9);
        }
        assert!(simulate_household(&config, &LifetimeDistribution::deterministic(), &HouseholdInit::Prevalence { fraction: 0.0, residuals: ResidualMode::FreshQ }, &StopRule::extinction(), &SimulationOptions::default(), &mut RandomStream::new(1, 0)).is_err());
    }
}
