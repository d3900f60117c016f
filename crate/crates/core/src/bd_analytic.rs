//! Insensitive means of birth-death type processes.
//!
//! With `beta(n) = n` and the regeneration rate `alpha(0) = 1`, detailed
//! balance gives the unnormalized stationary weights
//!
//! ```text
//! w(n) = prod_{i=0}^{n-1} alpha(i) / (i + 1),   n >= 1,
//! ```
//!
//! and the means of the original (non-regenerating) process started from one
//! individual follow directly: `E[A_n] = w(n)`, `E[T] = sum_n w(n)` and
//! `E[C] = E[S] = sum_n n w(n)`. None of these depend on the lifetime law
//! beyond its mean.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::logspace::{log_add_exp, LogSum, LogWeight};

/// Relative size below which the next weight ends a truncated series.
const TAIL_CUTOFF: f64 = 1e-16;

/// The birth-rate function `n -> alpha(n)` for `n >= 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum BirthRateModel {
    /// `alpha(n) = lambda n`.
    Branching { lambda: f64 },
    /// `alpha(n) = lambda n (N - n) / N`.
    Sis { population: usize, lambda: f64 },
    /// Within-household epidemic under a constant outside force `s`:
    /// `alpha(n) = (h - n) (s lambda_G + n lambda_L)`.
    HouseholdField {
        household_size: usize,
        lambda_local: f64,
        lambda_global: f64,
        prevalence: f64,
    },
    /// `rates[i]` is `alpha(i + 1)`; rates past the end of the table are zero.
    Custom { rates: Vec<f64> },
}

fn check_rate(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and nonnegative, got {x}")))
    }
}

impl BirthRateModel {
    pub fn branching(lambda: f64) -> Result<Self> {
        let m = Self::Branching { lambda };
        m.validate()?;
        Ok(m)
    }

    pub fn sis(population: usize, lambda: f64) -> Result<Self> {
        let m = Self::Sis { population, lambda };
        m.validate()?;
        Ok(m)
    }

    pub fn household_field(
        household_size: usize,
        lambda_local: f64,
        lambda_global: f64,
        prevalence: f64,
    ) -> Result<Self> {
        let m = Self::HouseholdField {
            household_size,
            lambda_local,
            lambda_global,
            prevalence,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn custom(rates: Vec<f64>) -> Result<Self> {
        let m = Self::Custom { rates };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Branching { lambda } => check_rate("lambda", *lambda),
            Self::Sis { population, lambda } => {
                if *population == 0 {
                    return Err(invalid("population size must be at least 1"));
                }
                check_rate("lambda", *lambda)
            }
            Self::HouseholdField {
                household_size,
                lambda_local,
                lambda_global,
                prevalence,
            } => {
                if *household_size == 0 {
                    return Err(invalid("household size must be at least 1"));
                }
                check_rate("lambda_local", *lambda_local)?;
                check_rate("lambda_global", *lambda_global)?;
                check_rate("prevalence", *prevalence)
            }
            Self::Custom { rates } => rates
                .iter()
                .enumerate()
                .try_for_each(|(i, &a)| check_rate(&format!("alpha({})", i + 1), a)),
        }
    }

    /// Birth rate with `n` alive. `alpha(0)` is zero here: the original
    /// process is absorbed at extinction.
    #[inline]
    pub fn rate(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match self {
            Self::Branching { lambda } => lambda * n as f64,
            Self::Sis { population, lambda } => {
                let big_n = *population;
                if n >= big_n {
                    0.0
                } else {
                    lambda * n as f64 * (big_n - n) as f64 / big_n as f64
                }
            }
            Self::HouseholdField {
                household_size,
                lambda_local,
                lambda_global,
                prevalence,
            } => {
                let h = *household_size;
                if n >= h {
                    0.0
                } else {
                    (h - n) as f64 * (prevalence * lambda_global + n as f64 * lambda_local)
                }
            }
            Self::Custom { rates } => rates.get(n - 1).copied().unwrap_or(0.0),
        }
    }

    /// Largest reachable population, when finite.
    pub fn state_bound(&self) -> Option<usize> {
        match self {
            Self::Branching { .. } => None,
            Self::Sis { population, .. } => Some(*population),
            Self::HouseholdField { household_size, .. } => Some(*household_size),
            Self::Custom { rates } => Some(rates.len() + 1),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Self::Branching { lambda } => format!("branching(lambda={lambda})"),
            Self::Sis { population, lambda } => format!("sis(N={population},lambda={lambda})"),
            Self::HouseholdField {
                household_size,
                lambda_local,
                lambda_global,
                prevalence,
            } => format!(
                "household_field(h={household_size},lambda_l={lambda_local},lambda_g={lambda_global},s={prevalence})"
            ),
            Self::Custom { rates } => format!("custom({} rates)", rates.len()),
        }
    }
}

/// Stationary weights of the regenerative process and the means they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSummary {
    /// `w(n)` for `n = 1..=weights.len()`; all later weights are zero or
    /// (when `truncated`) negligible.
    pub weights: Vec<LogWeight>,
    pub pi0: f64,
    pub log_pi0: f64,
    pub mean_duration: LogWeight,
    pub mean_progeny: LogWeight,
    pub truncated: bool,
}

impl AnalyticSummary {
    /// `E[A_n] = w(n)`.
    pub fn mean_occupation(&self, n: usize) -> LogWeight {
        match n {
            0 => LogWeight::ZERO,
            _ => self.weights.get(n - 1).copied().unwrap_or(LogWeight::ZERO),
        }
    }

    /// Stationary probability of the regenerative process in state `n`.
    pub fn pi(&self, n: usize) -> f64 {
        if n == 0 {
            self.pi0
        } else {
            (self.mean_occupation(n).ln() + self.log_pi0).exp()
        }
    }

    /// Mean total progeny, which equals the mean total severity.
    pub fn mean_severity(&self) -> LogWeight {
        self.mean_progeny
    }
}

/// Weights `w(1), w(2), ...` under the regeneration convention `alpha(0) = 1`.
///
/// Models with a finite state bound no larger than `n_max` are summed exactly.
/// Otherwise the series is cut once the next weight falls below `1e-16` of the
/// running sum while the ratio `alpha(n)/(n+1)` is below one; if that never
/// happens by `n_max` the series is reported as divergent.
pub fn stationary_weights(model: &BirthRateModel, n_max: usize) -> Result<AnalyticSummary> {
    model.validate()?;
    if n_max == 0 {
        return Err(invalid("n_max must be at least 1"));
    }
    let (limit, exact) = match model.state_bound() {
        Some(b) if b <= n_max => (b, true),
        _ => (n_max, false),
    };
    let log_cutoff = TAIL_CUTOFF.ln();

    let mut weights = vec![LogWeight::ONE];
    let mut duration = LogSum::new();
    let mut progeny = LogSum::new();
    duration.push_log(0.0);
    progeny.push_log(0.0);

    let mut current = 0.0;
    let mut finished = exact;
    let mut truncated = false;
    for n in 1..limit {
        let a = model.rate(n);
        if a == 0.0 {
            finished = true;
            break;
        }
        let ratio = a / (n + 1) as f64;
        let next = current + ratio.ln();
        if !exact && ratio < 1.0 && next < log_cutoff + duration.total().ln() {
            finished = true;
            truncated = true;
            break;
        }
        current = next;
        weights.push(LogWeight::from_log(current));
        duration.push_log(current);
        progeny.push_log(current + ((n + 1) as f64).ln());
    }
    if !finished {
        return Err(Error::DivergentSeries { n_max });
    }

    let mean_duration = duration.total();
    let log_pi0 = -log_add_exp(0.0, mean_duration.ln());
    Ok(AnalyticSummary {
        weights,
        pi0: log_pi0.exp(),
        log_pi0,
        mean_duration,
        mean_progeny: progeny.total(),
        truncated,
    })
}

/// `E[T] = sum_n w(n) = 1/pi(0) - 1`.
pub fn mean_duration(model: &BirthRateModel, n_max: usize) -> Result<LogWeight> {
    stationary_weights(model, n_max).map(|s| s.mean_duration)
}

/// `E[A_n] = w(n)`, computed directly from the product.
pub fn mean_occupation(model: &BirthRateModel, n: usize) -> Result<LogWeight> {
    model.validate()?;
    if n == 0 {
        return Err(invalid("occupation is defined for n >= 1"));
    }
    let mut log_w = 0.0;
    for i in 1..n {
        let a = model.rate(i);
        if a == 0.0 {
            return Ok(LogWeight::ZERO);
        }
        log_w += (a / (i + 1) as f64).ln();
    }
    Ok(LogWeight::from_log(log_w))
}

/// `E[C] = E[S] = sum_k k w(k)`.
pub fn mean_progeny(model: &BirthRateModel, n_max: usize) -> Result<LogWeight> {
    stationary_weights(model, n_max).map(|s| s.mean_progeny)
}

/// Mean time a Poisson(`lambda`)-birth branching process spends with `n`
/// alive: `lambda^(n-1) / (n max(1, lambda)^n)`. Finite for every `lambda`,
/// including the critical and supercritical range where it is `1/(lambda n)`.
pub fn branching_occupation(lambda: f64, n: usize) -> Result<f64> {
    check_rate("lambda", lambda)?;
    if n == 0 {
        return Err(invalid("occupation is defined for n >= 1"));
    }
    let n_f = n as f64;
    if lambda >= 1.0 {
        Ok(1.0 / (lambda * n_f))
    } else {
        Ok(lambda.powi(n as i32 - 1) / n_f)
    }
}

/// `-log(1 - lambda) / lambda`, with the `lambda -> 0` limit 1.
pub fn branching_duration(lambda: f64) -> Result<f64> {
    check_rate("lambda", lambda)?;
    if lambda >= 1.0 {
        return Err(Error::SupercriticalInput { lambda });
    }
    if lambda == 0.0 {
        return Ok(1.0);
    }
    Ok(-(-lambda).ln_1p() / lambda)
}

/// `1 / (1 - lambda)`.
pub fn branching_progeny(lambda: f64) -> Result<f64> {
    check_rate("lambda", lambda)?;
    if lambda >= 1.0 {
        return Err(Error::SupercriticalInput { lambda });
    }
    Ok(1.0 / (1.0 - lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const N_MAX: usize = 100_000;

    #[test]
    fn zero_rates_give_two_state_chain() {
        let m = BirthRateModel::custom(vec![]).unwrap();
        let s = stationary_weights(&m, 10).unwrap();
        assert_eq!(s.weights, vec![LogWeight::ONE]);
        assert!(s.mean_occupation(2).is_zero());
        assert_relative_eq!(s.pi0, 0.5, max_relative = 1e-15);
        assert_relative_eq!(s.mean_duration.value(), 1.0);
        assert_relative_eq!(s.mean_progeny.value(), 1.0);
        assert!(!s.truncated);

        let zeros = BirthRateModel::custom(vec![0.0; 5]).unwrap();
        assert_relative_eq!(mean_duration(&zeros, 10).unwrap().value(), 1.0);
    }

    #[test]
    fn subcritical_branching() {
        let m = BirthRateModel::branching(0.5).unwrap();
        let s = stationary_weights(&m, N_MAX).unwrap();
        assert!(s.truncated);
        for n in 1..20 {
            let expected = 0.5f64.powi(n as i32 - 1) / n as f64;
            assert_relative_eq!(s.mean_occupation(n).value(), expected, max_relative = 1e-12);
        }
        let two_ln2 = 2.0 * std::f64::consts::LN_2;
        assert_relative_eq!(s.pi0, 1.0 / (1.0 + two_ln2), max_relative = 1e-14);
        assert!((s.pi0 - 0.419060).abs() < 1e-6);
        assert_relative_eq!(s.mean_duration.value(), two_ln2, max_relative = 1e-14);
        assert_relative_eq!(s.mean_progeny.value(), 2.0, max_relative = 1e-14);
        assert_relative_eq!(mean_occupation(&m, 3).unwrap().value(), 0.25 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn small_sis_by_hand() {
        let m = BirthRateModel::sis(2, 1.0).unwrap();
        let s = stationary_weights(&m, 10).unwrap();
        assert_relative_eq!(s.mean_occupation(1).value(), 1.0);
        assert_relative_eq!(s.mean_occupation(2).value(), 0.25, max_relative = 1e-15);
        assert_relative_eq!(s.pi(0), 4.0 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(s.pi(1), 4.0 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(s.pi(2), 1.0 / 9.0, max_relative = 1e-14);
        assert_relative_eq!(s.mean_duration.value(), 1.25, max_relative = 1e-15);

        let m3 = BirthRateModel::sis(3, 1.0).unwrap();
        assert_relative_eq!(mean_progeny(&m3, 10).unwrap().value(), 17.0 / 9.0, max_relative = 1e-14);
    }

    #[test]
    fn supercritical_branching_diverges() {
        for lambda in [1.0, 2.0] {
            let m = BirthRateModel::branching(lambda).unwrap();
            assert_eq!(
                stationary_weights(&m, 1000).unwrap_err(),
                Error::DivergentSeries { n_max: 1000 }
            );
        }
        // Too short a truncation for a convergent series is also reported.
        let m = BirthRateModel::branching(0.5).unwrap();
        assert!(matches!(stationary_weights(&m, 5), Err(Error::DivergentSeries { .. })));
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(BirthRateModel::branching(-1.0).is_err());
        assert!(BirthRateModel::sis(0, 1.0).is_err());
        assert!(BirthRateModel::custom(vec![1.0, f64::NAN]).is_err());
        let m = BirthRateModel::branching(0.5).unwrap();
        assert!(stationary_weights(&m, 0).is_err());
        assert!(mean_occupation(&m, 0).is_err());
    }

    #[test]
    fn interior_zero_rate_cuts_the_chain() {
        let m = BirthRateModel::custom(vec![2.0, 0.0, 5.0]).unwrap();
        let s = stationary_weights(&m, 10).unwrap();
        assert_eq!(s.weights.len(), 2);
        assert!(s.mean_occupation(3).is_zero());
        assert!(mean_occupation(&m, 4).unwrap().is_zero());
        assert_relative_eq!(s.mean_duration.value(), 2.0);
    }

    #[test]
    fn branching_closed_forms() {
        assert_eq!(branching_occupation(1.0, 5).unwrap(), 0.2);
        assert_relative_eq!(branching_occupation(2.0, 3).unwrap(), 1.0 / 6.0);
        assert_eq!(branching_occupation(0.5, 1).unwrap(), 1.0);
        assert_eq!(branching_duration(0.0).unwrap(), 1.0);
        assert_eq!(branching_progeny(0.0).unwrap(), 1.0);
        assert_relative_eq!(branching_duration(1e-9).unwrap(), 1.0, max_relative = 1e-8);
        assert_relative_eq!(branching_duration(0.5).unwrap(), 1.386294, max_relative = 1e-6);
        assert_eq!(branching_progeny(0.5).unwrap(), 2.0);
        assert_relative_eq!(branching_duration(0.9).unwrap(), 2.558428, max_relative = 1e-6);
        assert_relative_eq!(branching_progeny(0.9).unwrap(), 10.0, max_relative = 1e-12);
        assert!(matches!(branching_duration(1.0), Err(Error::SupercriticalInput { .. })));
        assert!(matches!(branching_progeny(1.5), Err(Error::SupercriticalInput { .. })));
    }

    #[test]
    fn branching_duration_matches_truncated_series() {
        let series: f64 = (1..=10_000).map(|n| 0.9f64.powi(n - 1) / n as f64).sum();
        assert_relative_eq!(branching_duration(0.9).unwrap(), series, max_relative = 1e-12);
    }

    #[test]
    fn branching_occupation_continuous_at_one() {
        for n in 1..50 {
            let below = branching_occupation(1.0 - 1e-10, n).unwrap();
            let at = branching_occupation(1.0, n).unwrap();
            assert!((below - at).abs() < 1e-7, "n = {n}");
        }
    }

    #[test]
    fn doubling_n_max_keeps_shared_entries() {
        let m = BirthRateModel::branching(0.7).unwrap();
        let a = stationary_weights(&m, 500).unwrap();
        let b = stationary_weights(&m, 1000).unwrap();
        assert_eq!(a, b);
        let c = BirthRateModel::custom(vec![0.4, 3.0, 1.0, 0.2]).unwrap();
        let a = stationary_weights(&c, 5).unwrap();
        let b = stationary_weights(&c, 10).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert_eq!(x, y);
        }
    }

    fn arb_model() -> impl Strategy<Value = BirthRateModel> {
        prop_oneof![
            (0.0f64..0.95).prop_map(|l| BirthRateModel::Branching { lambda: l }),
            (1usize..400, 0.0f64..4.0).prop_map(|(n, l)| BirthRateModel::Sis { population: n, lambda: l }),
            (1usize..8, 0.0f64..3.0, 0.0f64..3.0, 0.0f64..1.0).prop_map(|(h, ll, lg, s)| {
                BirthRateModel::HouseholdField {
                    household_size: h,
                    lambda_local: ll,
                    lambda_global: lg,
                    prevalence: s,
                }
            }),
            prop::collection::vec(0.0f64..10.0, 0..12).prop_map(|rates| BirthRateModel::Custom { rates }),
        ]
    }

    proptest! {
        #[test]
        fn detailed_balance(model in arb_model()) {
            let s = stationary_weights(&model, N_MAX).unwrap();
            for n in 1..s.weights.len() {
                // w(n+1) (n+1) = w(n) alpha(n)
                let lhs = s.weights[n].ln() + ((n + 1) as f64).ln();
                let rhs = s.weights[n - 1].ln() + model.rate(n).ln();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
            }
            let total: f64 = (0..=s.weights.len()).map(|n| s.pi(n)).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn duration_is_sum_of_occupations(model in arb_model()) {
            let s = stationary_weights(&model, N_MAX).unwrap();
            let total: f64 = s.weights.iter().map(|w| w.value()).sum();
            prop_assert!((total - s.mean_duration.value()).abs() <= 1e-12 * total);
            for n in 1..=s.weights.len().min(20) {
                let direct = mean_occupation(&model, n).unwrap();
                prop_assert!((direct.ln() - s.mean_occupation(n).ln()).abs() <= 1e-9 * direct.ln().abs().max(1.0)
                    || (direct.is_zero() && s.mean_occupation(n).is_zero()));
            }
        }

        #[test]
        fn progeny_balance(model in arb_model()) {
            // 1 + sum_k alpha(k) w(k) = sum_k k w(k)
            let s = stationary_weights(&model, N_MAX).unwrap();
            let births: f64 = 1.0 + s.weights.iter().enumerate()
                .map(|(i, w)| model.rate(i + 1) * w.value()).sum::<f64>();
            let lives: f64 = s.weights.iter().enumerate()
                .map(|(i, w)| (i + 1) as f64 * w.value()).sum();
            prop_assert!((births - lives).abs() <= 1e-10 * lives);
            prop_assert!((lives - s.mean_progeny.value()).abs() <= 1e-10 * lives);
        }
    }
}
