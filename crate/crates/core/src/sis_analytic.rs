//! Homogeneous and household SIS epidemics.
//!
//! The homogeneous SIS epidemic in a population of `N` is the birth-death
//! type process with `alpha(n) = lambda n (N - n) / N`, so its quasi-stationary
//! law, mean duration and mean total number of infectives from one initial
//! infective are finite sums. Those sums grow like `exp(cN)` with
//! `c = log(lambda) - 1 + 1/lambda` when `lambda > 1`, so everything is
//! returned as a [`LogWeight`].
//!
//! Quantities that *do* depend on the lifetime law enter through the
//! extinction probability `p_Q` of the approximating branching process.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::lifetimes::LifetimeDistribution;
use crate::logspace::{LogSum, LogWeight};

const FIXED_POINT_TOL: f64 = 1e-13;
const FIXED_POINT_MAX_ITER: usize = 100_000;
const BISECTION_LO: f64 = 1e-12;
const BISECTION_TOL: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;

fn check_sis(population: usize, lambda: f64) -> Result<()> {
    if population == 0 {
        return Err(invalid("population size must be at least 1"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(invalid(format!("lambda must be finite and nonnegative, got {lambda}")));
    }
    Ok(())
}

/// `log w(n)` for `n = 1..=N`, where `w(n) = (N-1)! / (n (N-n)!) (lambda/N)^(n-1)`.
fn sis_log_weights(population: usize, lambda: f64) -> Vec<f64> {
    let big_n = population as f64;
    let mut out = Vec::with_capacity(population);
    let mut current = 0.0;
    out.push(current);
    for n in 1..population {
        let nf = n as f64;
        current += (lambda * nf * (big_n - nf) / big_n / (nf + 1.0)).ln();
        out.push(current);
    }
    out
}

/// Stationary law of the regenerative SIS process and its restriction to
/// the nonextinct states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiStationary {
    pub population: usize,
    pub lambda: f64,
    /// `pi(n)` for `n = 0..=N`.
    pub pi: Vec<f64>,
    /// `log pi(n)`; usable when `pi(0)` underflows.
    pub log_pi: Vec<f64>,
    /// `pi(n) / (1 - pi(0))` for `n = 1..=N` (index 0 holds `n = 1`).
    pub pi_tilde: Vec<f64>,
}

impl QuasiStationary {
    /// Most likely nonextinct state.
    pub fn mode(&self) -> usize {
        self.log_pi
            .iter()
            .enumerate()
            .skip(1)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(n, _)| n)
            .unwrap_or(0)
    }

    pub fn quasi_mean(&self) -> f64 {
        self.pi_tilde
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }
}

pub fn sis_quasi_stationary(population: usize, lambda: f64) -> Result<QuasiStationary> {
    check_sis(population, lambda)?;
    let log_w = sis_log_weights(population, lambda);
    let nonextinct: LogSum = log_w.iter().copied().collect();
    let log_nonextinct = nonextinct.total().ln();
    let mut total = nonextinct;
    total.push_log(0.0);
    let log_norm = total.total().ln();

    let mut log_pi = Vec::with_capacity(population + 1);
    log_pi.push(-log_norm);
    log_pi.extend(log_w.iter().map(|l| l - log_norm));
    let pi = log_pi.iter().map(|l| l.exp()).collect();
    let pi_tilde = log_w.iter().map(|l| (l - log_nonextinct).exp()).collect();
    Ok(QuasiStationary {
        population,
        lambda,
        pi,
        log_pi,
        pi_tilde,
    })
}

/// Direct summation of `w(1) + ... + w(N)`.
pub(crate) fn duration_by_series(population: usize, lambda: f64) -> LogWeight {
    if lambda == 0.0 {
        return LogWeight::ONE;
    }
    sis_log_weights(population, lambda)
        .into_iter()
        .collect::<LogSum>()
        .total()
}

/// The same sum reindexed by `j = N - n`:
///
/// ```text
/// E[T] = (N-1)! (lambda/N)^(N-1) e^(N/lambda) sum_{j<N} Pois(j; N/lambda) / (N - j)
/// ```
///
/// For `lambda > 1` the Poisson mass sits well inside `j < N`, so the sum is
/// a well-conditioned average and the growth lives in the prefactor.
pub(crate) fn duration_by_poisson_weights(population: usize, lambda: f64) -> LogWeight {
    let big_n = population as f64;
    let mu = big_n / lambda;
    let log_mu = mu.ln();
    let average: LogSum = (0..population)
        .map(|j| {
            let jf = j as f64;
            -mu + jf * log_mu - ln_gamma(jf + 1.0) - (big_n - jf).ln()
        })
        .collect();
    let log_prefactor = ln_gamma(big_n) + (big_n - 1.0) * (lambda / big_n).ln() + mu;
    LogWeight::from_log(log_prefactor + average.total().ln())
}

/// Mean duration from one initial infective, for any lifetime law.
pub fn sis_mean_duration_exact(population: usize, lambda: f64) -> Result<LogWeight> {
    check_sis(population, lambda)?;
    if lambda > 1.0 && population > 1 {
        Ok(duration_by_poisson_weights(population, lambda))
    } else {
        Ok(duration_by_series(population, lambda))
    }
}

/// Mean total number of infectives (equivalently, mean severity) from one
/// initial infective: `sum_n (N-1)!/(N-n)! (lambda/N)^(n-1)`.
pub fn sis_mean_progeny_exact(population: usize, lambda: f64) -> Result<LogWeight> {
    check_sis(population, lambda)?;
    if lambda == 0.0 {
        return Ok(LogWeight::ONE);
    }
    Ok(sis_log_weights(population, lambda)
        .into_iter()
        .enumerate()
        .map(|(i, l)| l + ((i + 1) as f64).ln())
        .collect::<LogSum>()
        .total())
}

/// Exponent `log(lambda) - 1 + 1/lambda` of the supercritical growth.
pub fn supercritical_rate(lambda: f64) -> f64 {
    lambda.ln() - 1.0 + 1.0 / lambda
}

/// Large-`N` equivalent of the mean duration. The regime is chosen by exact
/// comparison of `lambda` with 1:
///
/// * `lambda < 1`: `-log(1 - lambda) / lambda`
/// * `lambda = 1`: `log(N) / 2`
/// * `lambda > 1`: `sqrt(2 pi) / (lambda - 1) exp(cN) / sqrt(N)`
pub fn sis_duration_asymptotic(population: f64, lambda: f64) -> Result<LogWeight> {
    if !(population >= 2.0 && population.is_finite()) {
        return Err(invalid(format!("population must be at least 2, got {population}")));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    let log_value = if lambda < 1.0 {
        (-(-lambda).ln_1p() / lambda).ln()
    } else if lambda == 1.0 {
        (0.5 * population.ln()).ln()
    } else {
        0.5 * std::f64::consts::TAU.ln() - (lambda - 1.0).ln()
            + supercritical_rate(lambda) * population
            - 0.5 * population.ln()
    };
    Ok(LogWeight::from_log(log_value))
}

/// Large-`N` equivalent of the mean total number of infectives,
/// `sqrt(2 pi) / lambda sqrt(N) exp(cN)`; supercritical only.
pub fn sis_progeny_asymptotic(population: f64, lambda: f64) -> Result<LogWeight> {
    if !(population >= 1.0 && population.is_finite()) {
        return Err(invalid(format!("population must be at least 1, got {population}")));
    }
    if !(lambda > 1.0) {
        return Err(Error::SubcriticalInput { lambda });
    }
    Ok(LogWeight::from_log(
        0.5 * std::f64::consts::TAU.ln() - lambda.ln()
            + 0.5 * population.ln()
            + supercritical_rate(lambda) * population,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtinctionSolution {
    pub p_q: f64,
    pub iterations: usize,
    /// `|p - L(lambda (1 - p))|` at the returned `p`.
    pub residual: f64,
}

/// Extinction probability of the branching process in which each individual
/// lives for `Q` and gives birth at rate `lambda` while alive.
///
/// The offspring count is Poisson(`lambda Q`) mixed over `Q`, whose generating
/// function at `p` is `L_Q(lambda (1 - p))`. Iterating that map from 0
/// increases monotonically to its smallest fixed point.
pub fn extinction_probability(dist: &LifetimeDistribution, lambda: f64) -> Result<ExtinctionSolution> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!("lambda must be positive, got {lambda}")));
    }
    if lambda <= 1.0 {
        return Ok(ExtinctionSolution {
            p_q: 1.0,
            iterations: 0,
            residual: 0.0,
        });
    }
    let step = |p: f64| dist.laplace(lambda * (1.0 - p));
    let mut p = 0.0;
    let mut last_step = f64::INFINITY;
    for iteration in 1..=FIXED_POINT_MAX_ITER {
        let next = step(p);
        last_step = (next - p).abs();
        p = next;
        if last_step < FIXED_POINT_TOL {
            return Ok(ExtinctionSolution {
                p_q: p,
                iterations: iteration,
                residual: (p - step(p)).abs(),
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: FIXED_POINT_MAX_ITER,
        last_step,
    })
}

/// Leading-order mean time to extinction from the endemic level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndemicExtinctionMean {
    /// `mu / (1 - p_Q)`; an asymptotic equivalent, not a finite-`N` value.
    pub mean: LogWeight,
    /// Exact mean duration from one infective.
    pub mu: LogWeight,
    pub extinction: ExtinctionSolution,
}

pub fn endemic_extinction_mean(
    population: usize,
    lambda: f64,
    dist: &LifetimeDistribution,
) -> Result<EndemicExtinctionMean> {
    check_sis(population, lambda)?;
    if !(lambda > 1.0) {
        return Err(Error::SubcriticalInput { lambda });
    }
    let extinction = extinction_probability(dist, lambda)?;
    let mu = sis_mean_duration_exact(population, lambda)?;
    let mean = mu / LogWeight::from_value(1.0 - extinction.p_q);
    Ok(EndemicExtinctionMean {
        mean,
        mu,
        extinction,
    })
}

fn check_household(h: usize, rates: &[(&str, f64)]) -> Result<()> {
    if h == 0 {
        return Err(invalid("household size must be at least 1"));
    }
    for (name, x) in rates {
        if !(x.is_finite() && *x >= 0.0) {
            return Err(invalid(format!("{name} must be finite and nonnegative, got {x}")));
        }
    }
    Ok(())
}

/// Mean severity of a within-household outbreak started by one infective,
/// `sum_{n=1}^h (h-1)!/(h-n)! lambda_L^(n-1)`.
pub fn household_severity_mean(h: usize, lambda_local: f64) -> Result<f64> {
    check_household(h, &[("lambda_local", lambda_local)])?;
    let mut term = 1.0;
    let mut total = 1.0;
    for n in 1..h {
        term *= (h - n) as f64 * lambda_local;
        total += term;
    }
    Ok(total)
}

/// Household reproduction number `R* = lambda_G E[S]`.
pub fn household_rstar(h: usize, lambda_global: f64, lambda_local: f64) -> Result<f64> {
    check_household(h, &[("lambda_global", lambda_global)])?;
    Ok(lambda_global * household_severity_mean(h, lambda_local)?)
}

/// Stationary distribution `(phi_0, ..., phi_h)` of the number infected in a
/// household exposed to a constant outside force `lambda_G s`:
/// `k phi_k = (h + 1 - k) (lambda_G s + (k - 1) lambda_L) phi_{k-1}`.
pub fn household_phi(h: usize, lambda_global: f64, lambda_local: f64, s: f64) -> Result<Vec<f64>> {
    check_household(
        h,
        &[("lambda_global", lambda_global), ("lambda_local", lambda_local), ("s", s)],
    )?;
    Ok(phi_unchecked(h, lambda_global, lambda_local, s))
}

fn phi_unchecked(h: usize, lambda_global: f64, lambda_local: f64, s: f64) -> Vec<f64> {
    let mut log_w = Vec::with_capacity(h + 1);
    log_w.push(0.0);
    let mut current = 0.0f64;
    for k in 1..=h {
        let kf = k as f64;
        let factor = (h + 1 - k) as f64 * (lambda_global * s + (kf - 1.0) * lambda_local) / kf;
        current += factor.ln();
        log_w.push(current);
    }
    let log_norm = log_w.iter().copied().collect::<LogSum>().total().ln();
    log_w.into_iter().map(|l| (l - log_norm).exp()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdEquilibrium {
    pub household_size: usize,
    pub lambda_global: f64,
    pub lambda_local: f64,
    pub r_star: f64,
    /// Endemic fraction of the population infected.
    pub proportion: f64,
    /// Mean number infected per household, `h * proportion`.
    pub mean_infectives: f64,
    /// Household infection-count distribution at the equilibrium.
    pub phi: Vec<f64>,
    /// `|sum_i i phi_i / h - proportion|`.
    pub residual: f64,
}

/// Endemic equilibrium of the household SIS epidemic with many households.
///
/// Each individual feels the outside force `lambda_G z` when a fraction `z` of
/// the population is infected, so `z` solves
/// `z = (1/h) sum_i i phi_i(z)`. The nonzero root exists exactly when
/// `R* > 1` and is found by bisection on `(1e-12, 1]`.
pub fn household_endemic(h: usize, lambda_global: f64, lambda_local: f64) -> Result<HouseholdEquilibrium> {
    let r_star = household_rstar(h, lambda_global, lambda_local)?;
    let hf = h as f64;
    let prevalence_gap = |s: f64| {
        let phi = phi_unchecked(h, lambda_global, lambda_local, s);
        phi.iter().enumerate().map(|(i, p)| i as f64 * p).sum::<f64>() / hf - s
    };

    let proportion = if r_star <= 1.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (BISECTION_LO, 1.0);
        let (g_lo, g_hi) = (prevalence_gap(lo), prevalence_gap(hi));
        if !(g_lo > 0.0 && g_hi < 0.0) {
            return Err(Error::BracketFailure { lo, hi, g_lo, g_hi });
        }
        for _ in 0..BISECTION_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if prevalence_gap(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < BISECTION_TOL {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    let phi = phi_unchecked(h, lambda_global, lambda_local, proportion);
    Ok(HouseholdEquilibrium {
        household_size: h,
        lambda_global,
        lambda_local,
        r_star,
        proportion,
        mean_infectives: hf * proportion,
        residual: prevalence_gap(proportion).abs(),
        phi,
    })
}
