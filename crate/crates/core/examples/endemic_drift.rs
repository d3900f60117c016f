//! Finite-N behaviour of the deterministic/exponential ratio of endemic
//! extinction times for SIS at lambda = 2.
//!
//! The exponential mean comes from the Markov chain started at the endemic
//! level; the deterministic mean is Monte Carlo in both residual modes.
//!
//! usage: endemic_drift [N:reps ...]   (default 40:2000 50:800 60:200)

use bdkit::engine::{InitialCondition, ResidualMode, StopRule};
use bdkit::harness::{estimate, Quantity, RunSettings, Scenario};
use bdkit::sis_analytic::extinction_probability;
use bdkit::{BirthRateModel, LifetimeDistribution};
use std::time::Instant;

/// Mean absorption time of the Markov SIS chain started from `k` infectives.
/// Every term is positive, so the sum is stable.
fn markov_extinction_time(n: usize, lambda: f64, k: usize) -> f64 {
    let birth = |i: usize| lambda * i as f64 * (n - i) as f64 / n as f64;
    let mut total = 0.0;
    for j in 1..=k {
        let (mut prod, mut inner) = (1.0, 0.0);
        for i in j..=n {
            if i > j {
                prod *= birth(i - 1) / (i - 1) as f64;
            }
            inner += prod / i as f64;
        }
        total += inner;
    }
    total
}

fn main() -> bdkit::Result<()> {
    let lambda = 2.0;
    let args: Vec<(usize, usize)> = std::env::args()
        .skip(1)
        .map(|a| {
            let (n, r) = a.split_once(':').expect("N:reps");
            (n.parse().expect("N"), r.parse().expect("reps"))
        })
        .collect();
    let runs = if args.is_empty() { vec![(40, 2000), (50, 800), (60, 200)] } else { args };
    let det = LifetimeDistribution::deterministic();
    let p_exp = extinction_probability(&LifetimeDistribution::exponential(), lambda)?.p_q;
    let p_det = extinction_probability(&det, lambda)?.p_q;
    println!("asymptotic ratio {:.4}", (1.0 - p_exp) / (1.0 - p_det));
    println!("{:>4} {:>6} {:>12} {:>24} {:>24} {:>8}", "N", "reps", "exp exact", "det/exp residual", "det/exp fresh", "secs");
    for (n, reps) in runs {
        let start = Instant::now();
        let model = BirthRateModel::sis(n, lambda)?;
        let level = InitialCondition::EndemicLevel { residuals: ResidualMode::FreshQ }.initial_count(&model)?;
        let exp_mean = markov_extinction_time(n, lambda, level);
        let mut cells = Vec::new();
        for (i, residuals) in [ResidualMode::EquilibriumResidual, ResidualMode::FreshQ].into_iter().enumerate() {
            let scenario = Scenario::new(model.clone(), det.clone(), InitialCondition::EndemicLevel { residuals }, StopRule::extinction());
            let est = estimate(&scenario, Quantity::Duration, &RunSettings::new(reps, 9_000 + 10 * n as u64 + i as u64))?;
            cells.push(format!("{:.4} +- {:.4}", est.mean / exp_mean, est.std_error / exp_mean));
        }
        println!(
            "{n:>4} {reps:>6} {exp_mean:>12.1} {:>24} {:>24} {:>8.1}",
            cells[0],
            cells[1],
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
