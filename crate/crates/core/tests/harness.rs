use bdkit::bd_analytic::branching_progeny;
use bdkit::engine::{InitialCondition, ResidualMode, StopRule};
use bdkit::harness::{estimate, estimate_many, insensitivity_report, Quantity, RunSettings, Scenario};
use bdkit::{BirthRateModel, LifetimeDistribution};

fn single(model: BirthRateModel, dist: LifetimeDistribution) -> Scenario {
    Scenario::new(model, dist, InitialCondition::SingleIndividual, StopRule::extinction())
}

#[test]
fn degenerate_deterministic_estimate() {
    let s = single(BirthRateModel::branching(0.0).unwrap(), LifetimeDistribution::deterministic());
    let e = estimate(&s, Quantity::Duration, &RunSettings::new(100, 1)).unwrap();
    assert_eq!((e.mean, e.std_error, e.ci_low, e.ci_high), (1.0, 0.0, 1.0, 1.0));
}

#[test]
fn gamma_progeny_matches_closed_form() {
    let s = single(BirthRateModel::branching(0.5).unwrap(), LifetimeDistribution::gamma(2.0).unwrap());
    let e = estimate(&s, Quantity::Progeny, &RunSettings::new(200_000, 2)).unwrap();
    let target = branching_progeny(0.5).unwrap();
    assert_eq!(target, 2.0);
    assert!(((e.mean - target) / e.std_error).abs() <= 4.0, "{e:?}");
    assert!(e.ci_low < e.mean && e.mean < e.ci_high);
}

#[test]
fn household_of_three_via_sis_reduction() {
    // SIS with N = 3 and lambda / N = 0.5 is one household of three
    let model = BirthRateModel::sis(3, 1.5).unwrap();
    let dists = [LifetimeDistribution::exponential(), LifetimeDistribution::deterministic()];
    let report = insensitivity_report(
        Quantity::Severity,
        |d| single(model.clone(), d.clone()),
        &dists,
        Some(2.5),
        &RunSettings::new(100_000, 3),
        4.0,
    )
    .unwrap();
    assert!(report.pass, "{report:?}");
}

#[test]
fn endemic_extinction_is_sensitive_to_lifetime_law() {
    let model = BirthRateModel::sis(40, 2.0).unwrap();
    let dists = [LifetimeDistribution::exponential(), LifetimeDistribution::deterministic()];
    let report = insensitivity_report(
        Quantity::Duration,
        |d| {
            Scenario::new(
                model.clone(),
                d.clone(),
                InitialCondition::EndemicLevel { residuals: ResidualMode::FreshQ },
                StopRule::extinction(),
            )
        },
        &dists,
        None,
        &RunSettings::new(2_000, 4),
        4.0,
    )
    .unwrap();
    assert!(!report.pass);
    let ratio = report.entry("det").unwrap().estimate.mean / report.entry("exp").unwrap().estimate.mean;
    assert!((0.47..=0.78).contains(&ratio), "{ratio}");
}

#[test]
fn pair_checks_are_symmetric_and_complete() {
    let model = BirthRateModel::branching(0.4).unwrap();
    let dists = [
        LifetimeDistribution::exponential(),
        LifetimeDistribution::deterministic(),
        LifetimeDistribution::uniform(0.5).unwrap(),
    ];
    let report = insensitivity_report(
        Quantity::Duration,
        |d| single(model.clone(), d.clone()),
        &dists,
        None,
        &RunSettings::new(5_000, 5),
        4.0,
    )
    .unwrap();
    assert_eq!(report.pairs.len(), 3);
    for p in &report.pairs {
        let a = report.entry(&p.first).unwrap().estimate;
        let b = report.entry(&p.second).unwrap().estimate;
        assert_eq!(p.difference, a.mean - b.mean);
        assert_eq!(p.pass, p.difference.abs() <= 4.0 * a.std_error.hypot(b.std_error));
    }
    assert!(insensitivity_report(Quantity::Duration, |d| single(model.clone(), d.clone()), &dists[..1], None, &RunSettings::new(10, 1), 4.0).is_err());
}

#[test]
fn worker_count_does_not_change_results() {
    let s = Scenario::new(
        BirthRateModel::sis(30, 1.8).unwrap(),
        LifetimeDistribution::two_point(0.4, 0.5).unwrap(),
        InitialCondition::Count { count: 3, residuals: ResidualMode::EquilibriumResidual },
        StopRule::extinction(),
    );
    let q = [Quantity::Duration, Quantity::Progeny, Quantity::Occupation(2), Quantity::HitFraction(10)];
    let base = RunSettings::new(3_000, 6);
    let one = estimate_many(&s, &q, &base.with_workers(1)).unwrap();
    for w in [2, 5, 16] {
        assert_eq!(estimate_many(&s, &q, &base.with_workers(w)).unwrap(), one);
    }
    assert!(estimate_many(&s, &q, &base.with_workers(0)).is_err());
    assert!(estimate_many(&s, &q, &RunSettings::new(1, 6)).is_err());
}
