use bdkit::engine::{
    simulate, simulate_household, simulate_regenerative, HouseholdConfig, HouseholdInit, InitialCondition, Outcome,
    SimulationOptions, StopRule,
};
use bdkit::harness::{compare, estimate, estimate_many, run_replicates, Quantity, RunSettings, Scenario};
use bdkit::rng::RandomStream;
use bdkit::sis_analytic::extinction_probability;
use bdkit::{BirthRateModel, LifetimeDistribution};

fn dists() -> Vec<LifetimeDistribution> {
    vec![
        LifetimeDistribution::exponential(),
        LifetimeDistribution::deterministic(),
        LifetimeDistribution::gamma(0.5).unwrap(),
        LifetimeDistribution::uniform(1.0).unwrap(),
        LifetimeDistribution::two_point(0.2, 0.5).unwrap(),
    ]
}

#[test]
fn trivial_branching_run() {
    let model = BirthRateModel::branching(0.0).unwrap();
    let mut rng = RandomStream::new(1, 0);
    let rec = simulate(
        &model,
        &LifetimeDistribution::deterministic(),
        &InitialCondition::SingleIndividual,
        &StopRule::extinction(),
        &SimulationOptions::default(),
        &mut rng,
    )
    .unwrap();
    assert_eq!((rec.duration, rec.progeny, rec.severity, rec.occupation(1)), (1.0, 1, 1.0, 1.0));
    assert_eq!(rec.outcome, Outcome::Extinct);
}

#[test]
fn first_state_occupation_is_one_everywhere() {
    let models = [
        BirthRateModel::branching(0.7).unwrap(),
        BirthRateModel::sis(15, 1.2).unwrap(),
        BirthRateModel::custom(vec![2.0, 0.5, 3.0]).unwrap(),
    ];
    for (i, model) in models.iter().enumerate() {
        for (j, dist) in dists().iter().enumerate() {
            let scenario = Scenario::new(model.clone(), dist.clone(), InitialCondition::SingleIndividual, StopRule::extinction());
            let est = estimate(&scenario, Quantity::Occupation(1), &RunSettings::new(20_000, (10 * i + j) as u64)).unwrap();
            let v = compare(&est, 1.0, 4.0).unwrap();
            assert!(v.pass, "{} {dist}: {:?}", model.label(), est);
        }
    }
}

#[test]
fn hitting_probability_follows_branching_approximation() {
    let (n, lambda) = (200, 2.0);
    let model = BirthRateModel::sis(n, lambda).unwrap();
    let level = n / 5;
    for dist in [LifetimeDistribution::exponential(), LifetimeDistribution::deterministic()] {
        let p = extinction_probability(&dist, lambda).unwrap().p_q;
        let scenario = Scenario::new(model.clone(), dist.clone(), InitialCondition::SingleIndividual, StopRule::hitting_level(level));
        let est = estimate(&scenario, Quantity::HitFraction(level), &RunSettings::new(10_000, 5)).unwrap();
        let z = (est.mean - (1.0 - p)) / est.std_error;
        assert!(z.abs() < 3.0, "{dist}: {} vs {}", est.mean, 1.0 - p);
    }
    // birth-death ruin formula for exponential lifetimes
    let mut sum = 0.0;
    let mut prod = 1.0;
    for j in 0..level {
        if j > 0 {
            prod *= n as f64 / (lambda * (n - j) as f64);
        }
        sum += prod;
    }
    let scenario = Scenario::new(
        model,
        LifetimeDistribution::exponential(),
        InitialCondition::SingleIndividual,
        StopRule::hitting_level(level),
    );
    let est = estimate(&scenario, Quantity::HitFraction(level), &RunSettings::new(10_000, 6)).unwrap();
    assert!(compare(&est, 1.0 / sum, 4.0).unwrap().pass);
}

#[test]
fn regenerative_examples() {
    let options = SimulationOptions::default();
    let mut rng = RandomStream::new(2, 0);
    let occ = simulate_regenerative(
        &BirthRateModel::custom(vec![]).unwrap(),
        &LifetimeDistribution::uniform(0.5).unwrap(),
        1e6,
        &options,
        &mut rng,
    )
    .unwrap();
    assert!((occ.fractions[0] - 0.5).abs() < 0.01);
    let occ = simulate_regenerative(
        &BirthRateModel::branching(0.5).unwrap(),
        &LifetimeDistribution::gamma(2.0).unwrap(),
        1e6,
        &options,
        &mut rng,
    )
    .unwrap();
    assert!((occ.fractions[0] - 0.419060).abs() < 0.01);
    assert!(simulate_regenerative(&BirthRateModel::branching(1.5).unwrap(), &LifetimeDistribution::exponential(), 10.0, &options, &mut rng).is_err());
}

/// Two-sample KS distance.
fn ks_two_sample(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn singleton_households_reduce_to_homogeneous_sis() {
    let n = 10_000;
    let (pop, lambda) = (30, 1.4);
    let dist = LifetimeDistribution::gamma(2.0).unwrap();
    let options = SimulationOptions::default();
    let config = HouseholdConfig {
        households: pop,
        household_size: 1,
        lambda_global: lambda,
        lambda_local: 5.0,
        burn_in: 0.0,
    };
    let model = BirthRateModel::sis(pop, lambda).unwrap();
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let mut rng = RandomStream::new(3, i);
        a.push(
            simulate_household(&config, &dist, &HouseholdInit::OneInfective, &StopRule::extinction(), &options, &mut rng)
                .unwrap()
                .duration,
        );
        let mut rng = RandomStream::new(4, i);
        b.push(
            simulate(&model, &dist, &InitialCondition::SingleIndividual, &StopRule::extinction(), &options, &mut rng)
                .unwrap()
                .duration,
        );
    }
    let d = ks_two_sample(a, b);
    let critical = 1.628 * (2.0 / n as f64).sqrt();
    assert!(d < critical, "D = {d}, critical {critical}");
}

#[test]
fn budget_overruns_are_counted_then_fatal() {
    let scenario = Scenario {
        options: SimulationOptions { max_events: 60 },
        ..Scenario::new(
            BirthRateModel::branching(0.5).unwrap(),
            LifetimeDistribution::exponential(),
            InitialCondition::SingleIndividual,
            StopRule::extinction(),
        )
    };
    let mut settings = RunSettings::new(20_000, 8);
    settings.max_failed_fraction = 0.05;
    let est = estimate(&scenario, Quantity::Duration, &settings).unwrap();
    assert!(est.failed_reps > 0);
    assert_eq!(est.n_reps + est.failed_reps, 20_000);
    settings.max_failed_fraction = 0.0;
    assert!(matches!(
        estimate(&scenario, Quantity::Duration, &settings),
        Err(bdkit::Error::TooManyFailedReplicates(_))
    ));
}

#[test]
fn records_satisfy_accounting_identities() {
    let model = BirthRateModel::sis(25, 2.5).unwrap();
    for dist in dists() {
        let scenario = Scenario::new(
            model.clone(),
            dist.clone(),
            InitialCondition::EndemicLevel { residuals: Default::default() },
            StopRule::extinction(),
        );
        let (bad, _) = run_replicates(&scenario, &RunSettings::new(500, 9), |r| r.check_invariants(Some(25)).err()).unwrap();
        assert!(bad.iter().all(Option::is_none), "{dist}: {:?}", bad.iter().flatten().next());
    }
}

#[test]
fn severity_equals_progeny_in_mean() {
    let model = BirthRateModel::sis(12, 1.7).unwrap();
    for (i, dist) in dists().iter().enumerate() {
        let scenario = Scenario::new(model.clone(), dist.clone(), InitialCondition::SingleIndividual, StopRule::extinction());
        let e = estimate_many(&scenario, &[Quantity::Progeny, Quantity::Severity], &RunSettings::new(20_000, 100 + i as u64)).unwrap();
        let s = bdkit::bd_analytic::stationary_weights(&model, 12).unwrap();
        for est in &e {
            assert!(compare(est, s.mean_progeny.value(), 4.0).unwrap().pass, "{dist}: {est:?}");
        }
    }
}
