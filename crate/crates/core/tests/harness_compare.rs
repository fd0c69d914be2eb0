use ecoflow_core::harness::fixtures::{default_plant, plant_with_dt};
use ecoflow_core::harness::{compare, run_policy, training_samples, EpisodeConfig, EpisodeSummary, Policy};
use ecoflow_core::predictor::{train, EcoPredictorParams, ForecastNoise, Normalization, TrainHyper, WindowSpec};
use ecoflow_core::scenario::{make_scenario, Scenario, ScenarioConfig};

fn short(seed: u64) -> Vec<(String, Scenario)> {
    vec![
        (
            "wet".into(),
            make_scenario(&ScenarioConfig::wet(96, 3600.0, seed)).unwrap(),
        ),
        (
            "drought".into(),
            make_scenario(&ScenarioConfig::drought(96, 3600.0, seed)).unwrap(),
        ),
    ]
}

fn fixed() -> Policy {
    Policy::Fixed {
        q_const: default_plant().q_statutory_floor,
    }
}

#[test]
fn single_cell_equals_run_policy() {
    let scenarios = short(3);
    let cfg = EpisodeConfig::default();
    let plant = default_plant();
    let report = compare(&scenarios[1..], &plant, &[("fixed".into(), fixed())], &cfg).unwrap();
    assert_eq!(report.cells.len(), 1);
    let direct = run_policy(&scenarios[1].1, &plant, &fixed(), &cfg).unwrap();
    assert_eq!(report.cells[0].summary, Some(EpisodeSummary::from(&direct)));
    assert_eq!(report.episodes[0].as_ref(), Some(&direct));
    let agg = &report.aggregates[0];
    assert_eq!(agg.episodes, 1);
    let e = agg.metrics["energy_mwh"];
    assert_eq!(
        (e.mean, e.min, e.max),
        (direct.energy_mwh, direct.energy_mwh, direct.energy_mwh)
    );
}

#[test]
fn policy_order_does_not_change_cells() {
    let scenarios = short(4);
    let cfg = EpisodeConfig::default();
    let plant = default_plant();
    let a = vec![("fixed".to_string(), fixed()), ("oracle".to_string(), Policy::Oracle)];
    let b: Vec<_> = a.iter().rev().cloned().collect();
    let ra = compare(&scenarios, &plant, &a, &cfg).unwrap();
    let rb = compare(&scenarios, &plant, &b, &cfg).unwrap();
    // scenario-major, policies in the order supplied
    let order: Vec<_> = rb
        .cells
        .iter()
        .map(|c| (c.scenario.as_str(), c.policy.as_str()))
        .collect();
    assert_eq!(
        order,
        [
            ("wet", "oracle"),
            ("wet", "fixed"),
            ("drought", "oracle"),
            ("drought", "fixed")
        ]
    );
    for c in &ra.cells {
        assert_eq!(Some(c), rb.cell(&c.scenario, &c.policy));
    }
}

#[test]
fn failed_cells_are_recorded_and_the_rest_complete() {
    let scenarios = short(5);
    let plant = default_plant();
    let impossible = Policy::Fixed { q_const: 1e4 };
    let policies = vec![("fixed".into(), fixed()), ("impossible".into(), impossible)];
    let report = compare(&scenarios, &plant, &policies, &EpisodeConfig::default()).unwrap();
    assert_eq!(report.succeeded(), 2);
    for c in &report.cells {
        assert_eq!(c.summary.is_some(), c.policy == "fixed", "{c:?}");
        if c.policy == "impossible" {
            assert!(c.error.as_deref().unwrap().contains("fixed policy"), "{c:?}");
        }
    }
    assert_eq!(report.aggregates[1].episodes, 0);
    assert!(report.text_table().contains("FAILED"));
}

#[test]
fn empty_sets_are_rejected() {
    let plant = default_plant();
    let cfg = EpisodeConfig::default();
    assert!(compare(&[], &plant, &[("fixed".into(), fixed())], &cfg).is_err());
    assert!(compare(&short(1), &plant, &[], &cfg).is_err());
}

const DAY: f64 = 86_400.0;

#[test]
fn trained_adaptive_stress_lies_between_oracle_and_untrained() {
    let plant = plant_with_dt(DAY);
    let cfg = EpisodeConfig::default();
    let noise = ForecastNoise::default();
    let train_set: Vec<Scenario> = [ScenarioConfig::wet(730, DAY, 11), ScenarioConfig::drought(730, DAY, 12)]
        .iter()
        .map(|c| make_scenario(c).unwrap())
        .collect();
    let window = WindowSpec::default();
    let norm = Normalization::fit(&train_set.iter().collect::<Vec<_>>(), plant.v_max);
    let init = EcoPredictorParams::init(EcoPredictorParams::default_layers(&window), window, norm, 5).unwrap();
    let mut data = Vec::new();
    for (k, s) in train_set.iter().enumerate() {
        data.extend(training_samples(s, &plant, &init, &cfg, &noise, 100 + k as u64).unwrap());
    }
    let trained = train(&init, &data, &TrainHyper::default()).unwrap().params;
    let adaptive = |p: &EcoPredictorParams| Policy::Adaptive {
        params: Box::new(p.clone()),
        noise,
        seed: 7,
    };
    // two dry years at daily steps need more water than flows in, so the
    // held-out set is wet
    let held_out = vec![
        (
            "wet_a".to_string(),
            make_scenario(&ScenarioConfig::wet(730, DAY, 91)).unwrap(),
        ),
        (
            "wet_b".to_string(),
            make_scenario(&ScenarioConfig::wet(730, DAY, 93)).unwrap(),
        ),
    ];
    let policies = vec![
        ("oracle".to_string(), Policy::Oracle),
        ("trained".to_string(), adaptive(&trained)),
        ("untrained".to_string(), adaptive(&init)),
    ];
    let report = compare(&held_out, &plant, &policies, &cfg).unwrap();
    assert_eq!(report.succeeded(), 6, "{}", report.text_table());
    let stress =
        |policy: &str| report.aggregates.iter().find(|a| a.policy == policy).unwrap().metrics["mean_stress"].mean;
    let (o, t, u) = (stress("oracle"), stress("trained"), stress("untrained"));
    assert!(
        o <= t && t <= u,
        "oracle {o}, trained {t}, untrained {u}\n{}",
        report.text_table()
    );
}
