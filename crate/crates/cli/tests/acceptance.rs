//! Acceptance checks, one PASS/FAIL line per criterion. Criteria 5 to 7
//! reuse the report of the end-to-end run (criterion 11), whose default
//! configuration generates exactly the shipped wet and drought fixtures.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use ecoflow_cli::config::RunConfig;
use ecoflow_core::harness::fixtures::{default_plant, drought_scenario, plant_with_dt, wet_scenario};
use ecoflow_core::harness::{
    run_policy, training_samples, under_provision_rate, ComparisonReport, EpisodeConfig, Policy,
};
use ecoflow_core::hydro::{step_reservoir, ControlVector, Forcing, PlantSpec, ReservoirState};
use ecoflow_core::optimizer::{
    brute_force_solve, build_problem, check_solution, solve, Problem, ProblemOptions, SolverConfig,
};
use ecoflow_core::predictor::{
    train, BoundPair, EcoPredictorParams, ForecastNoise, Normalization, Sample, StressLoss, TrainHyper, WindowSpec,
};
use ecoflow_core::rng::SeededRng;
use ecoflow_core::scenario::{make_scenario, read_scenario, Scenario, ScenarioConfig};
use tempfile::TempDir;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn guarded(f: impl FnOnce() -> Verdict) -> Verdict {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(v) => v,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        }
    }
}

// ---------------------------------------------------------------- 1, 2

fn random_net(rng: &mut SeededRng, seed: u64) -> EcoPredictorParams {
    let window = loop {
        let w = WindowSpec {
            past_days: rng.below(3),
            forecast_days: rng.below(3),
        };
        if w.feature_len() >= 1 {
            break w;
        }
    };
    let layers = vec![window.feature_len(), 1 + rng.below(8), 1];
    let mut p = EcoPredictorParams::init(layers, window, Normalization::default(), seed).unwrap();
    let mut flat = p.flatten();
    for x in flat.iter_mut() {
        *x += rng.uniform_range(-0.3, 0.3);
    }
    p.set_flat(&flat);
    p
}

fn hard_bound() -> Verdict {
    let start = Instant::now();
    let mut rng = SeededRng::new(1);
    let mut violations = 0usize;
    for draw in 0..100_000u64 {
        let mut p = random_net(&mut rng, draw);
        // saturate the sigmoid on some draws
        if draw % 7 == 0 {
            let flat: Vec<f64> = p.flatten().iter().map(|w| w * 1e3).collect();
            p.set_flat(&flat);
        }
        let lo = rng.uniform_range(0.0, 100.0);
        let hi = if rng.below(10) == 0 {
            lo
        } else {
            lo + rng.uniform_range(0.0, 100.0)
        };
        let scale = [1.0, 1e3, 1e6][rng.below(3)];
        let x: Vec<f64> = (0..p.input_dim())
            .map(|_| scale * rng.uniform_range(-1.0, 1.0))
            .collect();
        let q = p.predict(&x, BoundPair::new(lo, hi).unwrap()).unwrap();
        violations += usize::from(!(q >= lo && q <= hi));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        violations == 0 && secs < 10.0,
        format!("{violations} violations in 100000 draws, {secs:.2} s"),
    )
}

fn gradient_check() -> Verdict {
    let start = Instant::now();
    let loss = StressLoss::default();
    let eps = 1e-5;
    let mut rng = SeededRng::new(2);
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for k in 0..20 {
        let p = random_net(&mut rng, 1000 + k);
        let batch: Vec<Sample> = (0..8)
            .map(|_| {
                let lo = rng.uniform_range(0.0, 5.0);
                let hi = lo + rng.uniform_range(0.5, 10.0);
                Sample {
                    features: (0..p.input_dim()).map(|_| rng.uniform_range(-2.0, 2.0)).collect(),
                    bounds: BoundPair::new(lo, hi).unwrap(),
                    need: rng.uniform_range(lo - 1.0, hi + 1.0),
                }
            })
            .collect();
        let analytic = p.grad(&batch, &loss, 1.0).unwrap().flatten();
        let base = p.flatten();
        let mut probe = p.clone();
        for (i, a) in analytic.iter().enumerate() {
            let mut x = base.clone();
            x[i] = base[i] + eps;
            probe.set_flat(&x);
            let up = probe.mean_loss(&batch, &loss, 1.0).unwrap();
            x[i] = base[i] - eps;
            probe.set_flat(&x);
            let down = probe.mean_loss(&batch, &loss, 1.0).unwrap();
            let fd = (up - down) / (2.0 * eps);
            let scale = a.abs().max(fd.abs());
            let err = (a - fd).abs();
            // components that are zero to rounding have no relative error
            if scale > 1e-8 {
                worst = worst.max(err / scale);
            }
            failures += usize::from(err > 1e-4 * scale + 1e-10);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failures == 0 && secs < 30.0,
        format!("{failures} mismatches, worst relative error {worst:.2e}, {secs:.2} s"),
    )
}

// ---------------------------------------------------------------- 3, 4

/// Hourly toy reservoir of 1e4..1e5 m³ with random forcing and floors.
/// Demand is soft: a hard demand row can leave the coarse grid with no
/// feasible point at all.
fn random_problem(seed: u64, horizon: usize) -> Problem {
    let mut rng = SeededRng::new(seed);
    let plant = PlantSpec {
        v_min: 1e4,
        v_max: 1e5,
        v_ref_recommended: 6e4,
        head_a: 10.0,
        head_b: 1e-4,
        eta: 0.9,
        q_turb_max: 5.0,
        q_eco_max: 5.0,
        q_irr_max: 0.0,
        q_statutory_floor: 1.0,
        q_eco_cap: 4.0,
        q_eco_safety_floor: 0.5,
        level_gain: 1.0,
        solar_capacity: 0.3,
        k_evap: rng.uniform_range(0.0, 1e-7),
        dt: 3600.0,
    };
    let forcing: Vec<Forcing> = (0..horizon)
        .map(|_| Forcing {
            inflow: rng.uniform_range(0.5, 6.0),
            temperature: rng.uniform_range(-5.0, 25.0),
            precipitation: 1.0,
            demand: rng.uniform_range(0.0, 0.6),
            price: rng.uniform_range(20.0, 100.0),
            solar_cf: rng.uniform(),
        })
        .collect();
    let scenario = Scenario {
        config: ScenarioConfig::wet(horizon, 3600.0, seed),
        q_need: vec![1.0; horizon],
        forcing,
    };
    let qmin: Vec<f64> = (0..horizon).map(|_| rng.uniform_range(0.0, 3.0)).collect();
    let mut opts = ProblemOptions::new(rng.uniform_range(2e4, 9e4));
    opts.include_solar = true;
    build_problem(&scenario, &plant, &qmin, 0.0, opts).unwrap()
}

fn grid_optimum(p: &Problem) -> f64 {
    let s = brute_force_solve(p, 7).unwrap();
    check_solution(p, &s.theta()).unwrap().objective
}

fn solver_vs_oracle() -> Verdict {
    let start = Instant::now();
    let mut bad = Vec::new();
    let mut worst_gap = f64::NEG_INFINITY;
    let mut worst_violation = 0.0f64;
    for k in 0..20u64 {
        let p = random_problem(300 + k, 2 + (k % 2) as usize);
        let oracle = grid_optimum(&p);
        let (s, _) = solve(&p, &SolverConfig::default()).unwrap();
        let report = check_solution(&p, &s.theta()).unwrap();
        let gap = (oracle - report.objective) / oracle.abs().max(1e-12);
        worst_gap = worst_gap.max(gap);
        worst_violation = worst_violation.max(report.max_violation());
        if gap > 0.01 || report.max_violation() > 1e-6 {
            bad.push(k);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        bad.is_empty() && secs < 120.0,
        format!(
            "20 instances, worst shortfall vs grid {:.3}%, worst violation {worst_violation:.1e}, failing {bad:?}, {secs:.1} s",
            100.0 * worst_gap
        ),
    )
}

fn floor_monotonicity() -> Verdict {
    let mut rng = SeededRng::new(4);
    let mut counterexamples = 0usize;
    for k in 0..10u64 {
        let high = random_problem(400 + k, 1 + (k % 3) as usize);
        let mut low = high.clone();
        for q in low.qmin_river.iter_mut() {
            *q *= rng.uniform();
        }
        let (a, b) = (grid_optimum(&high), grid_optimum(&low));
        counterexamples += usize::from(b < a - 1e-9 * a.abs());
    }
    verdict(
        counterexamples == 0,
        format!("{counterexamples} counterexamples in 10 instances"),
    )
}

// ---------------------------------------------------------------- 5, 6, 7

fn summary<'a>(r: &'a ComparisonReport, scenario: &str, policy: &str) -> &'a ecoflow_core::harness::EpisodeSummary {
    let cell = r
        .cell(scenario, policy)
        .unwrap_or_else(|| panic!("no {scenario}/{policy} cell"));
    cell.summary
        .as_ref()
        .unwrap_or_else(|| panic!("{scenario}/{policy} failed: {:?}", cell.error))
}

fn wet_claim(e2e: &E2e) -> Verdict {
    let report = e2e.report.as_ref().expect("end-to-end report");
    let wet = read_scenario(&e2e.dir.join("out/wet.json")).unwrap();
    let plant = default_plant();
    let fixture = wet == wet_scenario().unwrap() && wet.q_need.iter().all(|q| *q < plant.q_statutory_floor);
    let (fixed, oracle) = (summary(report, "wet", "fixed"), summary(report, "wet", "oracle"));
    let gain = oracle.energy_mwh / fixed.energy_mwh - 1.0;
    verdict(
        fixture && gain >= 0.01,
        format!(
            "fixed {:.1} MWh, oracle {:.1} MWh, gain {:.2}%",
            fixed.energy_mwh,
            oracle.energy_mwh,
            100.0 * gain
        ),
    )
}

fn drought_claim(e2e: &E2e) -> Verdict {
    let report = e2e.report.as_ref().expect("end-to-end report");
    let drought = read_scenario(&e2e.dir.join("out/drought.json")).unwrap();
    let floor = default_plant().q_statutory_floor;
    let above = drought.q_need.iter().filter(|q| **q > floor).count() as f64 / drought.len() as f64;
    let fixture = drought == drought_scenario().unwrap() && above >= 0.3;
    let (fixed, oracle) = (
        summary(report, "drought", "fixed"),
        summary(report, "drought", "oracle"),
    );
    verdict(
        fixture && fixed.stress_events > 0 && oracle.stress_events == 0 && oracle.converged,
        format!(
            "need above floor {:.0}% of steps; stress events fixed {}, oracle {}",
            100.0 * above,
            fixed.stress_events,
            oracle.stress_events
        ),
    )
}

fn solar_supplement(e2e: &E2e) -> Verdict {
    let report = e2e.report.as_ref().expect("end-to-end report");
    let without = summary(report, "drought", "oracle");
    let cfg = RunConfig::load(None).unwrap();
    let drought = drought_scenario().unwrap();
    let plant = cfg.plant_for(&[&drought]).unwrap();
    let episode = EpisodeConfig {
        include_solar: true,
        ..cfg.episode
    };
    let with = run_policy(&drought, &plant, &Policy::Oracle, &episode).unwrap();
    verdict(
        plant.solar_capacity > 0.0 && with.demand_shortfall_mwh <= without.demand_shortfall_mwh,
        format!(
            "oracle shortfall {:.1} MWh without solar, {:.1} MWh with {} MW solar",
            without.demand_shortfall_mwh, with.demand_shortfall_mwh, plant.solar_capacity
        ),
    )
}

// ---------------------------------------------------------------- 8

fn training_efficacy() -> Verdict {
    const DAY: f64 = 86_400.0;
    let plant = plant_with_dt(DAY);
    let cfg = EpisodeConfig::default();
    let noise = ForecastNoise::default();
    let scenarios = |seeds: [u64; 2]| -> Vec<Scenario> {
        [
            ScenarioConfig::wet(730, DAY, seeds[0]),
            ScenarioConfig::drought(730, DAY, seeds[1]),
        ]
        .iter()
        .map(|c| make_scenario(c).unwrap())
        .collect()
    };
    let (train_set, held_out) = (scenarios([11, 12]), scenarios([91, 92]));
    let window = WindowSpec::default();
    let norm = Normalization::fit(&train_set.iter().collect::<Vec<_>>(), plant.v_max);
    let init = EcoPredictorParams::init(EcoPredictorParams::default_layers(&window), window, norm, 5).unwrap();
    let mut data = Vec::new();
    for (k, s) in train_set.iter().enumerate() {
        data.extend(training_samples(s, &plant, &init, &cfg, &noise, 100 + k as u64).unwrap());
    }
    let start = Instant::now();
    let out = train(&init, &data, &TrainHyper::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let rate = |p: &EcoPredictorParams| {
        let r: Vec<f64> = held_out
            .iter()
            .enumerate()
            .map(|(k, s)| under_provision_rate(s, &plant, p, &cfg, &noise, 200 + k as u64).unwrap())
            .collect();
        r.iter().sum::<f64>() / r.len() as f64
    };
    let (before, after) = (rate(&init), rate(&out.params));
    verdict(
        after <= 0.5 * before && secs < 60.0,
        format!(
            "held-out under-provision {:.1}% untrained, {:.1}% trained; training {secs:.1} s",
            100.0 * before,
            100.0 * after
        ),
    )
}

// ---------------------------------------------------------------- 9

fn mass_balance() -> Verdict {
    let mut rng = SeededRng::new(9);
    let mut plant = default_plant();
    plant.k_evap = 1e-9;
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let v = rng.uniform_range(plant.v_min, plant.v_max);
        let u = ControlVector {
            q_turb: rng.uniform_range(0.0, plant.q_turb_max),
            q_eco: rng.uniform_range(0.0, plant.q_eco_max),
            q_irr: rng.uniform_range(0.0, plant.q_irr_max),
            q_spill: rng.uniform_range(0.0, 200.0),
        };
        let f = Forcing {
            inflow: rng.uniform_range(0.0, 1000.0),
            temperature: rng.uniform_range(-10.0, 35.0),
            precipitation: 0.0,
            demand: 0.0,
            price: 1.0,
            solar_cf: 0.0,
        };
        let out = step_reservoir(ReservoirState { volume: v, t: 0 }, u, &f, &plant).unwrap();
        let r = &out.realized;
        let outflow = r.q_turb + r.q_eco + r.q_irr + r.q_spill + out.evaporation;
        let residual = out.next.volume - v - plant.dt * (f.inflow - outflow);
        let scale = v.max(out.next.volume).max(plant.dt * f.inflow).max(plant.dt * outflow);
        worst = worst.max(residual.abs() / scale);
    }
    verdict(
        worst <= 1e-9,
        format!("10000 steps, worst relative residual {worst:.2e}"),
    )
}

// ---------------------------------------------------------------- 10

fn determinism() -> Verdict {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let cfg = short_config(dir);
    let cfg = cfg.to_str().unwrap();
    let run = |args: &[&str]| {
        let o = ecoflow(dir, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", stderr(&o));
    };
    let mut same = Vec::new();
    for tag in ["1", "2"] {
        run(&["gen", "--config", cfg, "--out", &format!("gen{tag}")]);
        run(&["train", "--config", cfg, "--out", &format!("train{tag}/p.json")]);
        run(&[
            "solve",
            "--config",
            cfg,
            "--policy",
            "adaptive",
            "--params",
            "train1/p.json",
            "--seed",
            "7",
            "--out",
            &format!("solve{tag}"),
        ]);
        run(&[
            "compare",
            "--config",
            cfg,
            "--params",
            "train1/p.json",
            "--out",
            &format!("compare{tag}"),
        ]);
    }
    for cmd in ["gen", "train", "solve", "compare"] {
        let (a, b) = (
            snapshot(&dir.join(format!("{cmd}1"))),
            snapshot(&dir.join(format!("{cmd}2"))),
        );
        same.push((cmd, !a.is_empty() && a == b, a.len()));
    }
    let pass = same.iter().all(|(_, s, _)| *s);
    let detail = same
        .iter()
        .map(|(c, s, n)| format!("{c} {} ({n} files)", if *s { "identical" } else { "DIFFERS" }))
        .collect::<Vec<_>>()
        .join(", ");
    verdict(pass, detail)
}

// ---------------------------------------------------------------- 11

struct E2e {
    _tmp: TempDir,
    dir: PathBuf,
    report: Option<ComparisonReport>,
    verdict: Verdict,
}

fn end_to_end() -> E2e {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().to_path_buf();
    let start = Instant::now();
    let scenarios = ["--scenario", "out/wet.json", "--scenario", "out/drought.json"];
    let steps: [Vec<&str>; 3] = [
        vec!["gen"],
        [&["train"][..], &scenarios[..]].concat(),
        [&["compare"][..], &scenarios[..]].concat(),
    ];
    for args in &steps {
        let o = ecoflow(&dir, args);
        if code(&o) != 0 {
            let v = verdict(
                false,
                format!("`{}` exited {}: {}", args.join(" "), code(&o), stderr(&o)),
            );
            return E2e {
                _tmp: tmp,
                dir,
                report: None,
                verdict: v,
            };
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let report = ComparisonReport::from_json(&String::from_utf8(read(dir.join("out/report.json"))).unwrap()).unwrap();
    let cells = report.cells.len();
    let ok = report.succeeded();
    let horizon_ok = report
        .cells
        .iter()
        .filter_map(|c| c.summary.as_ref())
        .all(|s| s.horizon == 2160);
    let v = verdict(
        cells == 6 && ok == 6 && horizon_ok && secs < 600.0,
        format!("gen, train, compare: {ok}/{cells} cells succeeded at T = 2160 hourly in {secs:.0} s"),
    );
    E2e {
        _tmp: tmp,
        dir,
        report: Some(report),
        verdict: v,
    }
}

fn main() -> ExitCode {
    let e2e = end_to_end();
    let mut results: Vec<(u8, &str, Verdict)> = vec![
        (1, "hard-bound guarantee", guarded(hard_bound)),
        (2, "gradient correctness", guarded(gradient_check)),
        (3, "solver vs grid oracle", guarded(solver_vs_oracle)),
        (4, "feasible-set monotonicity", guarded(floor_monotonicity)),
        (5, "wet scenario energy", guarded(|| wet_claim(&e2e))),
        (6, "drought scenario stress", guarded(|| drought_claim(&e2e))),
        (7, "solar supplement", guarded(|| solar_supplement(&e2e))),
        (8, "training efficacy", guarded(training_efficacy)),
        (9, "mass balance", guarded(mass_balance)),
        (10, "determinism", guarded(determinism)),
    ];
    results.push((11, "end-to-end desk run", e2e.verdict));
    let mut failed = 0;
    for (id, name, v) in &results {
        println!(
            "criterion {id:>2} {}: {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
