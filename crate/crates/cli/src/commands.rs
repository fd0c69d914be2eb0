//! The four subcommands. Each returns the lines it wants printed.

use std::fs;
use std::path::{Path, PathBuf};

use ecoflow_core::harness::{bootstrap_trajectory, compare, policy_floor, training_samples, HarnessError};
use ecoflow_core::optimizer::{
    build_problem, diagnostics_to_json, schedule_csv, solve, InfeasibilityReport, OptimizerError, ProblemOptions,
};
use ecoflow_core::predictor::{
    load_params, params_to_json, train, EcoPredictorParams, Normalization, PredictorError, TrainHyper,
};
use ecoflow_core::rng::SeededRng;
use ecoflow_core::scenario::{write_scenario, Scenario};
use serde::Serialize;

use crate::config::{derive_seed, RunConfig, ScenarioSource, ScenarioSpec, Stream};
use crate::error::{CliError, CliResult};

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Other(format!("cannot create {}: {e}", dir.display())))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
}

fn stem_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into())
}

/// Scenario files named on the command line, or the configured set.
fn resolve_scenarios(cfg: &RunConfig, paths: &[PathBuf], names: &[String]) -> CliResult<Vec<(String, Scenario)>> {
    if !paths.is_empty() {
        return paths
            .iter()
            .map(|p| {
                if !p.exists() {
                    return Err(CliError::config(format!(
                        "scenario file {} does not exist",
                        p.display()
                    )));
                }
                let spec = ScenarioSpec {
                    name: stem_name(p),
                    source: ScenarioSource::File(p.clone()),
                };
                Ok((spec.name.clone(), spec.load()?))
            })
            .collect();
    }
    cfg.scenarios
        .iter()
        .filter(|s| names.is_empty() || names.contains(&s.name))
        .map(|s| Ok((s.name.clone(), s.load()?)))
        .collect()
}

fn harness_error(e: HarnessError) -> CliError {
    match e {
        HarnessError::Contract(m) => CliError::config(m),
        HarnessError::Predictor { source, .. } => predictor_error(source),
        HarnessError::Solver {
            source: OptimizerError::Infeasible(r),
            ..
        } => CliError::Infeasible(r.to_string()),
        HarnessError::Solver {
            source: OptimizerError::Contract(m),
            ..
        } => CliError::config(m),
        other => CliError::Other(other.to_string()),
    }
}

fn predictor_error(e: PredictorError) -> CliError {
    match e {
        PredictorError::Diverged { epoch } => CliError::Diverged { epoch },
        PredictorError::Io(e) => CliError::Other(e.to_string()),
        other => CliError::config(other),
    }
}

pub fn gen(cfg: &RunConfig, out: Option<&Path>) -> CliResult<Vec<String>> {
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.clone());
    if cfg.scenarios.is_empty() {
        return Err(CliError::config("no scenarios configured"));
    }
    create_dir(&dir)?;
    let mut lines = Vec::new();
    for spec in &cfg.scenarios {
        let scenario = spec.load()?;
        let (json, csv) =
            write_scenario(&scenario, &dir.join(&spec.name)).map_err(|e| CliError::Other(e.to_string()))?;
        lines.push(json.display().to_string());
        lines.push(csv.display().to_string());
    }
    Ok(lines)
}

pub struct TrainArgs<'a> {
    pub scenarios: &'a [PathBuf],
    pub out: Option<&'a Path>,
    /// Start from this parameter file instead of a fresh initialisation.
    pub resume: Option<&'a Path>,
}

/// Fresh parameters for `scenarios` under the configuration's architecture.
pub fn initial_params(cfg: &RunConfig, scenarios: &[&Scenario], v_max: f64) -> CliResult<EcoPredictorParams> {
    let t = &cfg.training;
    let mut layers = vec![t.window.feature_len()];
    layers.extend(&t.hidden);
    layers.push(1);
    EcoPredictorParams::init(
        layers,
        t.window,
        Normalization::fit(scenarios, v_max),
        derive_seed(cfg.seed, Stream::Init),
    )
    .map_err(predictor_error)
}

pub fn loss_history_path(params_path: &Path) -> PathBuf {
    params_path.with_extension("loss.csv")
}

pub fn train_cmd(cfg: &RunConfig, args: TrainArgs<'_>) -> CliResult<Vec<String>> {
    let scenarios = resolve_scenarios(cfg, args.scenarios, &cfg.training.scenarios)?;
    let refs: Vec<&Scenario> = scenarios.iter().map(|(_, s)| s).collect();
    let plant = cfg.plant_for(&refs)?;
    let init = match args.resume {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::config(format!(
                    "parameter file {} does not exist",
                    p.display()
                )));
            }
            load_params(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
        None => initial_params(cfg, &refs, plant.v_max)?,
    };
    let noise_seed = derive_seed(cfg.seed, Stream::TrainingNoise);
    let mut dataset = Vec::new();
    for (i, (name, s)) in scenarios.iter().enumerate() {
        let seed = SeededRng::substream(noise_seed, i as u64).next_u64();
        let samples = training_samples(s, &plant, &init, &cfg.episode, &cfg.training.noise, seed)
            .map_err(|e| CliError::config(format!("scenario `{name}`: {}", harness_error(e))))?;
        dataset.extend(samples);
    }
    let hyper = TrainHyper {
        lr: cfg.training.lr,
        epochs: cfg.training.epochs,
        batch_size: cfg.training.batch_size,
        seed: derive_seed(cfg.seed, Stream::Shuffle),
        loss: cfg.training.loss,
    };
    let outcome = train(&init, &dataset, &hyper).map_err(predictor_error)?;
    let out = args
        .out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.default_params_path());
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write(&out, &params_to_json(&outcome.params))?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in outcome.history.iter().enumerate() {
        csv.push_str(&format!("{e},{l}\n"));
    }
    let hist = loss_history_path(&out);
    write(&hist, &csv)?;
    Ok(vec![
        format!("samples {}", dataset.len()),
        format!("initial loss {}", outcome.initial_loss()),
        format!("final loss {} (epoch {})", outcome.best_loss(), outcome.best_epoch),
        out.display().to_string(),
        hist.display().to_string(),
    ])
}

pub struct SolveArgs<'a> {
    /// A scenario file or the name of a configured scenario.
    pub scenario: Option<&'a str>,
    pub policy: Option<&'a str>,
    pub params: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

#[derive(Serialize)]
struct InfeasibleDiagnostics<'a> {
    converged: bool,
    infeasible: &'a InfeasibilityReport,
}

/// Printed lines, plus the error behind a nonzero exit when the command
/// still wrote its outputs.
pub type Partial = (Vec<String>, Option<CliError>);

pub fn solve_cmd(cfg: &RunConfig, args: SolveArgs<'_>) -> CliResult<Partial> {
    let (name, scenario) = match args.scenario {
        Some(s) if Path::new(s).is_file() => {
            let p = PathBuf::from(s);
            resolve_scenarios(cfg, &[p], &[])?.remove(0)
        }
        Some(s) => {
            let spec = cfg.scenarios.iter().find(|c| c.name == s).ok_or_else(|| {
                CliError::config(format!("`{s}` is neither a scenario file nor a configured scenario"))
            })?;
            (spec.name.clone(), spec.load()?)
        }
        None => {
            let spec = cfg
                .scenarios
                .first()
                .ok_or_else(|| CliError::config("no scenarios configured"))?;
            (spec.name.clone(), spec.load()?)
        }
    };
    let entry = match args.policy {
        Some(p) => cfg.policy(p)?,
        None => cfg
            .policies
            .first()
            .ok_or_else(|| CliError::config("no policies configured"))?,
    };
    let plant = cfg.plant_for(&[&scenario])?;
    let policy = cfg.build_policy(entry, &plant, args.params)?;
    let ep = &cfg.episode;
    let v0 = ep.initial_volume(&plant);
    let boot = bootstrap_trajectory(&scenario, &plant, ep.qmin_irr, v0).map_err(CliError::config)?;
    let floor = policy_floor(&policy, &scenario, &plant, &boot).map_err(harness_error)?;
    let options = ProblemOptions {
        demand_mode: ep.demand_mode,
        include_solar: ep.include_solar,
        initial_volume: v0,
        level_guard: policy.uses_level_guard(),
    };
    let problem = build_problem(&scenario, &plant, &floor, ep.qmin_irr, options).map_err(|e| match e {
        OptimizerError::Contract(m) => CliError::config(m),
        other => CliError::Other(other.to_string()),
    })?;
    let dir = args.out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.clone());
    create_dir(&dir)?;
    let stem = format!("{name}_{}", entry.name);
    let diag_path = dir.join(format!("{stem}_diagnostics.json"));
    match solve(&problem, &ep.solver) {
        Ok((schedule, diag)) => {
            let sched_path = dir.join(format!("{stem}_schedule.csv"));
            write(&sched_path, &schedule_csv(&schedule))?;
            write(&diag_path, &diagnostics_to_json(&diag))?;
            let mut lines = vec![
                format!("{} policy on {name}: objective {}", policy.kind(), diag.objective),
                format!(
                    "max violation {:e}, stationarity {:e}, converged {}",
                    diag.max_violation, diag.stationarity, diag.converged
                ),
                sched_path.display().to_string(),
                diag_path.display().to_string(),
            ];
            let err = (!diag.converged).then(|| {
                lines.push("not converged-feasible".into());
                CliError::Infeasible(format!(
                    "not converged (max violation {:e}, stationarity {:e})",
                    diag.max_violation, diag.stationarity
                ))
            });
            Ok((lines, err))
        }
        Err(OptimizerError::Infeasible(r)) => {
            let mut json = serde_json::to_string_pretty(&InfeasibleDiagnostics {
                converged: false,
                infeasible: &r,
            })
            .expect("report serialises");
            json.push('\n');
            write(&diag_path, &json)?;
            Ok((
                vec![diag_path.display().to_string()],
                Some(CliError::Infeasible(r.to_string())),
            ))
        }
        Err(OptimizerError::Contract(m)) => Err(CliError::config(m)),
        Err(e) => Err(CliError::Other(e.to_string())),
    }
}

pub struct CompareArgs<'a> {
    pub scenarios: &'a [PathBuf],
    pub params: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

pub fn compare_cmd(cfg: &RunConfig, args: CompareArgs<'_>) -> CliResult<Partial> {
    let scenarios = resolve_scenarios(cfg, args.scenarios, &[])?;
    if scenarios.is_empty() {
        return Err(CliError::config("compare needs at least one scenario"));
    }
    if cfg.policies.len() < 2 {
        return Err(CliError::config(format!(
            "compare needs at least two policies, {} configured",
            cfg.policies.len()
        )));
    }
    let refs: Vec<&Scenario> = scenarios.iter().map(|(_, s)| s).collect();
    let plant = cfg.plant_for(&refs)?;
    let policies = cfg
        .policies
        .iter()
        .map(|p| Ok((p.name.clone(), cfg.build_policy(p, &plant, args.params)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let report = compare(&scenarios, &plant, &policies, &cfg.episode).map_err(harness_error)?;
    let dir = args.out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.clone());
    let written = report.write(&dir).map_err(|e| CliError::Other(e.to_string()))?;
    let mut lines = vec![report.text_table()];
    lines.extend(written.iter().map(|p| p.display().to_string()));
    let err = (report.succeeded() == 0).then(|| {
        let first = report.cells.iter().find_map(|c| c.error.clone()).unwrap_or_default();
        CliError::AllCellsFailed(first)
    });
    Ok((lines, err))
}
