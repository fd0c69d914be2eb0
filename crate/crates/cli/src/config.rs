//! Run configuration: one TOML file per experiment.
//!
//! Relative paths are resolved against the directory holding the file (the
//! working directory for the built-in default). Every random stream is
//! derived from the top-level `seed`; sections that would otherwise carry
//! their own seed reject one.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use ecoflow_core::harness::fixtures::default_plant;
use ecoflow_core::harness::{EpisodeConfig, Policy};
use ecoflow_core::hydro::PlantSpec;
use ecoflow_core::predictor::{load_params, ForecastNoise, StressLoss, WindowSpec};
use ecoflow_core::rng::SeededRng;
use ecoflow_core::scenario::{make_scenario, read_scenario, EcoNeedModel, Scenario, ScenarioConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const CONFIG_FORMAT_VERSION: u32 = 1;

/// The configuration used when `--config` is omitted.
pub const DEFAULT_CONFIG: &str = include_str!("../configs/default.toml");

/// Independent random streams split off the global seed.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Solver = 1,
    Init = 2,
    Shuffle = 3,
    TrainingNoise = 4,
    PolicyNoise = 5,
}

pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    SeededRng::substream(seed, stream as u64).next_u64()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    format_version: u32,
    seed: u64,
    #[serde(default = "default_out_dir")]
    out_dir: PathBuf,
    plant: Option<PlantSpec>,
    #[serde(default)]
    scenarios: Vec<ScenarioEntry>,
    #[serde(default)]
    policies: Vec<PolicyEntry>,
    #[serde(default)]
    episode: EpisodeConfig,
    #[serde(default)]
    training: TrainingSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioEntry {
    pub name: String,
    /// Existing scenario file (either half of the JSON/CSV pair).
    pub path: Option<PathBuf>,
    pub generator: Option<GeneratorConfig>,
    /// Added to the global seed to give the generator seed.
    #[serde(default)]
    pub seed_offset: u64,
}

/// Scenario generator settings; the seed comes from the run.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub horizon: usize,
    pub dt: f64,
    pub mean_temp: f64,
    pub season_amplitude_temp: f64,
    pub temp_noise_sd: f64,
    pub precip_mean: f64,
    pub precip_noise_sd: f64,
    pub ar1_rho: f64,
    pub drought_factor: f64,
    pub maf: f64,
    pub catchment_k: f64,
    pub demand_base: f64,
    pub price_base: f64,
    #[serde(default)]
    pub eco: EcoNeedModel,
}

impl GeneratorConfig {
    pub fn with_seed(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            horizon: self.horizon,
            seed,
            dt: self.dt,
            mean_temp: self.mean_temp,
            season_amplitude_temp: self.season_amplitude_temp,
            temp_noise_sd: self.temp_noise_sd,
            precip_mean: self.precip_mean,
            precip_noise_sd: self.precip_noise_sd,
            ar1_rho: self.ar1_rho,
            drought_factor: self.drought_factor,
            maf: self.maf,
            catchment_k: self.catchment_k,
            demand_base: self.demand_base,
            price_base: self.price_base,
            eco: self.eco.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Fixed,
    Adaptive,
    Oracle,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub name: String,
    pub kind: PolicyKind,
    /// Fixed floor (m³/s); defaults to the plant's statutory floor.
    pub q_const: Option<f64>,
    /// Adaptive parameter file; defaults to `<out_dir>/predictor.json`.
    pub params: Option<PathBuf>,
    pub noise: Option<ForecastNoise>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    /// Names from `scenarios`; empty means all of them.
    pub scenarios: Vec<String>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub loss: StressLoss,
    pub window: WindowSpec,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub noise: ForecastNoise,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let h = ecoflow_core::predictor::TrainHyper::default();
        Self {
            scenarios: Vec::new(),
            epochs: h.epochs,
            lr: h.lr,
            batch_size: h.batch_size,
            loss: h.loss,
            window: WindowSpec::default(),
            hidden: vec![16, 8],
            noise: ForecastNoise::default(),
        }
    }
}

/// Where a scenario comes from once paths are resolved.
#[derive(Debug, Clone)]
pub enum ScenarioSource {
    File(PathBuf),
    Generated(ScenarioConfig),
}

#[derive(Debug, Clone)]
pub struct ScenarioSpec {
    pub name: String,
    pub source: ScenarioSource,
}

impl ScenarioSpec {
    pub fn load(&self) -> CliResult<Scenario> {
        match &self.source {
            ScenarioSource::File(p) => {
                read_scenario(p).map_err(|e| CliError::config(format!("scenario `{}`: {e}", self.name)))
            }
            ScenarioSource::Generated(cfg) => {
                make_scenario(cfg).map_err(|e| CliError::config(format!("scenario `{}`: {e}", self.name)))
            }
        }
    }
}

/// A validated configuration with every path resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// `None` selects the reference plant at the scenarios' step length.
    pub plant: Option<PlantSpec>,
    pub scenarios: Vec<ScenarioSpec>,
    pub policies: Vec<PolicyEntry>,
    pub episode: EpisodeConfig,
    pub training: TrainingSection,
}

fn toml_error(origin: &str, e: toml::de::Error) -> CliError {
    CliError::config(format!("{origin}: {e}"))
}

/// Keys that must not appear because the run derives them.
fn reject_seeds(value: &toml::Value, origin: &str) -> CliResult<()> {
    let table = match value.as_table() {
        Some(t) => t,
        None => return Ok(()),
    };
    if let Some(solver) = table.get("episode").and_then(|e| e.get("solver")) {
        if solver.get("seed").is_some() {
            return Err(CliError::config(format!(
                "{origin}: field `episode.solver.seed` is not allowed; the solver seed derives from the top-level `seed`"
            )));
        }
    }
    if let Some(list) = table.get("scenarios").and_then(|s| s.as_array()) {
        for (i, s) in list.iter().enumerate() {
            if s.get("generator").and_then(|g| g.get("seed")).is_some() {
                return Err(CliError::config(format!(
                    "{origin}: field `scenarios[{i}].generator.seed` is not allowed; use `seed_offset`"
                )));
            }
        }
    }
    Ok(())
}

impl RunConfig {
    /// Reads `path`, or the built-in default when `None`.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Self::parse(&text, &p.display().to_string(), &base)
            }
            None => Self::parse(DEFAULT_CONFIG, "built-in default config", Path::new("")),
        }
    }

    pub fn parse(text: &str, origin: &str, base: &Path) -> CliResult<Self> {
        let value: toml::Value = toml::from_str(text).map_err(|e| toml_error(origin, e))?;
        reject_seeds(&value, origin)?;
        let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(origin, e))?;
        Self::validate(raw, origin, base)
    }

    fn validate(raw: RawConfig, origin: &str, base: &Path) -> CliResult<Self> {
        let err = |m: String| CliError::config(format!("{origin}: {m}"));
        if raw.format_version != CONFIG_FORMAT_VERSION {
            return Err(err(format!(
                "unsupported format_version {}, expected {CONFIG_FORMAT_VERSION}",
                raw.format_version
            )));
        }
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let mut names = BTreeSet::new();
        let mut scenarios = Vec::new();
        for (i, s) in raw.scenarios.iter().enumerate() {
            if !names.insert(s.name.clone()) {
                return Err(err(format!("scenarios[{i}]: duplicate name `{}`", s.name)));
            }
            let source = match (&s.path, &s.generator) {
                (Some(p), None) => {
                    let p = resolve(p);
                    if !p.exists() {
                        return Err(err(format!("scenarios[{i}].path: {} does not exist", p.display())));
                    }
                    ScenarioSource::File(p)
                }
                (None, Some(g)) => {
                    let cfg = g.with_seed(raw.seed.wrapping_add(s.seed_offset));
                    cfg.validate()
                        .map_err(|e| err(format!("scenarios[{i}].generator: {e}")))?;
                    ScenarioSource::Generated(cfg)
                }
                _ => {
                    return Err(err(format!(
                        "scenarios[{i}]: give exactly one of `path` and `generator`"
                    )))
                }
            };
            scenarios.push(ScenarioSpec {
                name: s.name.clone(),
                source,
            });
        }
        let mut policy_names = BTreeSet::new();
        let mut policies = Vec::new();
        for (i, p) in raw.policies.iter().enumerate() {
            if !policy_names.insert(p.name.clone()) {
                return Err(err(format!("policies[{i}]: duplicate name `{}`", p.name)));
            }
            let fixed_only = p.q_const.is_some() && p.kind != PolicyKind::Fixed;
            let adaptive_only = (p.params.is_some() || p.noise.is_some()) && p.kind != PolicyKind::Adaptive;
            if fixed_only || adaptive_only {
                return Err(err(format!("policies[{i}]: field not valid for a {:?} policy", p.kind)));
            }
            let mut p = p.clone();
            p.params = p.params.as_deref().map(resolve);
            policies.push(p);
        }
        for n in &raw.training.scenarios {
            if !names.contains(n) {
                return Err(err(format!("training.scenarios: unknown scenario `{n}`")));
            }
        }
        let mut episode = raw.episode;
        episode.solver.seed = derive_seed(raw.seed, Stream::Solver);
        Ok(Self {
            seed: raw.seed,
            out_dir: resolve(&raw.out_dir),
            plant: raw.plant,
            scenarios,
            policies,
            episode,
            training: raw.training,
        })
    }

    /// Replaces the global seed, re-deriving every stream from it.
    pub fn reseed(&mut self, seed: u64) {
        let old = self.seed;
        self.seed = seed;
        self.episode.solver.seed = derive_seed(seed, Stream::Solver);
        for s in &mut self.scenarios {
            if let ScenarioSource::Generated(cfg) = &mut s.source {
                cfg.seed = seed.wrapping_add(cfg.seed.wrapping_sub(old));
            }
        }
    }

    /// The plant, checked against the step length of `scenarios`.
    pub fn plant_for(&self, scenarios: &[&Scenario]) -> CliResult<PlantSpec> {
        let dt = match scenarios.first() {
            Some(s) => s.dt(),
            None => return Err(CliError::config("no scenarios given")),
        };
        if let Some(s) = scenarios.iter().find(|s| s.dt() != dt) {
            return Err(CliError::config(format!(
                "scenarios mix step lengths {dt} s and {} s",
                s.dt()
            )));
        }
        let plant = match &self.plant {
            Some(p) => p.clone(),
            None => PlantSpec { dt, ..default_plant() },
        };
        if plant.dt != dt {
            return Err(CliError::config(format!(
                "plant.dt = {} s but the scenarios use {dt} s",
                plant.dt
            )));
        }
        plant.validate().map_err(|e| CliError::config(format!("plant: {e}")))?;
        Ok(plant)
    }

    pub fn default_params_path(&self) -> PathBuf {
        self.out_dir.join("predictor.json")
    }

    pub fn policy(&self, name: &str) -> CliResult<&PolicyEntry> {
        self.policies
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| CliError::config(format!("unknown policy `{name}`")))
    }

    /// Builds the harness policy; `params_override` replaces the adaptive
    /// parameter file.
    pub fn build_policy(
        &self,
        entry: &PolicyEntry,
        plant: &PlantSpec,
        params_override: Option<&Path>,
    ) -> CliResult<Policy> {
        Ok(match entry.kind {
            PolicyKind::Fixed => Policy::Fixed {
                q_const: entry.q_const.unwrap_or(plant.q_statutory_floor),
            },
            PolicyKind::Oracle => Policy::Oracle,
            PolicyKind::Adaptive => {
                let path = params_override
                    .map(Path::to_path_buf)
                    .or_else(|| entry.params.clone())
                    .unwrap_or_else(|| self.default_params_path());
                if !path.exists() {
                    return Err(CliError::config(format!(
                        "policy `{}`: parameter file {} does not exist (run `train` first)",
                        entry.name,
                        path.display()
                    )));
                }
                let params = load_params(&path)
                    .map_err(|e| CliError::config(format!("policy `{}`: {}: {e}", entry.name, path.display())))?;
                Policy::Adaptive {
                    params: Box::new(params),
                    noise: entry.noise.unwrap_or_default(),
                    seed: derive_seed(self.seed, Stream::PolicyNoise),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let c = RunConfig::load(None).unwrap();
        assert!(c.scenarios.len() >= 2 && c.policies.len() >= 2);
    }

    #[test]
    fn default_scenarios_are_the_shipped_fixtures() {
        use ecoflow_core::harness::fixtures::{drought_config, wet_config, DEFAULT_SEED};
        let c = RunConfig::load(None).unwrap();
        let cfg = |i: usize| match &c.scenarios[i].source {
            ScenarioSource::Generated(g) => g.clone(),
            other => panic!("{other:?}"),
        };
        assert_eq!(cfg(0), wet_config(DEFAULT_SEED));
        assert_eq!(cfg(1), drought_config(DEFAULT_SEED));
    }

    #[test]
    fn missing_field_is_named_with_its_line() {
        let text = DEFAULT_CONFIG.replacen("maf = 100.0\n", "", 1);
        let e = RunConfig::parse(&text, "t.toml", Path::new(""))
            .unwrap_err()
            .to_string();
        assert!(e.contains("maf") && e.contains("line"), "{e}");
    }

    #[test]
    fn derived_seeds_are_rejected() {
        let text = DEFAULT_CONFIG.replacen("[episode.solver]\n", "[episode.solver]\nseed = 3\n", 1);
        let e = RunConfig::parse(&text, "t.toml", Path::new(""))
            .unwrap_err()
            .to_string();
        assert!(e.contains("episode.solver.seed"), "{e}");
    }

    #[test]
    fn missing_seed_is_an_error() {
        let text = DEFAULT_CONFIG.replacen("seed = 2024\n", "", 1);
        let e = RunConfig::parse(&text, "t.toml", Path::new(""))
            .unwrap_err()
            .to_string();
        assert!(e.contains("seed"), "{e}");
    }

    #[test]
    fn scenario_paths_must_exist() {
        let text = "format_version = 1\nseed = 1\n[[scenarios]]\nname = \"a\"\npath = \"nowhere.json\"\n";
        let e = RunConfig::parse(text, "t.toml", Path::new("/nonexistent"))
            .unwrap_err()
            .to_string();
        assert!(e.contains("does not exist"), "{e}");
    }

    #[test]
    fn reseeding_keeps_offsets_and_moves_the_solver_stream() {
        let mut c = RunConfig::load(None).unwrap();
        let before = c.episode.solver.seed;
        c.reseed(7);
        assert_ne!(c.episode.solver.seed, before);
        for s in &c.scenarios {
            if let ScenarioSource::Generated(g) = &s.source {
                assert_eq!(g.seed, 7);
            }
        }
    }

    #[test]
    fn policy_fields_must_match_kind() {
        let text = "format_version = 1\nseed = 1\n[[policies]]\nname = \"o\"\nkind = \"oracle\"\nq_const = 3.0\n";
        assert!(RunConfig::parse(text, "t.toml", Path::new("")).is_err());
    }
}
