use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::{Deserialize, Serialize};

use super::{run_policy, EpisodeConfig, EpisodeResult, HarnessError, Policy};
use crate::hydro::PlantSpec;
use crate::scenario::Scenario;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Scalar metrics of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub horizon: usize,
    pub energy_mwh: f64,
    pub revenue: f64,
    pub solar_energy_mwh: f64,
    pub demand_shortfall_mwh: f64,
    pub stress_events: usize,
    pub mean_stress: f64,
    pub fines: f64,
    pub water_spilled_m3: f64,
    pub objective: f64,
    pub max_violation: f64,
    pub converged: bool,
}

impl From<&EpisodeResult> for EpisodeSummary {
    fn from(r: &EpisodeResult) -> Self {
        Self {
            horizon: r.stress.len(),
            energy_mwh: r.energy_mwh,
            revenue: r.revenue,
            solar_energy_mwh: r.solar_energy_mwh,
            demand_shortfall_mwh: r.demand_shortfall_mwh,
            stress_events: r.stress_events,
            mean_stress: r.mean_stress,
            fines: r.fines,
            water_spilled_m3: r.water_spilled_m3,
            objective: r.diagnostics.objective,
            max_violation: r.diagnostics.max_violation,
            converged: r.diagnostics.converged,
        }
    }
}

impl EpisodeSummary {
    fn metrics(&self) -> [(&'static str, f64); 8] {
        [
            ("energy_mwh", self.energy_mwh),
            ("revenue", self.revenue),
            ("solar_energy_mwh", self.solar_energy_mwh),
            ("demand_shortfall_mwh", self.demand_shortfall_mwh),
            ("stress_events", self.stress_events as f64),
            ("mean_stress", self.mean_stress),
            ("fines", self.fines),
            ("water_spilled_m3", self.water_spilled_m3),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub scenario: String,
    pub policy: String,
    pub summary: Option<EpisodeSummary>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Statistics of one policy across the scenarios where it succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub policy: String,
    pub episodes: usize,
    pub metrics: BTreeMap<String, MetricStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub format_version: u32,
    /// Scenario-major, in the order supplied.
    pub cells: Vec<CellOutcome>,
    pub aggregates: Vec<Aggregate>,
    /// Full results, aligned with `cells`; written as CSV, not JSON.
    #[serde(skip)]
    pub episodes: Vec<Option<EpisodeResult>>,
}

pub fn compare(
    scenarios: &[(String, Scenario)],
    plant: &PlantSpec,
    policies: &[(String, Policy)],
    cfg: &EpisodeConfig,
) -> Result<ComparisonReport, HarnessError> {
    if scenarios.is_empty() || policies.is_empty() {
        return Err(HarnessError::Contract(
            "compare needs at least one scenario and one policy".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..scenarios.len())
        .flat_map(|si| (0..policies.len()).map(move |pi| (si, pi)))
        .collect();
    // cells are independent; results land in their fixed slot
    let results: Vec<Mutex<Option<Result<EpisodeResult, HarnessError>>>> =
        jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(si, pi)) = jobs.get(k) else { break };
                let r = run_policy(&scenarios[si].1, plant, &policies[pi].1, cfg);
                *results[k].lock().expect("no worker panics while holding the lock") = Some(r);
            });
        }
    });
    let mut cells = Vec::new();
    let mut episodes = Vec::new();
    for (&(si, pi), slot) in jobs.iter().zip(results) {
        let outcome = slot.into_inner().expect("lock not poisoned").expect("every job ran");
        let (summary, error, episode) = match outcome {
            Ok(r) => (Some(EpisodeSummary::from(&r)), None, Some(r)),
            Err(e) => (None, Some(e.to_string()), None),
        };
        cells.push(CellOutcome {
            scenario: scenarios[si].0.clone(),
            policy: policies[pi].0.clone(),
            summary,
            error,
        });
        episodes.push(episode);
    }
    let aggregates = policies.iter().map(|(name, _)| aggregate(name, &cells)).collect();
    Ok(ComparisonReport {
        format_version: REPORT_FORMAT_VERSION,
        cells,
        aggregates,
        episodes,
    })
}

fn aggregate(policy: &str, cells: &[CellOutcome]) -> Aggregate {
    let ok: Vec<&EpisodeSummary> = cells
        .iter()
        .filter(|c| c.policy == policy)
        .filter_map(|c| c.summary.as_ref())
        .collect();
    let mut metrics = BTreeMap::new();
    if !ok.is_empty() {
        for (i, (name, _)) in ok[0].metrics().iter().enumerate() {
            let values: Vec<f64> = ok.iter().map(|s| s.metrics()[i].1).collect();
            metrics.insert(
                name.to_string(),
                MetricStats {
                    mean: values.iter().sum::<f64>() / values.len() as f64,
                    min: values.iter().copied().fold(f64::INFINITY, f64::min),
                    max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                },
            );
        }
    }
    Aggregate {
        policy: policy.to_string(),
        episodes: ok.len(),
        metrics,
    }
}

impl ComparisonReport {
    pub fn succeeded(&self) -> usize {
        self.cells.iter().filter(|c| c.summary.is_some()).count()
    }

    pub fn cell(&self, scenario: &str, policy: &str) -> Option<&CellOutcome> {
        self.cells.iter().find(|c| c.scenario == scenario && c.policy == policy)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Aligned plain-text table, one row per cell.
    pub fn text_table(&self) -> String {
        let header = [
            "scenario",
            "policy",
            "energy_MWh",
            "revenue",
            "shortfall_MWh",
            "stress_events",
            "mean_stress",
            "fines",
            "spilled_m3",
            "converged",
        ];
        let mut rows: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
        for c in &self.cells {
            let mut row = vec![c.scenario.clone(), c.policy.clone()];
            match &c.summary {
                Some(s) => row.extend([
                    format!("{:.3}", s.energy_mwh),
                    format!("{:.2}", s.revenue),
                    format!("{:.3}", s.demand_shortfall_mwh),
                    s.stress_events.to_string(),
                    format!("{:.4}", s.mean_stress),
                    format!("{:.2}", s.fines),
                    format!("{:.0}", s.water_spilled_m3),
                    s.converged.to_string(),
                ]),
                None => row.push(format!("FAILED: {}", c.error.as_deref().unwrap_or("unknown"))),
            }
            rows.push(row);
        }
        let columns = header.len();
        let widths: Vec<usize> = (0..columns)
            .map(|i| {
                rows.iter()
                    .filter(|r| i < 2 || r.len() == columns)
                    .filter_map(|r| r.get(i))
                    .map(|v| v.len())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for row in &rows {
            let mut line = String::new();
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    line.push_str("  ");
                }
                if i < 2 || row.len() < columns {
                    let _ = write!(line, "{v:<w$}", w = widths[i]);
                } else {
                    let _ = write!(line, "{v:>w$}", w = widths[i]);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    /// Writes `report.json`, `report.txt` and one `<scenario>_<policy>.csv`
    /// per successful cell; returns every path written.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let json = dir.join("report.json");
        fs::write(&json, self.to_json())?;
        written.push(json);
        let txt = dir.join("report.txt");
        fs::write(&txt, self.text_table())?;
        written.push(txt);
        for (cell, episode) in self.cells.iter().zip(&self.episodes) {
            if let Some(r) = episode {
                let path = dir.join(format!("{}_{}.csv", cell.scenario, cell.policy));
                fs::write(&path, episode_csv(r))?;
                written.push(path);
            }
        }
        Ok(written)
    }
}

pub fn episode_csv(r: &EpisodeResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "t",
        "q_turb",
        "q_eco",
        "q_irr",
        "q_spill",
        "volume",
        "power_MW",
        "Q_river",
        "qmin_used",
        "q_need",
        "stress",
    ])
    .expect("in-memory write");
    for t in 0..r.stress.len() {
        let u = &r.controls[t];
        let mut rec = vec![t.to_string()];
        rec.extend(
            [
                u.q_turb,
                u.q_eco,
                u.q_irr,
                u.q_spill,
                r.volumes[t],
                r.power[t],
                r.q_river[t],
                r.qmin_used[t],
                r.q_need[t],
                r.stress[t],
            ]
            .iter()
            .map(|x| x.to_string()),
        );
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
