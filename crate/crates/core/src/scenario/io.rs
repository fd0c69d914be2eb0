//! Scenario files: a JSON header next to a CSV body.
//!
//! `<stem>.json` carries the format version, the generating config and the
//! unit of every column; `<stem>.csv` carries one row per timestep with the
//! columns of [`SCENARIO_COLUMNS`] in that order. Floats are written in
//! shortest round-trip form, so reading a file back is bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Scenario, ScenarioConfig, ScenarioError};
use crate::hydro::Forcing;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

pub const SCENARIO_COLUMNS: [&str; 8] = [
    "t",
    "inflow_m3s",
    "temp_C",
    "precip_mmday",
    "demand_MW",
    "price",
    "solar_cf",
    "q_need_m3s",
];

const UNITS: [(&str, &str); 8] = [
    ("t", "timestep index"),
    ("inflow_m3s", "m3/s"),
    ("temp_C", "degC"),
    ("precip_mmday", "mm/day"),
    ("demand_MW", "MW"),
    ("price", "currency/MWh"),
    ("solar_cf", "fraction"),
    ("q_need_m3s", "m3/s"),
];

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ScenarioConfig,
    columns: Vec<String>,
    units: std::collections::BTreeMap<String, String>,
}

fn stem_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("csv"))
}

fn format_err(path: &Path, reason: impl ToString) -> ScenarioError {
    ScenarioError::Format {
        path: path.display().to_string(),
        reason: reason.to_string(),
    }
}

/// Write `<stem>.json` and `<stem>.csv`; returns both paths.
pub fn write_scenario(scenario: &Scenario, stem: &Path) -> Result<(PathBuf, PathBuf), ScenarioError> {
    scenario.validate()?;
    let (json_path, csv_path) = stem_paths(stem);
    let header = Header {
        format_version: SCENARIO_FORMAT_VERSION,
        config: scenario.config.clone(),
        columns: SCENARIO_COLUMNS.iter().map(|c| c.to_string()).collect(),
        units: UNITS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    };
    let mut json = serde_json::to_string_pretty(&header).map_err(|e| format_err(&json_path, e))?;
    json.push('\n');
    fs::write(&json_path, json)?;

    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| format_err(&csv_path, e))?;
    w.write_record(SCENARIO_COLUMNS).map_err(|e| format_err(&csv_path, e))?;
    for (t, (f, need)) in scenario.forcing.iter().zip(&scenario.q_need).enumerate() {
        w.write_record([
            t.to_string(),
            f.inflow.to_string(),
            f.temperature.to_string(),
            f.precipitation.to_string(),
            f.demand.to_string(),
            f.price.to_string(),
            f.solar_cf.to_string(),
            need.to_string(),
        ])
        .map_err(|e| format_err(&csv_path, e))?;
    }
    w.flush()?;
    Ok((json_path, csv_path))
}

/// Read a scenario from either the `.json`, the `.csv` or the bare stem.
pub fn read_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let (json_path, csv_path) = stem_paths(path);
    let header: Header =
        serde_json::from_str(&fs::read_to_string(&json_path)?).map_err(|e| format_err(&json_path, e))?;
    if header.format_version != SCENARIO_FORMAT_VERSION {
        return Err(format_err(
            &json_path,
            format!(
                "unsupported format_version {} (expected {SCENARIO_FORMAT_VERSION})",
                header.format_version
            ),
        ));
    }
    header.config.validate()?;

    let mut r = csv::Reader::from_path(&csv_path).map_err(|e| format_err(&csv_path, e))?;
    let cols: Vec<String> = r
        .headers()
        .map_err(|e| format_err(&csv_path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if cols != SCENARIO_COLUMNS {
        return Err(format_err(&csv_path, format!("unexpected columns {cols:?}")));
    }
    let mut forcing = Vec::new();
    let mut q_need = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| format_err(&csv_path, e))?;
        let mut vals = [0.0f64; 8];
        for (i, v) in vals.iter_mut().enumerate() {
            let field = rec
                .get(i)
                .ok_or_else(|| format_err(&csv_path, format!("row {row}: missing column {i}")))?;
            *v = field
                .parse()
                .map_err(|e| format_err(&csv_path, format!("row {row} column {}: {e}", SCENARIO_COLUMNS[i])))?;
        }
        forcing.push(Forcing {
            inflow: vals[1],
            temperature: vals[2],
            precipitation: vals[3],
            demand: vals[4],
            price: vals[5],
            solar_cf: vals[6],
        });
        q_need.push(vals[7]);
    }
    let scenario = Scenario {
        config: header.config,
        forcing,
        q_need,
    };
    scenario.validate()?;
    Ok(scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{make_scenario, ScenarioConfig};

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_scenario(&ScenarioConfig::drought(240, 3600.0, 9)).unwrap();
        let (json, csv) = write_scenario(&s, &dir.path().join("dry")).unwrap();
        assert!(json.ends_with("dry.json") && csv.ends_with("dry.csv"));
        let back = read_scenario(&csv).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_header_order_is_fixed() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_scenario(&ScenarioConfig::wet(3, 3600.0, 1)).unwrap();
        let (_, csv) = write_scenario(&s, &dir.path().join("w")).unwrap();
        let text = fs::read_to_string(csv).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "t,inflow_m3s,temp_C,precip_mmday,demand_MW,price,solar_cf,q_need_m3s"
        );
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let s = make_scenario(&ScenarioConfig::wet(3, 3600.0, 1)).unwrap();
        let (json, _) = write_scenario(&s, &dir.path().join("w")).unwrap();
        let text = fs::read_to_string(&json)
            .unwrap()
            .replace("\"format_version\": 1", "\"format_version\": 9");
        fs::write(&json, text).unwrap();
        let err = read_scenario(&json).unwrap_err();
        assert!(err.to_string().contains("format_version"), "{err}");
    }
}
