use std::fs;
use std::path::Path;

use super::{DecisionSchedule, OptimizerError, SolveDiagnostics};

pub const SCHEDULE_COLUMNS: [&str; 9] = [
    "t",
    "q_turb",
    "q_eco",
    "q_irr",
    "q_spill",
    "volume",
    "power_MW",
    "Q_river",
    "qmin_river",
];

/// Schedule as CSV; `volume` is the storage at the start of the step.
pub fn schedule_csv(s: &DecisionSchedule) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SCHEDULE_COLUMNS).expect("in-memory write");
    for (t, u) in s.controls.iter().enumerate() {
        let row = [
            u.q_turb,
            u.q_eco,
            u.q_irr,
            u.q_spill,
            s.volumes[t],
            s.power[t],
            u.q_eco + u.q_spill,
            s.qmin_river[t],
        ];
        let mut rec = vec![t.to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub fn write_schedule(s: &DecisionSchedule, path: &Path) -> Result<(), OptimizerError> {
    fs::write(path, schedule_csv(s))?;
    Ok(())
}

pub fn diagnostics_to_json(d: &SolveDiagnostics) -> String {
    let mut s = serde_json::to_string_pretty(d).expect("diagnostics serialise");
    s.push('\n');
    s
}

pub fn write_diagnostics(d: &SolveDiagnostics, path: &Path) -> Result<(), OptimizerError> {
    fs::write(path, diagnostics_to_json(d))?;
    Ok(())
}
