//! Parameter files.
//!
//! A JSON object with `format_version`, `layer_sizes`, row-major `weights`
//! per layer, `biases`, `activation`, `bound_mode`, `window` and
//! `normalization`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::EcoPredictorParams;
use super::PredictorError;

pub const PARAMS_FORMAT_VERSION: u32 = 1;

#[derive(Serialize)]
struct FileOut<'a> {
    format_version: u32,
    #[serde(flatten)]
    params: &'a EcoPredictorParams,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

#[derive(Deserialize)]
struct FileIn {
    #[allow(dead_code)]
    format_version: u32,
    #[serde(flatten)]
    params: EcoPredictorParams,
}

pub fn params_to_json(params: &EcoPredictorParams) -> String {
    let mut s = serde_json::to_string_pretty(&FileOut {
        format_version: PARAMS_FORMAT_VERSION,
        params,
    })
    .expect("parameters serialise");
    s.push('\n');
    s
}

pub fn params_from_json(text: &str) -> Result<EcoPredictorParams, PredictorError> {
    let probe: VersionProbe = serde_json::from_str(text)
        .map_err(|e| PredictorError::Format(format!("not a parameter document (format_version unreadable): {e}")))?;
    match probe.format_version {
        Some(PARAMS_FORMAT_VERSION) => {}
        Some(v) => {
            return Err(PredictorError::Format(format!(
                "unsupported format_version {v}, expected {PARAMS_FORMAT_VERSION}"
            )))
        }
        None => return Err(PredictorError::Format("missing format_version".into())),
    }
    let file: FileIn = serde_json::from_str(text).map_err(|e| {
        PredictorError::Format(format!(
            "format_version {PARAMS_FORMAT_VERSION} document is malformed: {e}"
        ))
    })?;
    file.params.validate()?;
    Ok(file.params)
}

pub fn save_params(params: &EcoPredictorParams, path: &Path) -> Result<(), PredictorError> {
    fs::write(path, params_to_json(params))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<EcoPredictorParams, PredictorError> {
    params_from_json(&fs::read_to_string(path)?)
}
