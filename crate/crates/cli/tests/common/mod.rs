#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ecoflow_cli::config::DEFAULT_CONFIG;

pub fn ecoflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecoflow"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The default configuration with each `(from, to)` replaced everywhere,
/// written to `dir/name`.
pub fn config_with(dir: &Path, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = DEFAULT_CONFIG.to_string();
    for (from, to) in edits {
        assert!(text.contains(from), "default config has no `{from}`");
        text = text.replace(from, to);
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

/// Four days of hourly steps with a one-day feature window, small enough
/// for every command to finish in seconds.
pub fn short_config(dir: &Path) -> PathBuf {
    config_with(
        dir,
        "short.toml",
        &[
            ("horizon = 2160", "horizon = 96"),
            ("epochs = 400", "epochs = 20"),
            ("past_days = 14, forecast_days = 3", "past_days = 1, forecast_days = 1"),
        ],
    )
}

pub fn read(path: impl AsRef<Path>) -> Vec<u8> {
    let p = path.as_ref();
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

/// Every regular file under `dir`, as (relative name, bytes), sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), read(&p)))
        .collect();
    out.sort();
    out
}
