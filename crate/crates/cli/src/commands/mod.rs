pub mod estimate;
pub mod repeater;
pub mod simulate;
pub mod sweep;
pub mod theory;

use clap::Args;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Header shared by `theory` and `simulate` CSVs so the two overlay directly.
pub const METRICS_COLUMNS: &str =
    "t_c_ps,raw_key_rate_cps,raw_key_rate_se,qber,qber_se,secure_key_rate_cps";

/// Coincidence windows: an explicit list, or a log-spaced grid.
#[derive(Debug, Clone, Args, Serialize)]
pub struct WindowGrid {
    /// Explicit windows in ps, comma separated; replaces the log grid.
    #[arg(long = "window-ps", value_delimiter = ',')]
    pub windows_ps: Vec<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub min_window_ps: f64,
    #[arg(long, default_value_t = 1.0e7)]
    pub max_window_ps: f64,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
}

impl WindowGrid {
    pub fn windows(&self) -> CliResult<Vec<f64>> {
        let windows = if self.windows_ps.is_empty() {
            log_grid(self.min_window_ps, self.max_window_ps, self.points)?
        } else {
            self.windows_ps.clone()
        };
        if let Some(w) = windows.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(CliError::Config(format!(
                "coincidence window {w} ps must be positive"
            )));
        }
        Ok(windows)
    }
}

pub fn log_grid(from: f64, to: f64, points: usize) -> CliResult<Vec<f64>> {
    if !(from > 0.0 && to >= from && to.is_finite()) {
        return Err(CliError::Config(format!(
            "log grid needs 0 < from <= to, got {from}..{to}"
        )));
    }
    let (a, b) = (from.ln(), to.ln());
    grid(points, |t| (a + (b - a) * t).exp(), from, to)
}

pub fn linear_grid(from: f64, to: f64, points: usize) -> CliResult<Vec<f64>> {
    if !(from.is_finite() && to.is_finite() && to >= from) {
        return Err(CliError::Config(format!(
            "linear grid needs from <= to, got {from}..{to}"
        )));
    }
    grid(points, |t| from + (to - from) * t, from, to)
}

fn grid(points: usize, at: impl Fn(f64) -> f64, from: f64, to: f64) -> CliResult<Vec<f64>> {
    match points {
        0 => Err(CliError::Config("a grid needs at least one point".into())),
        1 => Ok(vec![from]),
        n => Ok((0..n)
            .map(|i| match i {
                0 => from,
                i if i == n - 1 => to,
                i => at(i as f64 / (n - 1) as f64),
            })
            .collect()),
    }
}
