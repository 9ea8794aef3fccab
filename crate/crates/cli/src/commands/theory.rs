use std::fmt::Write as _;

use qnet::analytic::{full_model, KeyMetrics};
use qnet::optics::ExperimentParams;
use serde_json::json;

use super::{WindowGrid, METRICS_COLUMNS};
use crate::config::{OutputFormat, Provenance, RunConfig};
use crate::error::CliResult;

pub fn run(config: &RunConfig, grid: &WindowGrid) -> CliResult<String> {
    config.experiment.validate()?;
    let windows = grid.windows()?;
    let provenance = Provenance::new("theory", config, &json!({ "windows_ps": windows }));
    let metrics = windows
        .iter()
        .map(|&w| {
            full_model(&ExperimentParams {
                coincidence_window_ps: w,
                ..config.experiment.clone()
            })
        })
        .collect::<qnet::Result<Vec<KeyMetrics>>>()?;
    Ok(match config.format {
        OutputFormat::Csv => {
            let mut out = provenance.csv_header();
            out.push_str(METRICS_COLUMNS);
            out.push('\n');
            for m in &metrics {
                let _ = writeln!(
                    out,
                    "{},{},0,{},0,{}",
                    m.coincidence_window_ps, m.raw_key_rate, m.qber, m.secure_key_rate
                );
            }
            out
        }
        OutputFormat::Json => {
            let doc = json!({ "provenance": provenance, "metrics": metrics });
            serde_json::to_string_pretty(&doc).expect("metrics serialize") + "\n"
        }
    })
}
