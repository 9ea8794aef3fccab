use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use qnet::bbm92::key::LOW_STATISTICS_BITS;
use qnet::bbm92::{analyze_windows, run_protocol_multishot, write_timetags};
use serde_json::json;

use super::{WindowGrid, METRICS_COLUMNS};
use crate::config::{OutputFormat, Provenance, RunConfig};
use crate::error::CliResult;

/// Enough pairs for percent-level rate errors at the default operating point.
pub const DEFAULT_SHOTS: u64 = 4_000_000;

pub fn run(config: &RunConfig, grid: &WindowGrid, timetags: Option<&Path>) -> CliResult<String> {
    config.experiment.validate()?;
    let windows = grid.windows()?;
    let shots = config.shots_or(DEFAULT_SHOTS);
    let provenance = Provenance::new(
        "simulate",
        config,
        &json!({ "windows_ps": windows, "shots": shots }),
    );

    let p = &config.experiment;
    let run = run_protocol_multishot(p, shots, config.seed)?;
    log::info!(
        "{} pairs, {} Alice tags, {} Bob tags over {:.3} s",
        run.emitted_pairs,
        run.alice.len(),
        run.bob.len(),
        run.exposure_s
    );
    if let Some(path) = timetags {
        let mut out = BufWriter::new(File::create(path)?);
        write_timetags(&mut out, &run.alice, &run.bob)?;
        out.flush()?;
    }
    let metrics = analyze_windows(
        &run.alice,
        &run.bob,
        &windows,
        &p.detector_delays_ps,
        p.bell_state,
    )?;
    let low = metrics.iter().filter(|m| m.low_statistics).count();
    if low > 0 {
        log::warn!(
            "{low} of {} windows have fewer than {LOW_STATISTICS_BITS} sifted bits",
            metrics.len()
        );
    }

    Ok(match config.format {
        OutputFormat::Csv => {
            let mut out = provenance.csv_header();
            if low > 0 {
                let _ = writeln!(
                    out,
                    "# low statistics: {low} of {} windows have fewer than {LOW_STATISTICS_BITS} sifted bits",
                    metrics.len()
                );
            }
            out.push_str(METRICS_COLUMNS);
            out.push('\n');
            for m in &metrics {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    m.coincidence_window_ps,
                    m.raw_key_rate,
                    m.raw_key_rate_se,
                    m.qber,
                    m.qber_se,
                    m.secure_key_rate
                );
            }
            out
        }
        OutputFormat::Json => {
            let doc = json!({
                "provenance": provenance,
                "emitted_pairs": run.emitted_pairs,
                "exposure_s": run.exposure_s,
                "metrics": metrics,
            });
            serde_json::to_string_pretty(&doc).expect("metrics serialize") + "\n"
        }
    })
}
