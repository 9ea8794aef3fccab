use std::fmt::Write as _;

use clap::{Args, ValueEnum};
use qnet::analytic::full_model;
use qnet::bbm92::{analyze, run_protocol_multishot, EmpiricalKeyMetrics};
use qnet::optics::ExperimentParams;
use rayon::prelude::*;
use serde::Serialize;

use super::{linear_grid, log_grid};
use crate::config::{Provenance, RunConfig};
use crate::error::{CliError, CliResult};
use crate::CommonArgs;

pub const DEFAULT_SHOTS: u64 = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Per-arm fiber loss, dB, applied to both arms.
    Loss,
    /// Detector dead time, ps, applied to every detector.
    #[value(name = "dead_time")]
    DeadTime,
    /// Detection resolution (FWHM), ps.
    Resolution,
    /// Dark count rate, counts/s, applied to every detector bank.
    #[value(name = "dark_rate")]
    DarkRate,
    /// Source pair emission rate, pairs/s.
    Brightness,
    Visibility,
    /// Coincidence window, ps.
    #[value(name = "t_c")]
    #[serde(rename = "t_c")]
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

impl Axis {
    pub fn column(self) -> &'static str {
        match self {
            Axis::Loss => "loss_db",
            Axis::DeadTime => "dead_time_ps",
            Axis::Resolution => "detection_resolution_ps",
            Axis::DarkRate => "dark_rate_cps",
            Axis::Brightness => "brightness_cps",
            Axis::Visibility => "visibility",
            Axis::Window => "t_c_ps",
        }
    }

    /// Grids bracket the reference operating point by two orders of
    /// magnitude on each side, except for bounded quantities.
    pub fn default_grid(self) -> (f64, f64, usize, Scale) {
        match self {
            Axis::Loss => (0.0, 40.0, 21, Scale::Linear),
            Axis::DeadTime => (450.0, 4.5e6, 21, Scale::Log),
            Axis::Resolution => (16.0, 1.6e5, 21, Scale::Log),
            Axis::DarkRate => (5.0, 1.8e5, 21, Scale::Log),
            Axis::Brightness => (1.5e4, 1.5e8, 21, Scale::Log),
            Axis::Visibility => (0.80, 1.00, 21, Scale::Linear),
            Axis::Window => (10.0, 1.0e7, 41, Scale::Log),
        }
    }

    pub fn apply(self, base: &ExperimentParams, value: f64) -> qnet::Result<ExperimentParams> {
        let mut p = base.clone();
        match self {
            Axis::Loss => {
                p.loss_alice_db = value;
                p.loss_bob_db = value;
            }
            Axis::DeadTime => {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(qnet::Error::Domain {
                        name: "dead_time_ps",
                        value,
                        range: "[0, inf)",
                    });
                }
                p.alice_detectors.dead_time_ps = value.round() as u64;
                p.bob_detectors.dead_time_ps = value.round() as u64;
            }
            Axis::Resolution => p.detection_resolution_ps = value,
            Axis::DarkRate => {
                p.alice_detectors.dark_rate_cps = value;
                p.bob_detectors.dark_rate_cps = value;
            }
            Axis::Brightness => p.brightness_cps = value,
            Axis::Visibility => p = p.with_visibility(value)?,
            Axis::Window => p.coincidence_window_ps = value,
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Parameter to sweep.
    #[arg(value_enum)]
    pub axis: Axis,
    #[arg(long)]
    pub from: Option<f64>,
    #[arg(long)]
    pub to: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, value_enum)]
    pub scale: Option<Scale>,
    /// Coincidence window for every point, ps; the configured window by default.
    #[arg(long)]
    pub window_ps: Option<f64>,
    /// Skip the simulation columns.
    #[arg(long)]
    pub theory_only: bool,
}

#[derive(Debug, Serialize)]
struct SweepSpec {
    axis: Axis,
    values: Vec<f64>,
    window_ps: f64,
    shots: Option<u64>,
}

pub fn columns(axis: Axis) -> String {
    format!(
        "{},theory_raw_key_rate_cps,theory_qber,theory_secure_key_rate_cps,\
         sim_raw_key_rate_cps,sim_raw_key_rate_se,sim_qber,sim_qber_se,sim_secure_key_rate_cps,sim_secure_key_rate_se",
        axis.column()
    )
}

pub fn run(config: &RunConfig, args: &SweepArgs) -> CliResult<String> {
    let (from, to, points, scale) = args.axis.default_grid();
    let (from, to) = (args.from.unwrap_or(from), args.to.unwrap_or(to));
    let points = args.points.unwrap_or(points);
    let values = match args.scale.unwrap_or(scale) {
        Scale::Linear => linear_grid(from, to, points)?,
        Scale::Log => log_grid(from, to, points)?,
    };
    let mut base = config.experiment.clone();
    if let Some(w) = args.window_ps {
        base.coincidence_window_ps = w;
    }
    base.validate()?;
    let shots = (!args.theory_only).then(|| config.shots_or(DEFAULT_SHOTS));
    let spec = SweepSpec {
        axis: args.axis,
        values: values.clone(),
        window_ps: base.coincidence_window_ps,
        shots,
    };
    let provenance = Provenance::new("sweep", config, &spec);

    let params = values
        .iter()
        .map(|&v| args.axis.apply(&base, v))
        .collect::<qnet::Result<Vec<_>>>()
        .map_err(|e| CliError::Config(format!("{} sweep: {e}", args.axis.column())))?;
    let rows = params
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let theory = full_model(p)?;
            let sim = match shots {
                Some(shots) => Some(simulate_point(
                    p,
                    shots,
                    config.seed.wrapping_add(i as u64),
                )?),
                None => None,
            };
            Ok((theory, sim))
        })
        .collect::<qnet::Result<Vec<_>>>()?;

    let mut out = provenance.csv_header();
    out.push_str(&columns(args.axis));
    out.push('\n');
    for (v, (theory, sim)) in values.iter().zip(&rows) {
        let _ = write!(
            out,
            "{v},{},{},{}",
            theory.raw_key_rate, theory.qber, theory.secure_key_rate
        );
        match sim {
            Some(m) => {
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{},{}",
                    m.raw_key_rate,
                    m.raw_key_rate_se,
                    m.qber,
                    m.qber_se,
                    m.secure_key_rate,
                    m.secure_key_rate_se
                );
            }
            None => out.push_str(",,,,,,\n"),
        }
    }
    Ok(out)
}

fn simulate_point(
    p: &ExperimentParams,
    shots: u64,
    seed: u64,
) -> qnet::Result<EmpiricalKeyMetrics> {
    let run = run_protocol_multishot(p, shots, seed)?;
    analyze(
        &run.alice,
        &run.bob,
        p.coincidence_window_ps,
        &p.detector_delays_ps,
        p.bell_state,
    )
}
