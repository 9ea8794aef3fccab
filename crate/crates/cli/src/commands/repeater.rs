use std::fmt::Write as _;

use clap::Args;
use qnet::repeater::{entanglement_rate, ChainKeyRate, RepeaterChainParams};
use rayon::prelude::*;
use serde::Serialize;

use super::linear_grid;
use crate::config::{Provenance, RunConfig};
use crate::error::{CliError, CliResult};
use crate::CommonArgs;

pub const DEFAULT_SHOTS: u64 = 1_000;

/// `secure_key_rate` and its error are per `L0/c`; the last column is bits/s.
pub const REPEATER_COLUMNS: &str =
    "r,end_to_end_loss_db,F_i,ent_rate_c_over_L0,ent_rate_se,qber,secure_key_rate,secure_key_rate_se,secure_key_rate_bps";

#[derive(Debug, Clone, Args)]
pub struct RepeaterArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Repeater counts; a chain with r repeaters has r + 1 elementary links.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2, 3])]
    pub repeaters: Vec<usize>,
    /// End-to-end losses in dB, split evenly over the links.
    #[arg(long = "loss-db", value_delimiter = ',', default_values_t = [5.0, 20.0])]
    pub loss_db: Vec<f64>,
    /// Explicit elementary fidelities; replaces the fidelity grid.
    #[arg(long, value_delimiter = ',')]
    pub fidelity: Vec<f64>,
    #[arg(long, default_value_t = 0.8)]
    pub fidelity_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub fidelity_max: f64,
    #[arg(long, default_value_t = 21)]
    pub fidelity_points: usize,
}

#[derive(Debug, Serialize)]
struct RepeaterSpec<'a> {
    repeaters: &'a [usize],
    loss_db: &'a [f64],
    fidelities: &'a [f64],
    shots: u64,
}

pub fn run(config: &RunConfig, args: &RepeaterArgs) -> CliResult<String> {
    let fidelities = if args.fidelity.is_empty() {
        linear_grid(args.fidelity_min, args.fidelity_max, args.fidelity_points)?
    } else {
        args.fidelity.clone()
    };
    if args.repeaters.is_empty() || args.loss_db.is_empty() {
        return Err(CliError::Config(
            "need at least one repeater count and one loss".into(),
        ));
    }
    let shots = config.shots_or(DEFAULT_SHOTS);
    if shots == 0 {
        return Err(CliError::Config("shots must be positive".into()));
    }
    let spec = RepeaterSpec {
        repeaters: &args.repeaters,
        loss_db: &args.loss_db,
        fidelities: &fidelities,
        shots,
    };
    let provenance = Provenance::new("repeater", config, &spec);

    // One timing run per (r, loss) serves every fidelity.
    let chains: Vec<(usize, f64, RepeaterChainParams)> = args
        .repeaters
        .iter()
        .flat_map(|&r| args.loss_db.iter().map(move |&loss| (r, loss)))
        .map(|(r, loss)| {
            let links = r + 1;
            let params = RepeaterChainParams {
                links,
                link_loss_db: loss / links as f64,
                ..config.repeater.clone()
            };
            (r, loss, params)
        })
        .collect();
    for (_, _, params) in &chains {
        params.validate()?;
        for &f in &fidelities {
            RepeaterChainParams {
                elementary_fidelity: f,
                ..params.clone()
            }
            .validate()?;
        }
    }
    let blocks = chains
        .par_iter()
        .enumerate()
        .map(|(k, (r, loss, params))| {
            let entanglement =
                entanglement_rate(params, shots as usize, config.seed.wrapping_add(k as u64))?;
            fidelities
                .iter()
                .map(|&f| {
                    let with_f = RepeaterChainParams {
                        elementary_fidelity: f,
                        ..params.clone()
                    };
                    Ok((
                        *r,
                        *loss,
                        f,
                        ChainKeyRate::from_entanglement(&with_f, entanglement)?,
                    ))
                })
                .collect::<qnet::Result<Vec<_>>>()
        })
        .collect::<qnet::Result<Vec<_>>>()?;

    let mut out = provenance.csv_header();
    out.push_str(REPEATER_COLUMNS);
    out.push('\n');
    for (r, loss, f, key) in blocks.iter().flatten() {
        let _ = writeln!(
            out,
            "{r},{loss},{f},{},{},{},{},{},{}",
            key.entanglement.rate_c_over_l0,
            key.entanglement.rate_se,
            key.qber,
            key.secure_key_rate_c_over_l0,
            key.secure_key_rate_se,
            key.secure_key_rate_bps
        );
    }
    Ok(out)
}
