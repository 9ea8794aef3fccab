use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use qnet::bbm92::{match_coincidences, read_timetags, CorrelationMatrix};
use qnet::estimate::estimate_all;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{Provenance, RunConfig};
use crate::error::{CliError, CliResult};
use crate::CommonArgs;

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Timetag file holding both parties' detections.
    pub timetags: PathBuf,
    /// Where to write the correlation matrix CSV. Defaults to the output
    /// path with a `.correlation.csv` extension when an output is given.
    #[arg(long)]
    pub correlation: Option<PathBuf>,
    /// Coincidence window for the correlation matrix, ps.
    #[arg(long, default_value_t = 2_000.0)]
    pub correlation_window_ps: f64,
    /// Take the tags as already delay corrected.
    #[arg(long)]
    pub no_sync: bool,
    #[arg(long)]
    pub dark_alice_cps: Option<f64>,
    #[arg(long)]
    pub dark_bob_cps: Option<f64>,
}

pub fn run(config: &RunConfig, args: &EstimateArgs) -> CliResult<String> {
    let mut cfg = config.estimate.clone();
    if args.no_sync {
        cfg.synchronize = false;
    }
    if let Some(d) = args.dark_alice_cps {
        cfg.dark_alice_cps = d;
    }
    if let Some(d) = args.dark_bob_cps {
        cfg.dark_bob_cps = d;
    }
    if !(args.correlation_window_ps > 0.0) {
        return Err(CliError::Config(
            "correlation window must be positive".into(),
        ));
    }
    let bytes = fs::read(&args.timetags)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.timetags.display())))?;
    let mut effective = config.clone();
    effective.estimate = cfg.clone();
    let provenance = Provenance::new(
        "estimate",
        &effective,
        &json!({
            "timetags": file_name(&args.timetags),
            "timetags_sha256": hex::encode(Sha256::digest(&bytes)),
            "correlation_window_ps": args.correlation_window_ps,
        }),
    );

    let (alice, bob) = read_timetags(bytes.as_slice())?;
    let estimates = estimate_all(&alice, &bob, &cfg)?;
    for w in &estimates.fit_diagnostics.warnings {
        log::warn!("{w}");
    }

    let correlation_path = args.correlation.clone().or_else(|| {
        config
            .output
            .as_ref()
            .map(|o| o.with_extension("correlation.csv"))
    });
    if let Some(path) = correlation_path {
        let pairs = match_coincidences(
            &alice,
            &bob,
            args.correlation_window_ps,
            &estimates.fit_diagnostics.delays_ps,
        );
        let matrix = CorrelationMatrix::from_coincidences(&pairs);
        fs::write(&path, provenance.csv_header() + &matrix.to_csv())?;
    }

    let mut doc = serde_json::to_value(&estimates).expect("estimates serialize");
    doc["provenance"] = serde_json::to_value(&provenance).expect("provenance serializes");
    Ok(serde_json::to_string_pretty(&doc).expect("json renders") + "\n")
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
