//! Run configuration: a JSON file merged over the defaults, then `--set`
//! overrides, then dedicated flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use qnet::estimate::EstimateConfig;
use qnet::optics::ExperimentParams;
use qnet::repeater::RepeaterChainParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Source pairs to emit; each subcommand has its own default.
    pub shots: Option<u64>,
    /// Applies to `theory` and `simulate`; the other subcommands have a fixed format.
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
    pub experiment: ExperimentParams,
    pub repeater: RepeaterChainParams,
    pub estimate: EstimateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            shots: None,
            format: OutputFormat::Csv,
            output: None,
            experiment: ExperimentParams::table1(),
            repeater: RepeaterChainParams::default(),
            estimate: EstimateConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct FlagOverrides {
    pub sets: Vec<String>,
    pub seed: Option<u64>,
    pub shots: Option<u64>,
    pub format: Option<OutputFormat>,
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &FlagOverrides) -> CliResult<Self> {
        let mut value = serde_json::to_value(Self::default()).expect("default config serializes");
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            let file: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut value, file, "")?;
        }
        for set in &flags.sets {
            apply_set(&mut value, set)?;
        }
        let mut config: Self =
            serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(seed) = flags.seed {
            config.seed = seed;
        }
        if flags.shots.is_some() {
            config.shots = flags.shots;
        }
        if let Some(format) = flags.format {
            config.format = format;
        }
        if flags.output.is_some() {
            config.output = flags.output.clone();
        }
        Ok(config)
    }

    pub fn shots_or(&self, default: u64) -> u64 {
        self.shots.unwrap_or(default)
    }
}

/// Overlays `patch` on `base`, rejecting keys the defaults do not have.
fn merge(base: &mut Value, patch: Value, prefix: &str) -> CliResult<()> {
    match (base, patch) {
        (Value::Object(base), Value::Object(patch)) => {
            for (key, v) in patch {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                let slot = base
                    .get_mut(&key)
                    .ok_or_else(|| CliError::Config(format!("unknown field `{path}`")))?;
                merge(slot, v, &path)?;
            }
            Ok(())
        }
        (base, patch) => {
            *base = patch;
            Ok(())
        }
    }
}

/// `experiment.loss_alice_db=15` style override. The value is read as JSON,
/// falling back to a plain string.
fn apply_set(value: &mut Value, set: &str) -> CliResult<()> {
    let (path, raw) = set
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("`--set {set}` is not of the form path=value")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut patch = parsed;
    for key in path.trim().rsplit('.') {
        let mut obj = serde_json::Map::new();
        obj.insert(key.to_string(), patch);
        patch = Value::Object(obj);
    }
    merge(value, patch, "")
}

/// What a run's output depends on, hashed into its provenance record.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub command: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    /// Effective configuration and subcommand arguments.
    pub inputs: Value,
}

impl Provenance {
    pub fn new<A: Serialize>(command: &'static str, config: &RunConfig, args: &A) -> Self {
        let mut config = config.clone();
        config.output = None;
        let inputs = serde_json::json!({
            "command": command,
            "config": config,
            "args": args,
        });
        let digest = Sha256::digest(serde_json::to_vec(&inputs).expect("inputs serialize"));
        Self {
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: config.seed,
            config_sha256: hex::encode(digest),
            inputs,
        }
    }

    /// Comment lines that open every CSV.
    pub fn csv_header(&self) -> String {
        format!(
            "# qnet {} {} seed={} config_sha256={}\n# inputs={}\n",
            self.version, self.command, self.seed, self.config_sha256, self.inputs
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sets_override_nested_fields() {
        let flags = FlagOverrides {
            sets: vec![
                "experiment.loss_alice_db=15".into(),
                "estimate.bell_state=\"PhiPlus\"".into(),
            ],
            seed: Some(9),
            ..FlagOverrides::default()
        };
        let c = RunConfig::load(None, &flags).unwrap();
        assert_eq!(c.experiment.loss_alice_db, 15.0);
        assert_eq!(c.estimate.bell_state, qnet::states::BellState::PhiPlus);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let flags = FlagOverrides {
            sets: vec!["experiment.loss_carol_db=1".into()],
            ..FlagOverrides::default()
        };
        let err = RunConfig::load(None, &flags).unwrap_err();
        assert!(
            err.to_string().contains("experiment.loss_carol_db"),
            "{err}"
        );
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_ignores_output_path_but_not_seed() {
        let mut a = RunConfig::default();
        let mut b = RunConfig::default();
        b.output = Some("x.csv".into());
        assert_eq!(
            Provenance::new("theory", &a, &()).config_sha256,
            Provenance::new("theory", &b, &()).config_sha256
        );
        a.seed = 2;
        assert_ne!(
            Provenance::new("theory", &a, &()).config_sha256,
            Provenance::new("theory", &b, &()).config_sha256
        );
        assert_eq!(Provenance::new("theory", &a, &()).config_sha256.len(), 64);
    }
}
