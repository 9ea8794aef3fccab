use thiserror::Error;

/// Errors raised by the simulator, the rate model and the estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "causality violation: cannot schedule an event at {requested} ps, clock is at {now} ps"
    )]
    Causality { now: u64, requested: u64 },

    #[error("no link configured from node {from} to node {to}")]
    UnknownLink { from: usize, to: usize },

    #[error("`{name}` = {value} is outside its valid range {range}")]
    Domain {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("{0} is undefined for a zero coincidence rate")]
    UndefinedRate(&'static str),

    #[error("elementary link success probability is zero; entanglement is never generated")]
    Divergence,

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Checks `lo <= value <= hi`, reporting the offending field by name.
pub(crate) fn ensure_range(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    range: &'static str,
) -> Result<()> {
    if value.is_nan() || value < lo || value > hi {
        return Err(Error::Domain { name, value, range });
    }
    Ok(())
}
