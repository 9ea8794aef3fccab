//! Recovers per-detector cable delays from the coincidence peaks between
//! every Alice/Bob detector pairing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::DelayTable;

use super::histogram::{pairing_histograms, PeakCriteria};
use super::protocol::TimeTagStream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncConfig {
    pub bin_width_ps: u64,
    pub half_range_ps: u64,
    pub criteria: PeakCriteria,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            bin_width_ps: 100,
            half_range_ps: 50_000,
            criteria: PeakCriteria {
                min_significance: 5.0,
                min_net_counts: 100.0,
            },
        }
    }
}

/// Measured peak offset for one detector pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingOffset {
    pub alice_detector: u8,
    pub bob_detector: u8,
    pub offset_ps: f64,
    pub net_counts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncResult {
    /// Delays relative to Alice's detector 0, which is fixed at zero.
    pub delays: DelayTable,
    pub offsets: Vec<PairingOffset>,
    /// RMS of the least-squares residuals over the pairings used.
    pub residual_rms_ps: f64,
}

/// Each significant pairing `(i, j)` gives `d_B[j] − d_A[i] ≈ offset`. The
/// seven delays other than Alice's detector 0 are solved by least squares.
pub fn synchronize(
    alice: &TimeTagStream,
    bob: &TimeTagStream,
    config: &SyncConfig,
) -> Result<SyncResult> {
    let hists = pairing_histograms(
        alice,
        bob,
        &DelayTable::zero(),
        config.bin_width_ps,
        config.half_range_ps,
    );
    let mut offsets = Vec::new();
    for (i, row) in hists.iter().enumerate() {
        for (j, h) in row.iter().enumerate() {
            if let Some(peak) = h.peak(&config.criteria) {
                offsets.push(PairingOffset {
                    alice_detector: i as u8,
                    bob_detector: j as u8,
                    offset_ps: peak.offset_ps,
                    net_counts: peak.net_counts,
                });
            }
        }
    }
    solve_delays(offsets)
}

/// Least-squares delay table from measured pairing offsets.
pub fn solve_delays(offsets: Vec<PairingOffset>) -> Result<SyncResult> {
    const UNKNOWNS: usize = 7;
    let rows = offsets.len();
    if rows < UNKNOWNS {
        return Err(Error::InsufficientStatistics(format!(
            "only {rows} detector pairings show a coincidence peak; at least {UNKNOWNS} are needed"
        )));
    }
    let mut a = DMatrix::<f64>::zeros(rows, UNKNOWNS);
    let mut y = DVector::<f64>::zeros(rows);
    for (r, o) in offsets.iter().enumerate() {
        if o.alice_detector > 0 {
            a[(r, o.alice_detector as usize - 1)] = -1.0;
        }
        a[(r, 3 + o.bob_detector as usize)] = 1.0;
        y[r] = o.offset_ps;
    }
    let svd = a.clone().svd(true, true);
    let smallest = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if smallest < 1e-9 {
        return Err(Error::InsufficientStatistics(
            "the detector pairings with coincidence peaks do not determine every delay".into(),
        ));
    }
    let x = svd
        .solve(&y, 1e-12)
        .map_err(|e| Error::InsufficientStatistics(e.to_string()))?;
    let residual = &a * &x - &y;
    let residual_rms_ps = (residual.norm_squared() / rows as f64).sqrt();
    let mut delays = DelayTable::zero();
    for i in 1..4 {
        delays.alice[i] = x[i - 1].round() as i64;
    }
    for j in 0..4 {
        delays.bob[j] = x[3 + j].round() as i64;
    }
    Ok(SyncResult {
        delays,
        offsets,
        residual_rms_ps,
    })
}
