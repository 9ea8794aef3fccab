//! Sifting and empirical key metrics.

use serde::{Deserialize, Serialize};

use crate::analytic::{binary_entropy, ERROR_CORRECTION_FACTOR};
use crate::error::{Error, Result};
use crate::optics::DelayTable;
use crate::states::{Basis, BellState};

use super::coincidence::{AlignedStreams, Coincidence};
use super::protocol::TimeTagStream;

/// Bits kept after basis reconciliation. Bob's bits are already flipped where
/// the shared state is anticorrelated, so any disagreement is an error.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftedKey {
    pub alice: Vec<u8>,
    pub bob: Vec<u8>,
    pub bases: Vec<Basis>,
    /// Coincidences before sifting.
    pub coincidences: usize,
}

impl SiftedKey {
    pub fn len(&self) -> usize {
        self.alice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alice.is_empty()
    }

    pub fn errors(&self) -> usize {
        self.alice
            .iter()
            .zip(&self.bob)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn qber(&self) -> Option<f64> {
        (!self.is_empty()).then(|| self.errors() as f64 / self.len() as f64)
    }
}

/// Keeps coincidences where both parties used the same basis.
pub fn sift(coincidences: &[Coincidence], bell: BellState) -> SiftedKey {
    let mut key = SiftedKey {
        coincidences: coincidences.len(),
        ..SiftedKey::default()
    };
    for c in coincidences {
        let basis = c.alice.basis();
        if basis != c.bob.basis() {
            continue;
        }
        let flip = u8::from(!bell.correlated_in(basis));
        key.alice.push(c.alice.bit());
        key.bob.push(c.bob.bit() ^ flip);
        key.bases.push(basis);
    }
    key
}

/// Below this many sifted bits the metrics are flagged as unreliable.
pub const LOW_STATISTICS_BITS: usize = 100;

/// Rates and error estimate measured from simulated or recorded tags at one
/// coincidence window. Standard errors are one sigma.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalKeyMetrics {
    pub coincidence_window_ps: f64,
    pub exposure_s: f64,
    pub singles_alice: f64,
    pub singles_bob: f64,
    pub coincidence_rate: f64,
    pub accidental_rate: f64,
    pub raw_bits: usize,
    pub errors: usize,
    pub raw_key_rate: f64,
    pub raw_key_rate_se: f64,
    pub qber: f64,
    pub qber_se: f64,
    pub secure_key_rate: f64,
    pub secure_key_rate_se: f64,
    pub low_statistics: bool,
}

fn secure_rate_and_se(raw_rate: f64, raw_se: f64, qber: f64, qber_se: f64) -> Result<(f64, f64)> {
    let factor = 1.0 - ERROR_CORRECTION_FACTOR * binary_entropy(qber)?;
    if factor <= 0.0 {
        return Ok((0.0, 0.0));
    }
    // dH/dQ = log2((1 − Q)/Q)
    let slope = if qber > 0.0 && qber < 1.0 {
        ((1.0 - qber) / qber).log2()
    } else {
        0.0
    };
    let d_qber = raw_rate * ERROR_CORRECTION_FACTOR * slope;
    let se = ((factor * raw_se).powi(2) + (d_qber * qber_se).powi(2)).sqrt();
    Ok((raw_rate * factor, se))
}

/// Key metrics from a sifted key. The qber is NaN when nothing survived sifting.
pub fn compute_metrics(
    key: &SiftedKey,
    exposure_s: f64,
    window_ps: f64,
) -> Result<EmpiricalKeyMetrics> {
    if !(exposure_s > 0.0) {
        return Err(Error::Domain {
            name: "exposure_s",
            value: exposure_s,
            range: "(0, inf)",
        });
    }
    let n = key.len();
    let errors = key.errors();
    let raw_key_rate = n as f64 / exposure_s;
    let raw_key_rate_se = (n as f64).sqrt() / exposure_s;
    let (qber, qber_se) = if n == 0 {
        (f64::NAN, f64::NAN)
    } else {
        let q = errors as f64 / n as f64;
        (q, (q * (1.0 - q) / n as f64).sqrt())
    };
    let (secure_key_rate, secure_key_rate_se) = if n == 0 {
        (0.0, 0.0)
    } else {
        secure_rate_and_se(raw_key_rate, raw_key_rate_se, qber, qber_se)?
    };
    Ok(EmpiricalKeyMetrics {
        coincidence_window_ps: window_ps,
        exposure_s,
        singles_alice: 0.0,
        singles_bob: 0.0,
        coincidence_rate: key.coincidences as f64 / exposure_s,
        accidental_rate: 0.0,
        raw_bits: n,
        errors,
        raw_key_rate,
        raw_key_rate_se,
        qber,
        qber_se,
        secure_key_rate,
        secure_key_rate_se,
        low_statistics: n < LOW_STATISTICS_BITS,
    })
}

/// Matching, sifting and metrics at each window in `windows_ps`, sharing one
/// delay-corrected copy of the streams.
pub fn analyze_windows(
    alice: &TimeTagStream,
    bob: &TimeTagStream,
    windows_ps: &[f64],
    delays: &DelayTable,
    bell: BellState,
) -> Result<Vec<EmpiricalKeyMetrics>> {
    let exposure_s = alice.acquisition_s;
    let aligned = AlignedStreams::new(alice, bob, delays);
    windows_ps
        .iter()
        .map(|&window| {
            let key = sift(&aligned.coincidences(window), bell);
            let mut m = compute_metrics(&key, exposure_s, window)?;
            m.singles_alice = alice.singles_rate();
            m.singles_bob = bob.singles_rate();
            m.accidental_rate = aligned.accidental_count(window) as f64 / exposure_s;
            Ok(m)
        })
        .collect()
}

pub fn analyze(
    alice: &TimeTagStream,
    bob: &TimeTagStream,
    window_ps: f64,
    delays: &DelayTable,
    bell: BellState,
) -> Result<EmpiricalKeyMetrics> {
    Ok(analyze_windows(alice, bob, &[window_ps], delays, bell)?.remove(0))
}
