//! Joint outcome statistics over all detector pairings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::coincidence::Coincidence;

pub const OUTCOME_LABELS: [&str; 4] = ["H", "V", "D", "A"];

/// Coincidence counts indexed by (Alice detector, Bob detector), with
/// detectors ordered H, V, D, A.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub counts: [[u64; 4]; 4],
}

impl CorrelationMatrix {
    pub fn from_coincidences(pairs: &[Coincidence]) -> Self {
        let mut counts = [[0; 4]; 4];
        for c in pairs {
            counts[c.alice.detector as usize][c.bob.detector as usize] += 1;
        }
        Self { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Counts in the 2×2 block of Alice basis `alice_basis`, Bob basis `bob_basis`
    /// (0 = HV, 1 = AD).
    pub fn block_total(&self, alice_basis: usize, bob_basis: usize) -> u64 {
        let mut sum = 0;
        for i in 0..2 {
            for j in 0..2 {
                sum += self.counts[2 * alice_basis + i][2 * bob_basis + j];
            }
        }
        sum
    }

    /// Entry probability normalized within its basis block, 0 for an empty block.
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        let n = self.block_total(i / 2, j / 2);
        if n == 0 {
            0.0
        } else {
            self.counts[i][j] as f64 / n as f64
        }
    }

    /// Binomial standard error of [`Self::probability`], with the estimate
    /// kept within `[1/n, 1 − 1/n]` so that empty or full entries still get a
    /// nonzero error.
    pub fn standard_error(&self, i: usize, j: usize) -> f64 {
        let n = self.block_total(i / 2, j / 2) as f64;
        if n == 0.0 {
            return f64::INFINITY;
        }
        let p = self
            .probability(i, j)
            .clamp(1.0 / n, (1.0 - 1.0 / n).max(1.0 / n));
        (p * (1.0 - p) / n).sqrt()
    }

    pub fn probabilities(&self) -> [[f64; 4]; 4] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.probability(i, j)))
    }

    /// CSV with a header row of Bob outcomes and one row per Alice outcome.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("alice\\bob");
        for label in OUTCOME_LABELS {
            out.push(',');
            out.push_str(label);
        }
        out.push('\n');
        for (i, label) in OUTCOME_LABELS.iter().enumerate() {
            out.push_str(label);
            for j in 0..4 {
                let _ = write!(out, ",{:.6}", self.probability(i, j));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::SimTime;
    use crate::optics::{Party, TimeTag};

    fn pair(a: u8, b: u8) -> Coincidence {
        let tag = |node, detector| TimeTag {
            node,
            detector,
            timestamp: SimTime(0),
        };
        Coincidence {
            alice: tag(Party::Alice, a),
            bob: tag(Party::Bob, b),
        }
    }

    #[test]
    fn blocks_normalize_separately() {
        let pairs = vec![pair(0, 1), pair(1, 0), pair(2, 2), pair(2, 2), pair(0, 2)];
        let m = CorrelationMatrix::from_coincidences(&pairs);
        assert_eq!(m.total(), 5);
        assert_eq!(m.probability(0, 1), 0.5);
        assert_eq!(m.probability(2, 2), 1.0);
        assert_eq!(m.probability(0, 2), 1.0);
        assert_eq!(m.probability(3, 0), 0.0);
        assert!(m.standard_error(3, 0).is_infinite());
        let csv = m.to_csv();
        assert!(csv.starts_with("alice\\bob,H,V,D,A\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
