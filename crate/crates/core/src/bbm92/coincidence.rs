//! One-to-one coincidence matching between the two parties' tag streams.

use crate::optics::{DelayTable, TimeTag};

use super::protocol::TimeTagStream;

/// An Alice click paired with a Bob click.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Coincidence {
    pub alice: TimeTag,
    pub bob: TimeTag,
}

impl Coincidence {
    /// Bob minus Alice, raw timestamps.
    pub fn delta_ps(&self) -> i64 {
        self.bob.timestamp.as_ps() as i64 - self.alice.timestamp.as_ps() as i64
    }
}

/// Both streams with per-detector delays removed and re-sorted, ready for
/// repeated matching at different windows.
#[derive(Debug, Clone)]
pub struct AlignedStreams {
    alice: Vec<(i64, TimeTag)>,
    bob: Vec<(i64, TimeTag)>,
}

fn corrected(stream: &TimeTagStream, delays: &DelayTable) -> Vec<(i64, TimeTag)> {
    let mut out: Vec<(i64, TimeTag)> = stream
        .tags
        .iter()
        .map(|tag| {
            (
                tag.timestamp.as_ps() as i64 - delays.get(tag.node, tag.detector),
                *tag,
            )
        })
        .collect();
    out.sort_by_key(|(t, tag)| (*t, tag.detector));
    out
}

impl AlignedStreams {
    pub fn new(alice: &TimeTagStream, bob: &TimeTagStream, delays: &DelayTable) -> Self {
        Self {
            alice: corrected(alice, delays),
            bob: corrected(bob, delays),
        }
    }

    pub fn alice_len(&self) -> usize {
        self.alice.len()
    }

    pub fn bob_len(&self) -> usize {
        self.bob.len()
    }

    /// Greedy matching: each Alice click in time order takes the earliest
    /// unused Bob click with `|t_B + shift − t_A| ≤ window/2`. Returns index
    /// pairs into the aligned streams.
    pub fn match_indices(&self, window_ps: f64, bob_shift_ps: i64) -> Vec<(usize, usize)> {
        let mut used = vec![false; self.bob.len()];
        let mut pairs = Vec::new();
        let mut start = 0;
        let outside = |delta: i64| 2.0 * delta.unsigned_abs() as f64 > window_ps;
        for (i, &(ta, _)) in self.alice.iter().enumerate() {
            while start < self.bob.len() {
                let delta = self.bob[start].0 + bob_shift_ps - ta;
                if used[start] || (delta < 0 && outside(delta)) {
                    start += 1;
                } else {
                    break;
                }
            }
            let mut k = start;
            while k < self.bob.len() {
                let delta = self.bob[k].0 + bob_shift_ps - ta;
                if delta > 0 && outside(delta) {
                    break;
                }
                if !used[k] {
                    used[k] = true;
                    pairs.push((i, k));
                    break;
                }
                k += 1;
            }
        }
        pairs
    }

    pub fn count(&self, window_ps: f64, bob_shift_ps: i64) -> usize {
        self.match_indices(window_ps, bob_shift_ps).len()
    }

    pub fn coincidences(&self, window_ps: f64) -> Vec<Coincidence> {
        self.coincidences_shifted(window_ps, 0)
    }

    pub fn coincidences_shifted(&self, window_ps: f64, bob_shift_ps: i64) -> Vec<Coincidence> {
        self.match_indices(window_ps, bob_shift_ps)
            .into_iter()
            .map(|(i, k)| Coincidence {
                alice: self.alice[i].1,
                bob: self.bob[k].1,
            })
            .collect()
    }

    /// Shift that moves Bob's stream far enough that no true pair can land
    /// inside the window, leaving only accidental coincidences.
    pub fn accidental_shift_ps(window_ps: f64) -> i64 {
        (2.0 * window_ps).ceil() as i64 + 100_000
    }

    /// Accidental-coincidence count estimated from a time-shifted matching.
    pub fn accidental_count(&self, window_ps: f64) -> usize {
        self.count(window_ps, Self::accidental_shift_ps(window_ps))
    }
}

/// Matches two streams after removing per-detector delays.
pub fn match_coincidences(
    alice: &TimeTagStream,
    bob: &TimeTagStream,
    window_ps: f64,
    delays: &DelayTable,
) -> Vec<Coincidence> {
    AlignedStreams::new(alice, bob, delays).coincidences(window_ps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::SimTime;
    use crate::optics::Party;
    use proptest::prelude::*;

    fn stream(node: Party, times: &[u64]) -> TimeTagStream {
        let tags = times
            .iter()
            .map(|&t| TimeTag {
                node,
                detector: 0,
                timestamp: SimTime(t),
            })
            .collect();
        TimeTagStream::new(node, tags, 1.0)
    }

    #[test]
    fn window_boundary_is_closed() {
        let a = stream(Party::Alice, &[1000]);
        let b = stream(Party::Bob, &[1500]);
        let zero = DelayTable::zero();
        assert_eq!(match_coincidences(&a, &b, 1000.0, &zero).len(), 1);
        assert_eq!(match_coincidences(&a, &b, 999.0, &zero).len(), 0);
        let b = stream(Party::Bob, &[500]);
        assert_eq!(match_coincidences(&a, &b, 1000.0, &zero).len(), 1);
    }

    #[test]
    fn each_click_used_once() {
        let a = stream(Party::Alice, &[100, 110]);
        let b = stream(Party::Bob, &[105]);
        let m = match_coincidences(&a, &b, 100.0, &DelayTable::zero());
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].alice.timestamp, SimTime(100));
        let a = stream(Party::Alice, &[100, 110]);
        let b = stream(Party::Bob, &[90, 105]);
        assert_eq!(
            match_coincidences(&a, &b, 100.0, &DelayTable::zero()).len(),
            2
        );
    }

    #[test]
    fn delays_are_removed_before_matching() {
        let a = stream(Party::Alice, &[1_000]);
        let b = stream(Party::Bob, &[6_000]);
        let mut delays = DelayTable::zero();
        assert!(match_coincidences(&a, &b, 100.0, &delays).is_empty());
        delays.bob[0] = 5_000;
        assert_eq!(match_coincidences(&a, &b, 100.0, &delays).len(), 1);
    }

    proptest! {
        #[test]
        fn matching_is_one_to_one_and_within_window(
            mut ta in proptest::collection::vec(0u64..200_000, 0..60),
            mut tb in proptest::collection::vec(0u64..200_000, 0..60),
            window in 0.0f64..20_000.0,
        ) {
            ta.sort();
            tb.sort();
            let aligned = AlignedStreams::new(&stream(Party::Alice, &ta), &stream(Party::Bob, &tb), &DelayTable::zero());
            let pairs = aligned.match_indices(window, 0);
            let mut seen_a = std::collections::HashSet::new();
            let mut seen_b = std::collections::HashSet::new();
            for &(i, k) in &pairs {
                prop_assert!(seen_a.insert(i));
                prop_assert!(seen_b.insert(k));
                let d = ta[i] as f64 - tb[k] as f64;
                prop_assert!(2.0 * d.abs() <= window);
            }
            prop_assert!(pairs.len() <= ta.len().min(tb.len()));
            let wider = aligned.count(window * 2.0 + 1.0, 0);
            prop_assert!(wider >= pairs.len());
        }
    }
}
