//! Histograms of Bob-minus-Alice arrival differences and peak analysis.

use serde::{Deserialize, Serialize};

use crate::optics::{DelayTable, TimeTag};

use super::protocol::TimeTagStream;

/// Counts of time differences in equal bins, with bin 0 centred on
/// `start_ps + bin_width_ps/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceHistogram {
    pub bin_width_ps: u64,
    pub start_ps: i64,
    pub counts: Vec<u64>,
}

/// A coincidence peak found above the flat accidental background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    /// Centroid of the background-subtracted peak.
    pub offset_ps: f64,
    /// Background-subtracted height, counts per bin.
    pub height: f64,
    pub fwhm_ps: f64,
    /// Background-subtracted counts within ±1.5 FWHM of the peak.
    pub net_counts: f64,
    pub background_per_bin: f64,
}

/// Thresholds a peak must clear to count as significant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakCriteria {
    /// Height above background in units of the background's Poisson sigma.
    pub min_significance: f64,
    pub min_net_counts: f64,
}

impl Default for PeakCriteria {
    fn default() -> Self {
        Self {
            min_significance: 5.0,
            min_net_counts: 50.0,
        }
    }
}

impl CoincidenceHistogram {
    /// Bins of `bin_width_ps` covering `[-half_range_ps, half_range_ps]`, with
    /// one bin centred on zero.
    pub fn centered(bin_width_ps: u64, half_range_ps: u64) -> Self {
        assert!(bin_width_ps > 0, "bin width must be positive");
        let half_bins = half_range_ps.div_ceil(bin_width_ps) as i64;
        let w = bin_width_ps as i64;
        Self {
            bin_width_ps,
            start_ps: -half_bins * w - w / 2,
            counts: vec![0; (2 * half_bins + 1) as usize],
        }
    }

    pub fn end_ps(&self) -> i64 {
        self.start_ps + (self.counts.len() as u64 * self.bin_width_ps) as i64
    }

    pub fn add(&mut self, delta_ps: i64) {
        if delta_ps < self.start_ps || delta_ps >= self.end_ps() {
            return;
        }
        let bin = ((delta_ps - self.start_ps) as u64 / self.bin_width_ps) as usize;
        self.counts[bin] += 1;
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.start_ps as f64 + (i as f64 + 0.5) * self.bin_width_ps as f64
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Median bin count, a background level that ignores a narrow peak.
    pub fn background(&self) -> f64 {
        if self.counts.is_empty() {
            return 0.0;
        }
        let mut sorted = self.counts.clone();
        sorted.sort_unstable();
        let n = sorted.len();
        if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) as f64
        }
    }

    /// Locates the tallest peak and measures its width. `None` when nothing
    /// clears `criteria`.
    pub fn peak(&self, criteria: &PeakCriteria) -> Option<Peak> {
        let n = self.counts.len();
        if n < 3 {
            return None;
        }
        let background = self.background();
        let net: Vec<f64> = self.counts.iter().map(|&c| c as f64 - background).collect();
        let raw_max = (0..n).max_by(|&a, &b| net[a].total_cmp(&net[b]))?;
        let raw_height = net[raw_max];
        if raw_height <= 0.0 || raw_height < criteria.min_significance * background.max(1.0).sqrt()
        {
            return None;
        }

        // A lone noisy bin can outgrow the true apex of a broad, sparse peak,
        // so broad peaks are anchored on a moving average instead.
        let smooth = moving_average(&net, SMOOTHING_HALF_WIDTH);
        let smax = (0..n).max_by(|&a, &b| smooth[a].total_cmp(&smooth[b]))?;
        let above = contiguous_above(&smooth, smax, smooth[smax] / 2.0);
        let wide = above.len() >= 5 + 2 * SMOOTHING_HALF_WIDTH;
        let (imax, height) = if wide {
            let height = log_parabola_height(&net, &above)
                .or_else(|| log_parabola_height(&smooth, &above))
                .unwrap_or(smooth[smax]);
            (smax, height)
        } else {
            (raw_max, raw_height)
        };
        let left = half_crossing(&net, imax, height, Direction::Left, wide);
        let right = half_crossing(&net, imax, height, Direction::Right, wide);
        let w = self.bin_width_ps as f64;
        let fwhm_ps = ((right - left) * w).max(0.0);

        let reach = ((1.5 * fwhm_ps / w).ceil() as usize).max(1);
        let lo = imax.saturating_sub(reach);
        let hi = (imax + reach).min(n - 1);
        let (mut weight, mut moment) = (0.0, 0.0);
        for i in lo..=hi {
            weight += net[i];
            moment += net[i] * self.bin_center(i);
        }
        if weight < criteria.min_net_counts || weight <= 0.0 {
            return None;
        }
        Some(Peak {
            offset_ps: moment / weight,
            height,
            fwhm_ps,
            net_counts: weight,
            background_per_bin: background,
        })
    }
}

const SMOOTHING_HALF_WIDTH: usize = 2;

fn moving_average(values: &[f64], half_width: usize) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half_width);
            let hi = (i + half_width).min(values.len() - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

fn contiguous_above(net: &[f64], imax: usize, level: f64) -> Vec<usize> {
    let mut lo = imax;
    while lo > 0 && net[lo - 1] > level {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < net.len() && net[hi + 1] > level {
        hi += 1;
    }
    (lo..=hi).collect()
}

/// Least-squares fit of `ln y = a + b x + c x²` over `bins`; returns the apex.
fn log_parabola_height(net: &[f64], bins: &[usize]) -> Option<f64> {
    let x0 = bins[bins.len() / 2] as f64;
    let mut rows = Vec::with_capacity(bins.len() * 3);
    let mut rhs = Vec::with_capacity(bins.len());
    for &i in bins {
        if net[i] <= 0.0 {
            return None;
        }
        let x = i as f64 - x0;
        rows.extend_from_slice(&[1.0, x, x * x]);
        rhs.push(net[i].ln());
    }
    let a = nalgebra::DMatrix::from_row_slice(bins.len(), 3, &rows);
    let y = nalgebra::DVector::from_vec(rhs);
    let coef = a.svd(true, true).solve(&y, 1e-12).ok()?;
    let (c0, c1, c2) = (coef[0], coef[1], coef[2]);
    if c2 >= 0.0 {
        return None;
    }
    Some((c0 - c1 * c1 / (4.0 * c2)).exp())
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Left,
    Right,
}

/// Flank levels, as fractions of the peak height, used for the line fit.
const FLANK_LOW: f64 = 0.2;
const FLANK_HIGH: f64 = 0.8;

/// Fractional bin index where the peak flank crosses half of `height`. On
/// wide peaks a quadratic is fitted to the flank between 20% and 80% of the
/// height; narrow peaks use two-point interpolation.
fn half_crossing(net: &[f64], imax: usize, height: f64, dir: Direction, wide: bool) -> f64 {
    let half = height / 2.0;
    let n = net.len() as isize;
    let step: isize = if dir == Direction::Left { -1 } else { 1 };
    let mut i = imax as isize;
    while i + step >= 0 && i + step < n && net[i as usize] >= half {
        i += step;
    }
    let outer = i;
    let inner = i - step;
    let interpolate = || {
        let (yo, yi) = (net[outer as usize], net[inner as usize]);
        if (yi - yo).abs() < f64::EPSILON {
            outer as f64
        } else {
            inner as f64 + (outer - inner) as f64 * (yi - half) / (yi - yo)
        }
    };
    if !wide {
        return interpolate();
    }
    let mut pts = Vec::new();
    let mut k = imax as isize;
    while k >= 0 && k < n {
        let y = net[k as usize];
        if y < FLANK_LOW * height {
            break;
        }
        if y <= FLANK_HIGH * height {
            pts.push((k as f64, y));
        }
        k += step;
    }
    if pts.len() < 3 {
        return interpolate();
    }
    flank_crossing(&pts, half, step).unwrap_or_else(interpolate)
}

/// Fits `y = a + b·u + c·u²` (with `u` centred on the flank) and returns the
/// root of `y = half` that lies on the flank.
fn flank_crossing(pts: &[(f64, f64)], half: f64, step: isize) -> Option<f64> {
    let m = pts.len();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m as f64;
    let mut rows = Vec::with_capacity(3 * m);
    for &(x, _) in pts {
        let u = x - mx;
        rows.extend_from_slice(&[1.0, u, u * u]);
    }
    let a = nalgebra::DMatrix::from_row_slice(m, 3, &rows);
    let y = nalgebra::DVector::from_iterator(m, pts.iter().map(|p| p.1 - half));
    let coef = a.svd(true, true).solve(&y, 1e-12).ok()?;
    let (c0, c1, c2) = (coef[0], coef[1], coef[2]);
    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.0 - mx), hi.max(p.0 - mx))
        });
    let on_flank = |u: f64| {
        let falling = (c1 + 2.0 * c2 * u) * (step as f64) < 0.0;
        falling && u >= lo - 1.0 && u <= hi + 1.0
    };
    let roots: Vec<f64> = if c2.abs() < 1e-12 * c1.abs().max(1e-300) {
        vec![-c0 / c1]
    } else {
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        vec![(-c1 + sq) / (2.0 * c2), (-c1 - sq) / (2.0 * c2)]
    };
    roots
        .into_iter()
        .find(|&u| u.is_finite() && on_flank(u))
        .map(|u| u + mx)
}

/// One histogram per (Alice detector, Bob detector) pairing, of
/// `t_B − t_A` after delay correction, for every pair of tags within
/// `half_range_ps`.
pub fn pairing_histograms(
    alice: &TimeTagStream,
    bob: &TimeTagStream,
    delays: &DelayTable,
    bin_width_ps: u64,
    half_range_ps: u64,
) -> [[CoincidenceHistogram; 4]; 4] {
    let mut hists: [[CoincidenceHistogram; 4]; 4] = std::array::from_fn(|_| {
        std::array::from_fn(|_| CoincidenceHistogram::centered(bin_width_ps, half_range_ps))
    });
    let correct = |tag: &TimeTag| tag.timestamp.as_ps() as i64 - delays.get(tag.node, tag.detector);
    let mut a: Vec<(i64, u8)> = alice
        .tags
        .iter()
        .map(|t| (correct(t), t.detector))
        .collect();
    let mut b: Vec<(i64, u8)> = bob.tags.iter().map(|t| (correct(t), t.detector)).collect();
    a.sort_unstable();
    b.sort_unstable();
    let reach = half_range_ps as i64 + bin_width_ps as i64;
    let mut start = 0;
    for &(ta, da) in &a {
        while start < b.len() && b[start].0 < ta - reach {
            start += 1;
        }
        for &(tb, db) in &b[start..] {
            if tb > ta + reach {
                break;
            }
            hists[da as usize][db as usize].add(tb - ta);
        }
    }
    hists
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_histogram(
        center: f64,
        sigma: f64,
        n: usize,
        background: u64,
        bin: u64,
    ) -> CoincidenceHistogram {
        let mut h = CoincidenceHistogram::centered(bin, 50_000);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Normal::new(center, sigma).unwrap();
        for _ in 0..n {
            h.add(d.sample(&mut rng).round() as i64);
        }
        for c in h.counts.iter_mut() {
            *c += background;
        }
        h
    }

    #[test]
    fn centered_bins() {
        let h = CoincidenceHistogram::centered(100, 50_000);
        assert_eq!(h.counts.len(), 1001);
        assert_eq!(h.bin_center(500), 0.0);
        let mut h = h;
        h.add(-50);
        h.add(49);
        h.add(50);
        assert_eq!(h.counts[500], 2);
        assert_eq!(h.counts[501], 1);
        h.add(1_000_000);
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn peak_position_and_width() {
        let sigma = 1600.0 / (8.0 * 2f64.ln()).sqrt();
        let h = gaussian_histogram(3500.0, sigma, 200_000, 20, 100);
        let p = h.peak(&PeakCriteria::default()).unwrap();
        assert!((p.offset_ps - 3500.0).abs() < 20.0, "{p:?}");
        assert!((p.fwhm_ps - 1600.0).abs() / 1600.0 < 0.02, "{p:?}");
        assert!((p.background_per_bin - 20.0).abs() < 1.0);
    }

    #[test]
    fn narrow_peak_width() {
        let sigma = 300.0 / (8.0 * 2f64.ln()).sqrt();
        let h = gaussian_histogram(0.0, sigma, 100_000, 0, 100);
        let p = h.peak(&PeakCriteria::default()).unwrap();
        assert!((p.fwhm_ps - 300.0).abs() < 100.0, "{p:?}");
    }

    #[test]
    fn lone_spike_inside_sparse_peak_does_not_move_it() {
        let sigma = 1600.0 / (8.0 * 2f64.ln()).sqrt();
        let mut h = gaussian_histogram(0.0, sigma, 600, 0, 100);
        h.counts[495] += 40;
        let p = h.peak(&PeakCriteria::default()).unwrap();
        assert!(p.offset_ps.abs() < 100.0, "{p:?}");
        assert!(p.fwhm_ps > 1000.0, "{p:?}");
    }

    #[test]
    fn flat_histogram_has_no_peak() {
        let mut h = CoincidenceHistogram::centered(100, 5_000);
        h.counts.iter_mut().for_each(|c| *c = 40);
        assert!(h.peak(&PeakCriteria::default()).is_none());
    }
}
