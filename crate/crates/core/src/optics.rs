//! Stochastic models of the physical layer: pair source, lossy fiber,
//! passive basis choice, and single-photon detectors with efficiency,
//! timing jitter, non-paralyzable dead time and dark counts.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_range, Error, Result};
use crate::events::SimTime;
use crate::states::{self, Basis, BellState};

/// Converts a loss in dB to a linear transmission.
pub fn transmission_from_db(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

/// Standard deviation of the Gaussian that turns a FWHM into a spread.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

/// Per-arm jitter that gives the Alice−Bob difference a FWHM of `resolution_fwhm_ps`.
pub fn arm_jitter_sigma_ps(resolution_fwhm_ps: f64) -> f64 {
    fwhm_to_sigma(resolution_fwhm_ps) / std::f64::consts::SQRT_2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

impl Party {
    pub fn code(self) -> char {
        match self {
            Party::Alice => 'A',
            Party::Bob => 'B',
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Party::Alice => "alice",
            Party::Bob => "bob",
        }
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Detector index `0..4`: `2·basis + bit`, i.e. 0 = H, 1 = V, 2 = D, 3 = A.
pub fn detector_index(basis: Basis, bit: u8) -> u8 {
    (basis.index() as u8) * 2 + bit
}

pub fn detector_basis(index: u8) -> Basis {
    Basis::from_index((index / 2) as usize)
}

pub fn detector_bit(index: u8) -> u8 {
    index % 2
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeTag {
    pub node: Party,
    pub detector: u8,
    pub timestamp: SimTime,
}

impl TimeTag {
    pub fn basis(&self) -> Basis {
        detector_basis(self.detector)
    }

    pub fn bit(&self) -> u8 {
        detector_bit(self.detector)
    }
}

/// A value for each of the four detectors at each party.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerDetector<T> {
    pub alice: [T; 4],
    pub bob: [T; 4],
}

impl<T: Copy> PerDetector<T> {
    pub fn get(&self, party: Party, detector: u8) -> T {
        match party {
            Party::Alice => self.alice[detector as usize],
            Party::Bob => self.bob[detector as usize],
        }
    }

    pub fn party(&self, party: Party) -> &[T; 4] {
        match party {
            Party::Alice => &self.alice,
            Party::Bob => &self.bob,
        }
    }
}

/// Per-detector timing offsets in picoseconds.
pub type DelayTable = PerDetector<i64>;

impl DelayTable {
    pub fn zero() -> Self {
        Self::default()
    }
}

/// Detector characteristics shared by one party's detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    /// Maximum detection efficiency.
    pub efficiency: f64,
    pub dead_time_ps: u64,
    /// Dark counts per second summed over the party's detectors.
    pub dark_rate_cps: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency: 0.60,
            dead_time_ps: 45_000,
            dark_rate_cps: 500.0,
        }
    }
}

/// The configuration shared by the simulator and the rate model.
///
/// `Default` is the measured operating point of the laboratory link: 1.5·10⁶
/// pairs/s, 12 dB per arm, 60 % detectors with 45 ns dead time, 500/1800 dark
/// counts per second, 1600 ps detection resolution and 94 % visibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentParams {
    pub brightness_cps: f64,
    pub loss_alice_db: f64,
    pub loss_bob_db: f64,
    pub alice_detectors: DetectorParams,
    pub bob_detectors: DetectorParams,
    pub detectors_per_party: u32,
    /// FWHM of the Alice−Bob arrival-time difference.
    pub detection_resolution_ps: f64,
    pub coincidence_window_ps: f64,
    /// Werner fidelity of emitted pairs, used by the simulator.
    pub source_fidelity: f64,
    /// Bit-flip probability from imperfect optics, used by the rate model.
    pub optics_error_prob: f64,
    pub bell_state: BellState,
    /// Fiber delay from the source to either party.
    pub propagation_delay_ps: u64,
    /// Timing offset added to every tag of a detector.
    pub detector_delays_ps: DelayTable,
    /// Extra Gaussian jitter (FWHM) of individual detectors, added in quadrature.
    pub detector_jitter_fwhm_ps: PerDetector<f64>,
    /// Duration of a continuous run.
    pub acquisition_s: f64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self::table1()
    }
}

impl ExperimentParams {
    pub const TABLE1_VISIBILITY: f64 = 0.94;

    pub fn table1() -> Self {
        let qber = (1.0 - Self::TABLE1_VISIBILITY) / 2.0;
        Self {
            brightness_cps: 1.5e6,
            loss_alice_db: 12.0,
            loss_bob_db: 12.0,
            alice_detectors: DetectorParams::default(),
            bob_detectors: DetectorParams {
                dark_rate_cps: 1800.0,
                ..DetectorParams::default()
            },
            detectors_per_party: 4,
            detection_resolution_ps: 1600.0,
            coincidence_window_ps: 2000.0,
            source_fidelity: 1.0 - 1.5 * qber,
            optics_error_prob: qber,
            bell_state: BellState::PsiPlus,
            propagation_delay_ps: 50_000,
            detector_delays_ps: DelayTable::zero(),
            detector_jitter_fwhm_ps: PerDetector::default(),
            acquisition_s: 1.0,
        }
    }

    /// Sets the source fidelity and the optics error probability from one visibility,
    /// so simulator and rate model describe the same imperfection.
    pub fn with_visibility(mut self, visibility: f64) -> Result<Self> {
        let s = states::FidelityScalars::from_visibility(visibility)?;
        self.source_fidelity = s.fidelity;
        self.optics_error_prob = s.qber;
        Ok(self)
    }

    pub fn visibility(&self) -> f64 {
        1.0 - 2.0 * self.optics_error_prob
    }

    pub fn detectors(&self, party: Party) -> &DetectorParams {
        match party {
            Party::Alice => &self.alice_detectors,
            Party::Bob => &self.bob_detectors,
        }
    }

    pub fn loss_db(&self, party: Party) -> f64 {
        match party {
            Party::Alice => self.loss_alice_db,
            Party::Bob => self.loss_bob_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.brightness_cps > 0.0) || !self.brightness_cps.is_finite() {
            return Err(Error::Domain {
                name: "brightness_cps",
                value: self.brightness_cps,
                range: "(0, inf)",
            });
        }
        ensure_range(
            "loss_alice_db",
            self.loss_alice_db,
            0.0,
            f64::INFINITY,
            "[0, inf]",
        )?;
        ensure_range(
            "loss_bob_db",
            self.loss_bob_db,
            0.0,
            f64::INFINITY,
            "[0, inf]",
        )?;
        for (name_eff, name_dark, d) in [
            (
                "alice_detectors.efficiency",
                "alice_detectors.dark_rate_cps",
                &self.alice_detectors,
            ),
            (
                "bob_detectors.efficiency",
                "bob_detectors.dark_rate_cps",
                &self.bob_detectors,
            ),
        ] {
            ensure_range(name_eff, d.efficiency, 0.0, 1.0, "[0, 1]")?;
            ensure_range(name_dark, d.dark_rate_cps, 0.0, f64::MAX, "[0, inf)")?;
        }
        if self.detectors_per_party != 4 {
            return Err(Error::Domain {
                name: "detectors_per_party",
                value: self.detectors_per_party as f64,
                range: "{4}",
            });
        }
        ensure_range(
            "detection_resolution_ps",
            self.detection_resolution_ps,
            0.0,
            f64::MAX,
            "[0, inf)",
        )?;
        if !(self.coincidence_window_ps > 0.0) || !self.coincidence_window_ps.is_finite() {
            return Err(Error::Domain {
                name: "coincidence_window_ps",
                value: self.coincidence_window_ps,
                range: "(0, inf)",
            });
        }
        ensure_range(
            "source_fidelity",
            self.source_fidelity,
            0.25,
            1.0,
            "[1/4, 1]",
        )?;
        ensure_range(
            "optics_error_prob",
            self.optics_error_prob,
            0.0,
            0.5,
            "[0, 1/2]",
        )?;
        for j in self
            .detector_jitter_fwhm_ps
            .alice
            .iter()
            .chain(&self.detector_jitter_fwhm_ps.bob)
        {
            ensure_range("detector_jitter_fwhm_ps", *j, 0.0, f64::MAX, "[0, inf)")?;
        }
        ensure_range(
            "acquisition_s",
            self.acquisition_s,
            0.0,
            f64::MAX,
            "[0, inf)",
        )?;
        Ok(())
    }
}

/// Lazily generated arrival times of a homogeneous Poisson process on `[0, end)`.
pub struct PoissonTimes<R> {
    gaps: Option<Exp<f64>>,
    end: f64,
    t: f64,
    rng: R,
}

impl<R: Rng> PoissonTimes<R> {
    pub fn new(rate_cps: f64, duration: SimTime, rng: R) -> Self {
        let gaps = (rate_cps > 0.0)
            .then(|| Exp::new(rate_cps / SimTime::PS_PER_SECOND).expect("positive rate"));
        Self {
            gaps,
            end: duration.as_ps() as f64,
            t: 0.0,
            rng,
        }
    }
}

impl<R: Rng> Iterator for PoissonTimes<R> {
    type Item = SimTime;

    fn next(&mut self) -> Option<SimTime> {
        let gaps = self.gaps?;
        self.t += gaps.sample(&mut self.rng);
        if self.t >= self.end {
            self.gaps = None;
            return None;
        }
        Some(SimTime(self.t as u64))
    }
}

/// Exactly `count` sorted uniform times on `[0, duration)`, generated one at a
/// time: given the previous order statistic `u`, the next of the `m` remaining
/// is `u + (1 − u)(1 − V^{1/m})`.
pub struct OrderedUniformTimes<R> {
    remaining: usize,
    fraction: f64,
    span: f64,
    rng: R,
}

impl<R: Rng> OrderedUniformTimes<R> {
    pub fn new(count: usize, duration: SimTime, rng: R) -> Self {
        Self {
            remaining: count,
            fraction: 0.0,
            span: duration.as_ps() as f64,
            rng,
        }
    }
}

impl<R: Rng> Iterator for OrderedUniformTimes<R> {
    type Item = SimTime;

    fn next(&mut self) -> Option<SimTime> {
        if self.remaining == 0 {
            return None;
        }
        let v: f64 = self.rng.random();
        let step = -(v.ln() / self.remaining as f64).exp_m1();
        self.fraction += (1.0 - self.fraction) * step;
        self.remaining -= 1;
        let t = (self.fraction * self.span).min(self.span - 1.0).max(0.0);
        Some(SimTime(t as u64))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

/// Emission times of a homogeneous Poisson process of rate `brightness_cps` on `[0, duration)`.
pub fn emit_pair_times<R: Rng + ?Sized>(
    brightness_cps: f64,
    duration: SimTime,
    rng: &mut R,
) -> Vec<SimTime> {
    PoissonTimes::new(brightness_cps, duration, rng).collect()
}

/// Exactly `count` emission times on `[0, duration)`: a Poisson process
/// conditioned on its count.
pub fn emit_fixed_pair_times<R: Rng + ?Sized>(
    count: usize,
    duration: SimTime,
    rng: &mut R,
) -> Vec<SimTime> {
    OrderedUniformTimes::new(count, duration, rng).collect()
}

/// A fiber arm with a fixed linear transmission.
#[derive(Debug, Clone, Copy)]
pub struct Fiber {
    pub transmission: f64,
}

impl Fiber {
    pub fn from_loss_db(loss_db: f64) -> Self {
        Self {
            transmission: transmission_from_db(loss_db),
        }
    }

    pub fn survives<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        rng.random::<f64>() < self.transmission
    }
}

pub fn fiber_survives<R: Rng + ?Sized>(loss_db: f64, rng: &mut R) -> bool {
    Fiber::from_loss_db(loss_db).survives(rng)
}

/// Passive 50:50 beam-splitter basis choice.
pub fn select_basis<R: Rng + ?Sized>(rng: &mut R) -> Basis {
    if rng.random::<bool>() {
        Basis::AD
    } else {
        Basis::HV
    }
}

/// A dark count with the detector it occurred on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DarkCount {
    pub time: SimTime,
    pub detector: u8,
}

/// Dark counts of one party: a Poisson process at `rate_cps`, each assigned to
/// one of the four detectors uniformly.
pub fn dark_count_times<R: Rng + ?Sized>(
    rate_cps: f64,
    duration: SimTime,
    rng: &mut R,
) -> Vec<DarkCount> {
    let times = emit_pair_times(rate_cps, duration, rng);
    times
        .into_iter()
        .map(|time| DarkCount {
            time,
            detector: rng.random_range(0..4u8),
        })
        .collect()
}

/// Dead-time state of one detector.
#[derive(Debug, Clone, Copy)]
pub struct Detector {
    pub node: Party,
    pub index: u8,
    last_tag: Option<SimTime>,
}

impl Detector {
    pub fn new(node: Party, index: u8) -> Self {
        Self {
            node,
            index,
            last_tag: None,
        }
    }

    pub fn last_tag(&self) -> Option<SimTime> {
        self.last_tag
    }

    /// Non-paralyzable dead time: a click is recorded only if it falls at least
    /// `dead_time` after the last recorded one.
    fn record(&mut self, at: SimTime, dead_time_ps: u64) -> Option<TimeTag> {
        if let Some(last) = self.last_tag {
            if at.as_ps() < last.as_ps().saturating_add(dead_time_ps) {
                return None;
            }
        }
        self.last_tag = Some(at);
        Some(TimeTag {
            node: self.node,
            detector: self.index,
            timestamp: at,
        })
    }

    /// A photon arriving at `arrival`: detected with probability `efficiency`,
    /// smeared by a Gaussian of `jitter_sigma_ps`, then subject to dead time.
    pub fn detect<R: Rng + ?Sized>(
        &mut self,
        arrival: SimTime,
        params: &DetectorParams,
        jitter_sigma_ps: f64,
        rng: &mut R,
    ) -> Option<TimeTag> {
        if rng.random::<f64>() >= params.efficiency {
            return None;
        }
        let at = if jitter_sigma_ps > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            let t = arrival.as_ps() as f64 + z * jitter_sigma_ps;
            SimTime(t.round().max(0.0) as u64)
        } else {
            arrival
        };
        self.record(at, params.dead_time_ps)
    }

    /// A dark click: no efficiency or jitter, but still blocked by dead time.
    pub fn dark_click(&mut self, at: SimTime, params: &DetectorParams) -> Option<TimeTag> {
        self.record(at, params.dead_time_ps)
    }
}
