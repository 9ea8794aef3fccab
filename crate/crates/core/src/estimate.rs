//! Recovering source brightness, detection resolution and optical error
//! probability from recorded time tags.

use serde::{Deserialize, Serialize};

use crate::bbm92::{
    pairing_histograms, sift, synchronize, AlignedStreams, PeakCriteria, SyncConfig, TimeTagStream,
};
use crate::error::{Error, Result};
use crate::optics::{detector_index, DelayTable};
use crate::states::{Basis, BellState};

/// `(S_A − D_A)(S_B − D_B)/R_coinc`: the brightness implied by the
/// coincidence-to-singles ratio, with dark counts removed from the singles.
pub fn car_brightness(
    singles_alice: f64,
    dark_alice: f64,
    singles_bob: f64,
    dark_bob: f64,
    coincidence_rate: f64,
) -> Result<f64> {
    if !(coincidence_rate > 0.0) {
        return Err(Error::UndefinedRate("the CAR brightness"));
    }
    Ok((singles_alice - dark_alice) * (singles_bob - dark_bob) / coincidence_rate)
}

/// One brightness estimate at one coincidence window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrightnessPoint {
    pub window_ps: f64,
    pub brightness_cps: f64,
}

/// Straight-line fit of brightness against window over the plateau.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrightnessEstimate {
    pub points: Vec<BrightnessPoint>,
    pub fit_window_ps: (f64, f64),
    /// Fitted value extrapolated to zero window, where accidentals vanish.
    pub brightness_cps: f64,
    pub slope_cps_per_ps: f64,
    pub residual_rms_cps: f64,
    /// Relative change of the fitted line across the fit window.
    pub relative_drift: f64,
    pub slope_warning: bool,
}

pub const MIN_FIT_POINTS: usize = 5;
/// Drift across the fit window above which the plateau is flagged as sloped.
pub const SLOPE_WARNING_DRIFT: f64 = 0.10;

/// Ordinary least squares over the points inside `window_ps` (inclusive).
pub fn fit_brightness(
    points: &[BrightnessPoint],
    window_ps: (f64, f64),
) -> Result<BrightnessEstimate> {
    let inside: Vec<&BrightnessPoint> = points
        .iter()
        .filter(|p| p.window_ps >= window_ps.0 && p.window_ps <= window_ps.1)
        .collect();
    if inside.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientStatistics(format!(
            "{} brightness points in the fit window, need {MIN_FIT_POINTS}",
            inside.len()
        )));
    }
    let n = inside.len() as f64;
    let mx = inside.iter().map(|p| p.window_ps).sum::<f64>() / n;
    let my = inside.iter().map(|p| p.brightness_cps).sum::<f64>() / n;
    let sxx: f64 = inside.iter().map(|p| (p.window_ps - mx).powi(2)).sum();
    let sxy: f64 = inside
        .iter()
        .map(|p| (p.window_ps - mx) * (p.brightness_cps - my))
        .sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let residual_rms_cps = (inside
        .iter()
        .map(|p| (p.brightness_cps - intercept - slope * p.window_ps).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let lo = inside
        .iter()
        .map(|p| p.window_ps)
        .fold(f64::INFINITY, f64::min);
    let hi = inside
        .iter()
        .map(|p| p.window_ps)
        .fold(f64::NEG_INFINITY, f64::max);
    let relative_drift = (slope * (hi - lo) / (intercept + slope * lo)).abs();
    Ok(BrightnessEstimate {
        points: points.to_vec(),
        fit_window_ps: window_ps,
        brightness_cps: intercept,
        slope_cps_per_ps: slope,
        residual_rms_cps,
        relative_drift,
        slope_warning: relative_drift > SLOPE_WARNING_DRIFT,
    })
}

/// Share of accidentals in the coincidences that closes the plateau.
pub const PLATEAU_ACCIDENTAL_FRACTION: f64 = 0.05;
/// The plateau opens at this many detection resolutions.
pub const PLATEAU_START_RESOLUTIONS: f64 = 4.0;

/// `[4·t_r, t_c*]` where `t_c*` is the window at which accidentals
/// `S_A·S_B·t_c` reach [`PLATEAU_ACCIDENTAL_FRACTION`] of the true rate.
pub fn default_fit_window(
    singles_alice: f64,
    singles_bob: f64,
    true_rate: f64,
    resolution_ps: f64,
) -> Result<(f64, f64)> {
    let lo = PLATEAU_START_RESOLUTIONS * resolution_ps;
    let hi = PLATEAU_ACCIDENTAL_FRACTION * true_rate / (singles_alice * singles_bob) * 1e12;
    if !(hi > lo) {
        return Err(Error::InsufficientStatistics(format!(
            "no plateau: accidentals reach {:.0}% of true coincidences at {hi:.0} ps, below {lo:.0} ps",
            PLATEAU_ACCIDENTAL_FRACTION * 100.0
        )));
    }
    Ok((lo, hi))
}

/// Brightness points at `windows_ps` computed from measured singles and coincidences.
pub fn brightness_points(
    aligned: &AlignedStreams,
    exposure_s: f64,
    dark_alice: f64,
    dark_bob: f64,
    windows_ps: &[f64],
) -> Result<Vec<BrightnessPoint>> {
    let sa = aligned.alice_len() as f64 / exposure_s;
    let sb = aligned.bob_len() as f64 / exposure_s;
    windows_ps
        .iter()
        .map(|&w| {
            let rate = aligned.count(w, 0) as f64 / exposure_s;
            Ok(BrightnessPoint {
                window_ps: w,
                brightness_cps: car_brightness(sa, dark_alice, sb, dark_bob, rate)?,
            })
        })
        .collect()
}

pub const FIT_POINTS: usize = 8;

/// Brightness from the plateau fit over the default window, sampled at
/// [`FIT_POINTS`] evenly spaced windows.
pub fn estimate_brightness(
    alice: &TimeTagStream,
    bob: &TimeTagStream,
    delays: &DelayTable,
    dark_alice: f64,
    dark_bob: f64,
    resolution_ps: f64,
) -> Result<BrightnessEstimate> {
    let exposure = alice.acquisition_s;
    if !(exposure > 0.0) {
        return Err(Error::InsufficientStatistics(
            "zero acquisition time".into(),
        ));
    }
    let aligned = AlignedStreams::new(alice, bob, delays);
    let probe = PLATEAU_START_RESOLUTIONS * resolution_ps;
    let true_rate = aligned.count(probe, 0) as f64 / exposure;
    if true_rate <= 0.0 {
        return Err(Error::InsufficientStatistics("no coincidences".into()));
    }
    let window = default_fit_window(
        alice.singles_rate(),
        bob.singles_rate(),
        true_rate,
        resolution_ps,
    )?;
    let step = (window.1 - window.0) / (FIT_POINTS - 1) as f64;
    let windows: Vec<f64> = (0..FIT_POINTS)
        .map(|i| window.0 + step * i as f64)
        .collect();
    let points = brightness_points(&aligned, exposure, dark_alice, dark_bob, &windows)?;
    fit_brightness(&points, (window.0, window.1 * (1.0 + 1e-12)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Config {
    pub bin_width_ps: u64,
    pub half_range_ps: u64,
    /// Net counts a peak needs for its width to be trusted.
    pub min_peak_counts: f64,
}

impl Default for G2Config {
    fn default() -> Self {
        Self {
            bin_width_ps: 100,
            half_range_ps: 50_000,
            min_peak_counts: 1_000.0,
        }
    }
}

/// Peak width for one detector pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairingWidth {
    pub alice_detector: u8,
    pub bob_detector: u8,
    pub fwhm_ps: f64,
    pub net_counts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionEstimate {
    pub pairings: Vec<PairingWidth>,
    /// Mean FWHM over the pairings.
    pub detection_resolution_ps: f64,
}

/// Detector pairings that see the same basis and the correlated bit of `bell`.
pub fn corresponding_pairings(bell: BellState) -> Vec<(u8, u8)> {
    let mut out = Vec::with_capacity(4);
    for basis in Basis::ALL {
        let flip = u8::from(!bell.correlated_in(basis));
        for bit in 0..2u8 {
            out.push((
                detector_index(basis, bit),
                detector_index(basis, bit ^ flip),
            ));
        }
    }
    out
}

fn criteria(config: &G2Config) -> PeakCriteria {
    PeakCriteria {
        min_significance: 5.0,
        min_net_counts: config.min_peak_counts,
    }
}

/// FWHM of the arrival-difference peak between two detectors.
pub fn g2_fwhm(
    alice: &TimeTagStream,
    bob: &TimeTagStream,
    delays: &DelayTable,
    pairing: (u8, u8),
    config: &G2Config,
) -> Result<PairingWidth> {
    let hists = pairing_histograms(
        alice,
        bob,
        delays,
        config.bin_width_ps,
        config.half_range_ps,
    );
    pairing_width(&hists, pairing, config)
}

fn pairing_width(
    hists: &[[crate::bbm92::CoincidenceHistogram; 4]; 4],
    (i, j): (u8, u8),
    config: &G2Config,
) -> Result<PairingWidth> {
    let peak = hists[i as usize][j as usize]
        .peak(&criteria(config))
        .ok_or_else(|| {
            Error::InsufficientStatistics(format!("no significant peak for detectors A{i}/B{j}"))
        })?;
    Ok(PairingWidth {
        alice_detector: i,
        bob_detector: j,
        fwhm_ps: peak.fwhm_ps,
        net_counts: peak.net_counts,
    })
}

/// Detection resolution as the mean peak FWHM over the corresponding pairings of `bell`.
pub fn estimate_detection_resolution(
    alice: &TimeTagStream,
    bob: &TimeTagStream,
    delays: &DelayTable,
    bell: BellState,
    config: &G2Config,
) -> Result<ResolutionEstimate> {
    let hists = pairing_histograms(
        alice,
        bob,
        delays,
        config.bin_width_ps,
        config.half_range_ps,
    );
    let pairings = corresponding_pairings(bell)
        .into_iter()
        .map(|p| pairing_width(&hists, p, config))
        .collect::<Result<Vec<_>>>()?;
    let mean = pairings.iter().map(|p| p.fwhm_ps).sum::<f64>() / pairings.len() as f64;
    Ok(ResolutionEstimate {
        pairings,
        detection_resolution_ps: mean,
    })
}

pub const PO_REFERENCE_WINDOW_PS: f64 = 1_000.0;
pub const PO_MIN_BITS: usize = 1_000;
/// Accidental share of coincidences above which the estimate is flagged as biased.
pub const PO_ACCIDENTAL_WARNING: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoEstimate {
    /// Optical error probability with the accidental contribution removed.
    pub p_o: f64,
    pub standard_error: f64,
    /// QBER of the sifted key at the reference window, accidentals included.
    pub qber_at_reference: f64,
    pub sifted_bits: usize,
    pub accidental_share: f64,
    pub warning: Option<String>,
}

/// The optical error probability from the sifted key at a 1 ns window.
/// Accidental coincidences, counted in a time-shifted matching, survive
/// sifting half the time and are wrong half of that; their share is taken
/// out of both the error and bit counts.
pub fn estimate_po(
    alice: &TimeTagStream,
    bob: &TimeTagStream,
    delays: &DelayTable,
    bell: BellState,
) -> Result<PoEstimate> {
    let aligned = AlignedStreams::new(alice, bob, delays);
    let coincidences = aligned.coincidences(PO_REFERENCE_WINDOW_PS);
    let key = sift(&coincidences, bell);
    if key.len() < PO_MIN_BITS {
        return Err(Error::InsufficientStatistics(format!(
            "{} sifted bits at 1 ns, need {PO_MIN_BITS}",
            key.len()
        )));
    }
    let n = key.len() as f64;
    let errors = key.errors() as f64;
    let accidentals = aligned.accidental_count(PO_REFERENCE_WINDOW_PS) as f64;
    let accidental_share = accidentals / coincidences.len() as f64;
    let true_bits = (n - accidentals / 2.0).max(1.0);
    let p_o = ((errors - accidentals / 4.0) / true_bits).clamp(0.0, 0.5);
    let warning = (accidental_share > PO_ACCIDENTAL_WARNING).then(|| {
        format!(
            "accidentals are {:.0}% of coincidences at 1 ns; p_o depends on their subtraction",
            accidental_share * 100.0
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(PoEstimate {
        p_o,
        standard_error: (p_o.max(1.0 / true_bits) * (1.0 - p_o) / true_bits).sqrt(),
        qber_at_reference: errors / n,
        sifted_bits: key.len(),
        accidental_share,
        warning,
    })
}

/// Inputs that do not come from the tags themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimateConfig {
    pub dark_alice_cps: f64,
    pub dark_bob_cps: f64,
    pub bell_state: BellState,
    /// Recover detector delays from the data before estimating.
    pub synchronize: bool,
    pub sync: SyncConfig,
    pub g2: G2Config,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            dark_alice_cps: 500.0,
            dark_bob_cps: 1_800.0,
            bell_state: BellState::PsiPlus,
            synchronize: true,
            sync: SyncConfig::default(),
            g2: G2Config::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub delays_ps: DelayTable,
    pub sync_residual_rms_ps: Option<f64>,
    pub brightness: BrightnessEstimate,
    pub resolution: ResolutionEstimate,
    pub p_o: PoEstimate,
    pub warnings: Vec<String>,
}

/// The estimates file: three recovered parameters and how they were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    pub brightness_cps: f64,
    pub detection_resolution_ps: f64,
    pub p_o: f64,
    pub fit_diagnostics: FitDiagnostics,
}

/// Synchronization (optional), then detection resolution, brightness and p_o.
pub fn estimate_all(
    alice: &TimeTagStream,
    bob: &TimeTagStream,
    config: &EstimateConfig,
) -> Result<Estimates> {
    let (delays, sync_residual_rms_ps) = if config.synchronize {
        let sync = synchronize(alice, bob, &config.sync)?;
        (sync.delays, Some(sync.residual_rms_ps))
    } else {
        (DelayTable::zero(), None)
    };
    let resolution =
        estimate_detection_resolution(alice, bob, &delays, config.bell_state, &config.g2)?;
    let brightness = estimate_brightness(
        alice,
        bob,
        &delays,
        config.dark_alice_cps,
        config.dark_bob_cps,
        resolution.detection_resolution_ps,
    )?;
    let p_o = estimate_po(alice, bob, &delays, config.bell_state)?;
    let mut warnings = Vec::new();
    if brightness.slope_warning {
        warnings.push(format!(
            "brightness plateau drifts by {:.1}% across the fit window",
            brightness.relative_drift * 100.0
        ));
    }
    warnings.extend(p_o.warning.clone());
    Ok(Estimates {
        brightness_cps: brightness.brightness_cps,
        detection_resolution_ps: resolution.detection_resolution_ps,
        p_o: p_o.p_o,
        fit_diagnostics: FitDiagnostics {
            delays_ps: delays,
            sync_residual_rms_ps,
            brightness,
            resolution,
            p_o,
            warnings,
        },
    })
}
