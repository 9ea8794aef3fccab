//! Closed-form rate model for continuous-wave BBM92 and for repeater chains
//! with deterministic swapping.
//!
//! Every function here is pure. Rates are in counts per second, times in
//! seconds unless the name says otherwise.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_range, Error, Result};
use crate::optics::{transmission_from_db, ExperimentParams};

/// Vacuum speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Error-correction inefficiency factor in the asymptotic key rate.
pub const ERROR_CORRECTION_FACTOR: f64 = 2.1;

/// Efficiency of a linear-optics Bell-state measurement.
pub const LINEAR_OPTICS_BSM_EFFICIENCY: f64 = 0.5;

/// Predicted rates for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyMetrics {
    pub coincidence_window_ps: f64,
    pub singles_alice: f64,
    pub singles_bob: f64,
    pub true_coincidence_rate: f64,
    pub accidental_rate: f64,
    pub coincidence_rate: f64,
    pub raw_key_rate: f64,
    pub qber: f64,
    pub secure_key_rate: f64,
}

/// Fraction of photons not lost to detector dead time at one party.
pub fn dead_time_efficiency(
    brightness: f64,
    eta_link: f64,
    eta_detector: f64,
    dark_rate: f64,
    dead_time_s: f64,
    detectors: u32,
) -> f64 {
    1.0 / (1.0
        + (brightness * eta_link * eta_detector + dark_rate) * dead_time_s / detectors as f64)
}

pub fn singles_rate(
    brightness: f64,
    eta_link: f64,
    eta_detector: f64,
    eta_dead_time: f64,
    dark_rate: f64,
) -> f64 {
    brightness * eta_link * eta_detector * eta_dead_time + dark_rate
}

/// Fraction of a Gaussian coincidence peak of FWHM `resolution` that falls
/// within a centred window of total width `window`.
pub fn coincidence_window_efficiency(window: f64, resolution: f64) -> f64 {
    if resolution <= 0.0 {
        return 1.0;
    }
    libm::erf(std::f64::consts::LN_2.sqrt() * window / resolution)
}

#[allow(clippy::too_many_arguments)]
pub fn true_coincidence_rate(
    brightness: f64,
    eta_alice: f64,
    eta_bob: f64,
    eta_detector_alice: f64,
    eta_detector_bob: f64,
    eta_dead_time_alice: f64,
    eta_dead_time_bob: f64,
    eta_window: f64,
) -> f64 {
    brightness
        * eta_alice
        * eta_bob
        * eta_detector_alice
        * eta_detector_bob
        * eta_dead_time_alice
        * eta_dead_time_bob
        * eta_window
}

/// Accidental coincidences per second: the chance of at least one click on
/// each side within one window, per window duration.
///
/// Only meaningful while singles far exceed true coincidences; at windows of
/// microseconds the expression counts true pairs again and overestimates.
pub fn accidental_rate(singles_alice: f64, singles_bob: f64, window_s: f64) -> f64 {
    if window_s <= 0.0 {
        return 0.0;
    }
    // expm1 keeps precision for the tiny exponents of sub-nanosecond windows.
    let pa = -(-singles_alice * window_s).exp_m1();
    let pb = -(-singles_bob * window_s).exp_m1();
    pa * pb / window_s
}

/// Optical errors on every sifted coincidence plus one error per four accidentals.
pub fn qber_prediction(
    coincidence_rate: f64,
    accidental_rate: f64,
    optics_error_prob: f64,
) -> Result<f64> {
    if !(coincidence_rate > 0.0) {
        return Err(Error::UndefinedRate("QBER"));
    }
    let raw = 0.5 * coincidence_rate;
    Ok((raw * optics_error_prob + 0.25 * accidental_rate) / raw)
}

pub fn binary_entropy(x: f64) -> Result<f64> {
    ensure_range("x", x, 0.0, 1.0, "[0, 1]")?;
    let term = |p: f64| if p <= 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(x) + term(1.0 - x))
}

/// Asymptotic secure key rate, clamped at zero above the error threshold.
pub fn secure_key_rate(raw_rate: f64, qber: f64) -> Result<f64> {
    let h = binary_entropy(qber)?;
    Ok((raw_rate * (1.0 - ERROR_CORRECTION_FACTOR * h)).max(0.0))
}

/// The QBER at which `2.1·H(q) = 1`, found by bisection on `[0, 1/2]`.
pub fn qber_threshold() -> f64 {
    let f = |q: f64| ERROR_CORRECTION_FACTOR * binary_entropy(q).expect("in range") - 1.0;
    let (mut lo, mut hi) = (1e-6, 0.5);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Composes the rate model at the coincidence window of `params`.
pub fn full_model(params: &ExperimentParams) -> Result<KeyMetrics> {
    params.validate()?;
    let b = params.brightness_cps;
    let eta_a = transmission_from_db(params.loss_alice_db);
    let eta_b = transmission_from_db(params.loss_bob_db);
    let (da, db) = (&params.alice_detectors, &params.bob_detectors);
    let n_d = params.detectors_per_party;
    let dt_a = dead_time_efficiency(
        b,
        eta_a,
        da.efficiency,
        da.dark_rate_cps,
        da.dead_time_ps as f64 * 1e-12,
        n_d,
    );
    let dt_b = dead_time_efficiency(
        b,
        eta_b,
        db.efficiency,
        db.dark_rate_cps,
        db.dead_time_ps as f64 * 1e-12,
        n_d,
    );
    let singles_alice = singles_rate(b, eta_a, da.efficiency, dt_a, da.dark_rate_cps);
    let singles_bob = singles_rate(b, eta_b, db.efficiency, dt_b, db.dark_rate_cps);
    let t_c = params.coincidence_window_ps;
    let eta_r = coincidence_window_efficiency(t_c, params.detection_resolution_ps);
    let true_rate = true_coincidence_rate(
        b,
        eta_a,
        eta_b,
        da.efficiency,
        db.efficiency,
        dt_a,
        dt_b,
        eta_r,
    );
    let acc = accidental_rate(singles_alice, singles_bob, t_c * 1e-12);
    let coincidence_rate = true_rate + acc;
    let raw_key_rate = 0.5 * coincidence_rate;
    let (qber, secure) = if coincidence_rate > 0.0 {
        let q = qber_prediction(coincidence_rate, acc, params.optics_error_prob)?.min(1.0);
        (q, secure_key_rate(raw_key_rate, q)?)
    } else {
        (f64::NAN, 0.0)
    };
    Ok(KeyMetrics {
        coincidence_window_ps: t_c,
        singles_alice,
        singles_bob,
        true_coincidence_rate: true_rate,
        accidental_rate: acc,
        coincidence_rate,
        raw_key_rate,
        qber,
        secure_key_rate: secure,
    })
}

/// Probability that one attempt across an elementary link heralds entanglement.
pub fn link_success_probability(eta_link: f64) -> f64 {
    LINEAR_OPTICS_BSM_EFFICIENCY * eta_link
}

/// Largest link count for which the alternating binomial sum is used directly.
const BINOMIAL_SUM_MAX_LINKS: usize = 16;

/// Expected number of attempt slots until all `links` independent links,
/// each succeeding per slot with probability `p0`, have succeeded.
pub fn expected_attempt_slots(links: usize, p0: f64) -> Result<f64> {
    ensure_range("p0", p0, 0.0, 1.0, "(0, 1]")?;
    if p0 == 0.0 {
        return Err(Error::Divergence);
    }
    if links == 0 {
        return Ok(0.0);
    }
    if links <= BINOMIAL_SUM_MAX_LINKS {
        Ok(alternating_binomial_sum(links, p0))
    } else {
        Ok(tail_sum(links, p0))
    }
}

fn alternating_binomial_sum(links: usize, p0: f64) -> f64 {
    let q = 1.0 - p0;
    let mut binom = 1.0;
    let mut positive = 0.0;
    let mut negative = 0.0;
    for j in 1..=links {
        binom = binom * (links + 1 - j) as f64 / j as f64;
        let term = binom / (1.0 - q.powi(j as i32));
        if j % 2 == 1 {
            positive += term;
        } else {
            negative += term;
        }
    }
    positive - negative
}

/// `E[max] = Σ_{k≥0} P(max > k) = Σ_k 1 − (1 − q^k)^N`, stable for any N.
fn tail_sum(links: usize, p0: f64) -> f64 {
    let q = 1.0 - p0;
    let mut total = 0.0;
    let mut qk: f64 = 1.0;
    loop {
        let term = 1.0 - (1.0 - qk).powi(links as i32);
        total += term;
        if term < 1e-17 {
            break;
        }
        qk *= q;
    }
    total
}

/// Expected time for a repeater chain of `2^n` elementary links of length
/// `link_length_m` to deliver end-to-end entanglement. Each attempt takes
/// one round trip from a node to the central station, `L0/c`.
pub fn repeater_expected_time(
    n: u32,
    link_length_m: f64,
    p0: f64,
    refractive_index: f64,
) -> Result<f64> {
    if n > 20 {
        return Err(Error::Domain {
            name: "n",
            value: n as f64,
            range: "[0, 20]",
        });
    }
    ensure_range(
        "refractive_index",
        refractive_index,
        1.0,
        f64::MAX,
        "[1, inf)",
    )?;
    let period = link_length_m * refractive_index / SPEED_OF_LIGHT;
    Ok(period * expected_attempt_slots(1usize << n, p0)?)
}

/// End-to-end fidelity after `repeaters` deterministic swaps of Werner links.
pub fn swapped_fidelity(elementary_fidelity: f64, repeaters: u32) -> Result<f64> {
    ensure_range(
        "elementary_fidelity",
        elementary_fidelity,
        0.25,
        1.0,
        "[1/4, 1]",
    )?;
    let weight = (4.0 * elementary_fidelity - 1.0) / 3.0;
    Ok(0.25 + 0.75 * weight.powi(repeaters as i32 + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn table1_alice() -> (f64, f64) {
        let eta = transmission_from_db(12.0);
        let dt = dead_time_efficiency(1.5e6, eta, 0.6, 500.0, 45e-9, 4);
        (dt, singles_rate(1.5e6, eta, 0.6, dt, 500.0))
    }

    #[test]
    fn dead_time_efficiency_values() {
        assert_eq!(dead_time_efficiency(1.5e6, 0.06, 0.6, 500.0, 0.0, 4), 1.0);
        let (dt, _) = table1_alice();
        // 1 / (1 + (1.5e6 · 10^-1.2 · 0.6 + 500) · 45e-9 / 4)
        assert_abs_diff_eq!(dt, 0.999_356, epsilon = 1e-6);
        assert!(dead_time_efficiency(1e15, 1.0, 1.0, 0.0, 45e-9, 4) < 1e-6);
    }

    #[test]
    fn singles_rate_values() {
        assert_eq!(singles_rate(0.0, 0.1, 0.6, 1.0, 500.0), 500.0);
        let (_, s) = table1_alice();
        assert_abs_diff_eq!(s, 57_249.59, epsilon = 0.01);
        let base = singles_rate(1e6, 0.1, 0.3, 1.0, 500.0) - 500.0;
        let doubled = singles_rate(1e6, 0.1, 0.6, 1.0, 500.0) - 500.0;
        assert_abs_diff_eq!(doubled, 2.0 * base, epsilon = 1e-9);
    }

    #[test]
    fn window_efficiency_limits() {
        assert_abs_diff_eq!(
            coincidence_window_efficiency(1e6, 1600.0),
            1.0,
            epsilon = 1e-15
        );
        assert_eq!(coincidence_window_efficiency(2000.0, 0.0), 1.0);
        assert_eq!(coincidence_window_efficiency(0.0, 1600.0), 0.0);
    }

    #[test]
    fn true_coincidences_at_table1() {
        let eta = transmission_from_db(12.0);
        let eta_r = coincidence_window_efficiency(2000.0, 1600.0);
        let r = true_coincidence_rate(1.5e6, eta, eta, 0.6, 0.6, 1.0, 1.0, eta_r);
        assert_abs_diff_eq!(r, 1.846e3, epsilon = 2.0);
        assert_eq!(
            true_coincidence_rate(1.5e6, eta, eta, 0.6, 0.6, 1.0, 1.0, 0.0),
            0.0
        );
        let swapped = true_coincidence_rate(1.5e6, 0.2, 0.05, 0.6, 0.5, 0.9, 0.8, 0.7);
        let original = true_coincidence_rate(1.5e6, 0.05, 0.2, 0.5, 0.6, 0.8, 0.9, 0.7);
        assert_abs_diff_eq!(swapped, original, epsilon = 1e-9);
    }

    #[test]
    fn accidental_rate_limits() {
        assert_eq!(accidental_rate(0.0, 5e4, 2e-9), 0.0);
        let exact = accidental_rate(5e4, 5e4, 2e-9);
        assert_abs_diff_eq!(exact, 5.0, epsilon = 1e-3);
        let series = 5e4 * 5e4 * 2e-9;
        assert!((exact - series).abs() / series < 1e-3);
        // Falls off as 1/t_c once both sides saturate.
        let long = accidental_rate(5e4, 5e4, 1.0);
        assert_abs_diff_eq!(long, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn qber_prediction_limits() {
        assert_abs_diff_eq!(
            qber_prediction(1000.0, 0.0, 0.03).unwrap(),
            0.03,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            qber_prediction(1000.0, 1000.0, 0.0).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert!(matches!(
            qber_prediction(0.0, 0.0, 0.03),
            Err(Error::UndefinedRate(_))
        ));
    }

    #[test]
    fn binary_entropy_values() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(binary_entropy(0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(binary_entropy(0.03).unwrap(), 0.194_391_2, epsilon = 1e-6);
        assert!(binary_entropy(-0.1).is_err());
        assert!(binary_entropy(1.1).is_err());
    }

    #[test]
    fn secure_rate_values() {
        assert_eq!(secure_key_rate(1000.0, 0.0).unwrap(), 1000.0);
        assert_abs_diff_eq!(
            secure_key_rate(1000.0, 0.03).unwrap(),
            591.78,
            epsilon = 0.01
        );
        assert_eq!(secure_key_rate(1000.0, 0.2).unwrap(), 0.0);
        assert_abs_diff_eq!(qber_threshold(), 0.1022, epsilon = 5e-4);
    }

    #[test]
    fn full_model_at_table1() {
        let m = full_model(&ExperimentParams::table1()).unwrap();
        assert_abs_diff_eq!(
            m.coincidence_rate,
            m.true_coincidence_rate + m.accidental_rate,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(m.raw_key_rate, 0.5 * m.coincidence_rate, epsilon = 1e-12);
        assert!(m.secure_key_rate <= m.raw_key_rate);
        assert_abs_diff_eq!(m.qber, 0.030, epsilon = 2e-3);
        assert_abs_diff_eq!(m.true_coincidence_rate, 1.844e3, epsilon = 5.0);
    }

    #[test]
    fn full_model_composition_identity() {
        let mut p = ExperimentParams::table1();
        p.loss_alice_db = 0.0;
        p.loss_bob_db = 0.0;
        p.alice_detectors.dark_rate_cps = 0.0;
        p.bob_detectors.dark_rate_cps = 0.0;
        p.optics_error_prob = 0.0;
        p.coincidence_window_ps = 1e6;
        let m = full_model(&p).unwrap();
        let dt = dead_time_efficiency(p.brightness_cps, 1.0, 0.6, 0.0, 45e-9, 4);
        let s = p.brightness_cps * 0.6 * dt;
        let expected = p.brightness_cps * 0.36 * dt * dt / 2.0 + accidental_rate(s, s, 1e-6) / 2.0;
        assert_abs_diff_eq!(m.raw_key_rate, expected, epsilon = 1e-6);
    }

    #[test]
    fn window_sweep_shapes() {
        let mut p = ExperimentParams::table1();
        let grid: Vec<f64> = (0..100)
            .map(|i| 10f64 * 1e6f64.powf(i as f64 / 99.0))
            .collect();
        let metrics: Vec<KeyMetrics> = grid
            .iter()
            .map(|&t| {
                p.coincidence_window_ps = t;
                full_model(&p).unwrap()
            })
            .collect();
        for w in metrics.windows(2) {
            assert!(w[1].raw_key_rate >= w[0].raw_key_rate);
        }
        for w in metrics.windows(2) {
            assert!(w[1].qber >= w[0].qber - 1e-15);
        }
        assert!(metrics[0].qber - 0.03 < 2e-3);
        assert!(metrics.last().unwrap().qber > 0.45);
    }

    #[test]
    fn link_probability() {
        assert_eq!(link_success_probability(1.0), 0.5);
        assert_eq!(link_success_probability(0.0), 0.0);
        assert_abs_diff_eq!(
            link_success_probability(transmission_from_db(3.0)),
            0.2506,
            epsilon = 1e-4
        );
    }

    #[test]
    fn repeater_time_closed_cases() {
        let l0 = 1000.0;
        let period = l0 / SPEED_OF_LIGHT;
        assert_abs_diff_eq!(
            repeater_expected_time(0, l0, 1.0, 1.0).unwrap(),
            period,
            epsilon = 1e-18
        );
        assert_abs_diff_eq!(
            repeater_expected_time(0, l0, 0.2, 1.0).unwrap(),
            period / 0.2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            repeater_expected_time(1, l0, 0.5, 1.0).unwrap(),
            8.0 / 3.0 * period,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            repeater_expected_time(0, l0, 1.0, 1.5).unwrap(),
            1.5 * period,
            epsilon = 1e-18
        );
        assert!(matches!(
            repeater_expected_time(1, l0, 0.0, 1.0),
            Err(Error::Divergence)
        ));
    }

    #[test]
    fn binomial_and_tail_sums_agree() {
        for links in 1..=16 {
            for p0 in [0.05, 0.1, 0.25, 0.5, 0.9, 1.0] {
                let a = alternating_binomial_sum(links, p0);
                let b = tail_sum(links, p0);
                assert!(
                    (a - b).abs() / b < 1e-9,
                    "links {links} p0 {p0}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn swapped_fidelity_values() {
        for r in 0..5 {
            assert_abs_diff_eq!(swapped_fidelity(1.0, r).unwrap(), 1.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(swapped_fidelity(0.9, 0).unwrap(), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(
            swapped_fidelity(0.95, 1).unwrap(),
            0.903_333_333_333_333,
            epsilon = 1e-12
        );
        assert!(swapped_fidelity(0.1, 1).is_err());
    }

    proptest! {
        #[test]
        fn window_efficiency_is_increasing_and_bounded(a in 1.0f64..1e7, b in 1.0f64..1e7, tr in 10.0f64..1e4) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let e_lo = coincidence_window_efficiency(lo, tr);
            let e_hi = coincidence_window_efficiency(hi, tr);
            prop_assert!(e_lo <= e_hi);
            prop_assert!(e_hi <= 1.0);
        }

        #[test]
        fn accidentals_never_exceed_singles(sa in 0.0f64..1e8, sb in 0.0f64..1e8, tc in 1e-12f64..1e-3) {
            let r = accidental_rate(sa, sb, tc);
            prop_assert!(r <= sa.min(sb) * (1.0 + 1e-12));
        }

        #[test]
        fn secure_rate_is_nonincreasing_in_qber(q1 in 0.0f64..=0.5, q2 in 0.0f64..=0.5, raw in 0.0f64..1e6) {
            let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(secure_key_rate(raw, hi).unwrap() <= secure_key_rate(raw, lo).unwrap());
            if hi >= 0.1023 {
                prop_assert_eq!(secure_key_rate(raw, hi).unwrap(), 0.0);
            }
        }
    }
}
