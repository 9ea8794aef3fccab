use qnet::analytic::full_model;
use qnet::bbm92::{
    analyze, match_coincidences, run_protocol, run_protocol_multishot, sift, AlignedStreams,
};
use qnet::optics::{DelayTable, ExperimentParams};
use qnet::states::BellState;

fn quiet(mut p: ExperimentParams) -> ExperimentParams {
    p.alice_detectors.dark_rate_cps = 0.0;
    p.bob_detectors.dark_rate_cps = 0.0;
    p
}

/// No darks and a source so weak that multi-pair accidentals are negligible.
fn accidental_free(mut p: ExperimentParams) -> ExperimentParams {
    p = quiet(p);
    p.brightness_cps = 1_000.0;
    p.loss_alice_db = 0.0;
    p.loss_bob_db = 0.0;
    p
}

#[test]
fn infinite_loss_and_no_darks_gives_empty_streams() {
    let mut p = quiet(ExperimentParams::table1());
    p.loss_alice_db = f64::INFINITY;
    p.loss_bob_db = f64::INFINITY;
    p.acquisition_s = 0.01;
    let run = run_protocol(&p, 1).unwrap();
    assert!(run.alice.is_empty());
    assert!(run.bob.is_empty());
    assert!(run.emitted_pairs > 0);
}

#[test]
fn singles_match_rate_model() {
    let p = ExperimentParams::table1();
    let run = run_protocol(&p, 21).unwrap();
    let theory = full_model(&p).unwrap();
    for (measured, expected) in [
        (run.alice.len() as f64, theory.singles_alice),
        (run.bob.len() as f64, theory.singles_bob),
    ] {
        let sigma = expected.sqrt();
        assert!(
            (measured - expected).abs() < 3.0 * sigma,
            "{measured} vs {expected}"
        );
    }
}

#[test]
fn coincidence_rate_matches_rate_model() {
    let p = ExperimentParams::table1();
    let run = run_protocol(&p, 22).unwrap();
    let pairs = match_coincidences(
        &run.alice,
        &run.bob,
        p.coincidence_window_ps,
        &DelayTable::zero(),
    );
    let expected = full_model(&p).unwrap().coincidence_rate * run.exposure_s;
    let measured = pairs.len() as f64;
    assert!(
        (measured - expected).abs() < 3.0 * expected.sqrt(),
        "{measured} vs {expected}"
    );
}

#[test]
fn multishot_agrees_with_continuous_run() {
    let p = ExperimentParams::table1();
    let continuous = run_protocol(&p, 5).unwrap();
    let shots = (p.brightness_cps * p.acquisition_s) as u64;
    let pooled = run_protocol_multishot(&p, shots, 6).unwrap();
    assert!((pooled.exposure_s - continuous.exposure_s).abs() < 1e-6);
    let a = analyze(
        &continuous.alice,
        &continuous.bob,
        2000.0,
        &DelayTable::zero(),
        BellState::PsiPlus,
    )
    .unwrap();
    let b = analyze(
        &pooled.alice,
        &pooled.bob,
        2000.0,
        &DelayTable::zero(),
        BellState::PsiPlus,
    )
    .unwrap();
    let se = a.raw_key_rate_se.hypot(b.raw_key_rate_se);
    assert!(
        (a.raw_key_rate - b.raw_key_rate).abs() < 3.0 * se,
        "{} vs {}",
        a.raw_key_rate,
        b.raw_key_rate
    );
}

#[test]
fn one_shot_gives_at_most_one_coincidence() {
    let p = ExperimentParams::table1();
    for seed in 0..50 {
        let run = run_protocol_multishot(&p, 1, seed).unwrap();
        assert_eq!(run.emitted_pairs, 1);
        let aligned = AlignedStreams::new(&run.alice, &run.bob, &DelayTable::zero());
        assert!(aligned.count(2000.0, 0) <= 1);
    }
}

#[test]
fn perfect_source_without_noise_has_no_errors() {
    let mut p = accidental_free(ExperimentParams::table1());
    p.source_fidelity = 1.0;
    p.optics_error_prob = 0.0;
    let run = run_protocol_multishot(&p, 100_000, 8).unwrap();
    let m = analyze(
        &run.alice,
        &run.bob,
        2000.0,
        &DelayTable::zero(),
        BellState::PsiPlus,
    )
    .unwrap();
    assert!(m.raw_bits > 1000);
    assert_eq!(m.errors, 0);
    assert_eq!(m.secure_key_rate, m.raw_key_rate);
}

#[test]
fn qber_follows_visibility_when_accidentals_are_negligible() {
    let mut p = quiet(ExperimentParams::table1());
    p.brightness_cps = 1.0e5;
    p.loss_alice_db = 3.0;
    p.loss_bob_db = 3.0;
    let run = run_protocol_multishot(&p, 1_000_000, 9).unwrap();
    let m = analyze(
        &run.alice,
        &run.bob,
        2000.0,
        &DelayTable::zero(),
        BellState::PsiPlus,
    )
    .unwrap();
    let expected = (1.0 - p.visibility()) / 2.0;
    assert!(
        (m.qber - expected).abs() < 3.0 * m.qber_se,
        "{} ± {}",
        m.qber,
        m.qber_se
    );
}

#[test]
fn sifting_keeps_half() {
    let p = ExperimentParams::table1();
    let run = run_protocol_multishot(&p, 2_000_000, 10).unwrap();
    let pairs = match_coincidences(&run.alice, &run.bob, 2000.0, &DelayTable::zero());
    let key = sift(&pairs, BellState::PsiPlus);
    let n = pairs.len() as f64;
    let sigma = (0.25 / n).sqrt();
    assert!((key.len() as f64 / n - 0.5).abs() < 3.0 * sigma);
}

#[test]
fn other_bell_states_sift_consistently() {
    for bell in BellState::ALL {
        let mut p = accidental_free(ExperimentParams::table1());
        p.bell_state = bell;
        p.source_fidelity = 1.0;
        let run = run_protocol_multishot(&p, 50_000, 11).unwrap();
        let m = analyze(&run.alice, &run.bob, 2000.0, &DelayTable::zero(), bell).unwrap();
        assert_eq!(m.errors, 0, "{bell:?}");
        assert!(m.raw_bits > 100);
    }
}

#[test]
fn wider_windows_never_lose_coincidences() {
    let p = ExperimentParams::table1();
    let run = run_protocol_multishot(&p, 300_000, 12).unwrap();
    let aligned = AlignedStreams::new(&run.alice, &run.bob, &DelayTable::zero());
    let mut last = 0;
    for w in [
        100.0, 500.0, 1000.0, 2000.0, 5000.0, 20_000.0, 1e5, 1e6, 5e6,
    ] {
        let c = aligned.count(w, 0);
        assert!(c >= last);
        last = c;
    }
}
