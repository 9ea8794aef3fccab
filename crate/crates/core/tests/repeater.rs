use qnet::analytic::{qber_threshold, repeater_expected_time, swapped_fidelity};
use qnet::repeater::{
    chain_secure_key_rate, entanglement_rate, simulate_shots, RepeaterChainParams,
};
use qnet::states::{swap, swap_chain, TwoQubitState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn chain(links: usize, p0: f64) -> RepeaterChainParams {
    RepeaterChainParams {
        links,
        bsm_efficiency: p0,
        ..RepeaterChainParams::default()
    }
}

/// `E[max of k geometric(p)]`, summed directly over `P(max > t)`.
fn max_geometric_mean(k: i32, p: f64) -> f64 {
    (0..100_000)
        .map(|t| 1.0 - (1.0 - (1.0 - p).powi(t)).powi(k))
        .sum()
}

#[test]
fn mean_completion_matches_closed_form() {
    for n in 0..4u32 {
        for p0 in [0.1, 0.25, 0.5] {
            let params = chain(1 << n, p0);
            let rate = entanglement_rate(&params, 10_000, 100 + n as u64).unwrap();
            let expected =
                repeater_expected_time(n, params.link_length_m, p0, params.refractive_index)
                    .unwrap();
            assert!(
                (rate.mean_completion_s - expected).abs() < 3.0 * rate.completion_se_s,
                "n={n} p0={p0}: {} vs {expected}",
                rate.mean_completion_s
            );
        }
    }
}

#[test]
fn two_links_at_zero_loss_take_eight_thirds_periods() {
    let params = RepeaterChainParams::with_exponent(1);
    let rate = entanglement_rate(&params, 1_000, 7).unwrap();
    let unit = params.unit_time_s();
    let mean = rate.mean_completion_s / unit;
    let se = rate.completion_se_s / unit;
    assert!((mean - 8.0 / 3.0).abs() < 3.0 * se, "{mean} ± {se}");
    assert!((rate.rate_c_over_l0 - 3.0 / 8.0).abs() < 3.0 * rate.rate_se);
    assert!((max_geometric_mean(2, 0.5) - 8.0 / 3.0).abs() < 1e-9);
}

#[test]
fn three_links_match_monte_carlo_oracle() {
    let p0 = 0.3;
    let params = chain(3, p0);
    let records = simulate_shots(&params, 20_000, 9).unwrap();
    let period = params.attempt_period().as_ps() as f64;
    let sim: Vec<f64> = records
        .iter()
        .map(|r| r.completion_time.as_ps() as f64 / period)
        .collect();
    let mean = sim.iter().sum::<f64>() / sim.len() as f64;
    let var = sim.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (sim.len() - 1) as f64;
    let se = (var / sim.len() as f64).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 200_000;
    let oracle = (0..draws)
        .map(|_| {
            (0..3)
                .map(|_| {
                    let mut k = 1u64;
                    while !rng.random_bool(p0) {
                        k += 1;
                    }
                    k
                })
                .max()
                .unwrap() as f64
        })
        .sum::<f64>()
        / draws as f64;
    assert!((oracle - max_geometric_mean(3, p0)).abs() < 0.02);
    assert!(
        (mean - oracle).abs() < 3.0 * se + 0.02,
        "{mean} vs {oracle}"
    );
}

#[test]
fn rate_falls_with_link_loss() {
    let mut last = f64::INFINITY;
    for loss in [0.0, 2.0, 4.0, 6.0, 8.0] {
        let params = RepeaterChainParams {
            link_loss_db: loss,
            ..RepeaterChainParams::with_exponent(1)
        };
        let rate = entanglement_rate(&params, 2_000, 11)
            .unwrap()
            .rate_c_over_l0;
        assert!(rate < last, "{loss} dB: {rate}");
        last = rate;
    }
}

#[test]
fn single_lossy_link_is_geometric() {
    let params = RepeaterChainParams {
        links: 1,
        link_loss_db: 10.0,
        ..RepeaterChainParams::default()
    };
    assert!((params.success_probability() - 0.05).abs() < 1e-12);
    let rate = entanglement_rate(&params, 10_000, 12).unwrap();
    assert!(
        (rate.rate_c_over_l0 - 0.05).abs() < 3.0 * rate.rate_se,
        "{rate:?}"
    );
}

#[test]
fn end_to_end_fidelity_matches_formula() {
    for links in 1..=5 {
        for f in [0.8, 0.95, 1.0] {
            let params = RepeaterChainParams {
                links,
                elementary_fidelity: f,
                ..RepeaterChainParams::default()
            };
            let got = params.end_to_end_state().unwrap().fidelity();
            let want = swapped_fidelity(f, links as u32 - 1).unwrap();
            assert!((got - want).abs() < 1e-12, "{links} links, F={f}");
        }
    }
}

#[test]
fn odd_chains_swap_order_independently() {
    let links = [
        TwoQubitState::werner(0.9).unwrap(),
        TwoQubitState::werner(0.95).unwrap(),
        TwoQubitState::werner(0.85).unwrap(),
    ];
    let left_first = swap_chain(&links).unwrap();
    let right_first = swap(&links[0], &swap(&links[1], &links[2]));
    assert!((left_first.fidelity() - right_first.fidelity()).abs() < 1e-12);
    assert!((left_first.matrix() - right_first.matrix()).norm() < 1e-12);
}

#[test]
fn perfect_links_give_secure_equal_to_raw() {
    for links in 1..=4 {
        let params = RepeaterChainParams {
            links,
            ..RepeaterChainParams::default()
        };
        let key = chain_secure_key_rate(&params, 500, 13).unwrap();
        assert_eq!(key.qber, 0.0);
        assert!((key.secure_key_rate_c_over_l0 - key.raw_rate_c_over_l0).abs() < 1e-15);
    }
}

#[test]
fn three_repeaters_at_ninety_five_percent_are_insecure() {
    let params = RepeaterChainParams {
        links: 4,
        elementary_fidelity: 0.95,
        ..RepeaterChainParams::default()
    };
    let key = chain_secure_key_rate(&params, 500, 14).unwrap();
    assert!((key.end_to_end_fidelity - 0.8192).abs() < 1e-4, "{key:?}");
    assert!((key.qber - 0.1205).abs() < 1e-4);
    assert!(key.qber > qber_threshold());
    assert_eq!(key.secure_key_rate_c_over_l0, 0.0);
}

#[test]
fn optimal_repeater_count_depends_on_fidelity() {
    let total_loss_db = 20.0;
    let total_length_m = 4_000.0;
    let best_r = |fidelity: f64| {
        (0..4usize)
            .map(|r| {
                let links = r + 1;
                let params = RepeaterChainParams {
                    links,
                    link_length_m: total_length_m / links as f64,
                    link_loss_db: total_loss_db / links as f64,
                    elementary_fidelity: fidelity,
                    ..RepeaterChainParams::default()
                };
                let key = chain_secure_key_rate(&params, 2_000, 15).unwrap();
                (r, key.secure_key_rate_bps)
            })
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    };
    let perfect = best_r(1.0);
    let noisy = best_r(0.95);
    assert_eq!(perfect, 3);
    assert!(noisy < perfect, "{noisy}");
}
