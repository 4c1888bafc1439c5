//! Monte-Carlo estimates against exact moments.

use guessd_core::simulate::geometric_ks_distance;
use guessd_core::*;

fn cfg(trials: u64) -> SimConfig {
    SimConfig { master_seed: 2024, trials, rho_list: vec![1.0, 2.0], ..SimConfig::default() }
}

#[test]
fn geometric_moments_at_one_half() {
    let r = simulate_fixed(0.5, &cfg(1_000_000)).unwrap();
    for (e, exact) in r.estimates.iter().zip([2.0, 6.0]) {
        assert_eq!(e.exact, Some(exact));
        assert!((e.mean - exact).abs() <= 3.0 * e.std_error, "rho={}: {} ± {}", e.rho, e.mean, e.std_error);
    }
    assert_eq!(r.censored, 0);
}

#[test]
fn geometric_law_kolmogorov_distance() {
    let q = 0.3;
    let samples: Vec<u64> =
        (0..1_000_000).map(|t| sample_guesswork(q, &mut trial_rng(99, t)).unwrap()).collect();
    let ks = geometric_ks_distance(&samples, q);
    assert!(ks < 0.002, "KS distance {ks}");
}

#[test]
fn two_symbol_block_matches_oracle() {
    let model = DistortionModel::hamming(2, 0.5).unwrap();
    let c = SimConfig { n: 2, ..cfg(200_000) };
    let r = simulate_block(&[0.75, 0.25], &Strategy::uniform(2), &model, &c).unwrap();
    let e = &r.estimates[0];
    assert!((e.exact.unwrap() - 4.0 / 3.0).abs() < 1e-12);
    assert!((e.mean - 4.0 / 3.0).abs() <= 3.0 * e.std_error);
}

#[test]
fn block_rate_within_exact_band() {
    let model = DistortionModel::hamming(2, 0.25).unwrap();
    let s = Strategy::uniform(2);
    let p = [0.75, 0.25];
    let n = 8;
    let c = SimConfig { n, rho_list: vec![1.0], ..cfg(200_000) };
    let r = simulate_block(&p, &s, &model, &c).unwrap();
    let e = &r.estimates[0];
    let exact = exact_block_moment(&p, &s, &model, n, 1.0).unwrap().log_expected_g.unwrap();
    let lo = (exact.exp() - 3.0 * e.std_error).ln() / n as f64;
    let hi = (exact.exp() + 3.0 * e.std_error).ln() / n as f64;
    let rate = e.mean.ln() / n as f64;
    assert!(lo <= rate && rate <= hi, "{rate} not in [{lo}, {hi}]");
}

#[test]
fn literal_and_analytic_modes_agree() {
    let model = DistortionModel::from_matrix(
        vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]],
        0.5,
    )
    .unwrap();
    let s = Strategy::new(vec![0.2, 0.5, 0.3]).unwrap();
    let p = [0.5, 0.3, 0.2];
    let mut reports = Vec::new();
    for mode in [SimMode::Literal, SimMode::Analytic] {
        let c = SimConfig { n: 4, mode, rho_list: vec![1.0], ..cfg(50_000) };
        reports.push(simulate_block(&p, &s, &model, &c).unwrap());
    }
    let (a, b) = (&reports[0].estimates[0], &reports[1].estimates[0]);
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() <= 4.0 * se, "{} vs {} (se {se})", a.mean, b.mean);
    for e in [a, b] {
        assert!(e.z_score.unwrap().abs() <= 4.0);
    }
}

#[test]
fn block_reports_are_identical_across_workers() {
    let model = DistortionModel::hamming(3, 0.34).unwrap();
    let s = Strategy::uniform(3);
    let p = [0.6, 0.3, 0.1];
    for mode in [SimMode::Literal, SimMode::Analytic] {
        let run = |workers| {
            let c = SimConfig { n: 3, mode, workers, ..cfg(20_000) };
            simulate_block(&p, &s, &model, &c).unwrap()
        };
        let one = run(1);
        assert_eq!(one, run(2));
        assert_eq!(one, run(5));
    }
}

#[test]
fn unreachable_symbol_is_named() {
    let model = DistortionModel::hamming(2, 0.0).unwrap();
    let s = Strategy::new(vec![1.0, 0.0]).unwrap();
    let c = SimConfig { mode: SimMode::Literal, ..cfg(10) };
    match simulate_block(&[0.5, 0.5], &s, &model, &c) {
        Err(Error::ZeroBallMass { symbol: Some(sym) }) => assert_eq!(sym, "1"),
        other => panic!("unexpected {other:?}"),
    }
}
