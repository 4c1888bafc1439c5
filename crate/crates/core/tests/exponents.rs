//! Exponent solvers checked against independent oracles.

use guessd_core::exponents::concavity_probe;
use guessd_core::*;
use proptest::prelude::*;
use proptest::strategy::Strategy;

fn ctl() -> SolverControls {
    SolverControls::default()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Strategy exponent via its one-dimensional dual:
/// `sup_{λ≥0} [−ρλΔ + ln Σ_x P(x) Z_x(λ)^{−ρ}]`, `Z_x(λ) = Σ Q̂ e^{−λ d}`.
/// Dense log-spaced scan followed by golden-section refinement.
fn lambda_dual_oracle(p: &[f64], qh: &[f64], d: &[Vec<f64>], delta: f64, rho: f64) -> f64 {
    let phi = |lambda: f64| -> f64 {
        let mut acc = 0.0;
        for (x, &px) in p.iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            let z: f64 = qh.iter().zip(&d[x]).map(|(&q, &dv)| q * (-lambda * dv).exp()).sum();
            acc += px * z.powf(-rho);
        }
        -rho * lambda * delta + acc.ln()
    };
    let mut grid = vec![0.0];
    grid.extend((0..=4000).map(|i| 10f64.powf(-4.0 + 8.0 * i as f64 / 4000.0)));
    let (mut best_i, mut best) = (0, phi(0.0));
    for (i, &l) in grid.iter().enumerate() {
        let v = phi(l);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = grid[best_i.saturating_sub(1)];
    let hi = grid[(best_i + 1).min(grid.len() - 1)];
    let (mut a, mut b) = (lo, hi);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - g * (b - a);
        let e = a + g * (b - a);
        if phi(c) > phi(e) {
            b = e;
        } else {
            a = c;
        }
    }
    best.max(phi(0.5 * (a + b)))
}

fn h2(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        -x * x.ln() - (1.0 - x) * (1.0 - x).ln()
    }
}

fn pmf3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, 3).prop_map(normalized)
}

fn matrix3() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(0.0f64..1.0, 9).prop_map(|v| {
        (0..3)
            .map(|x| {
                let mut row = v[3 * x..3 * x + 3].to_vec();
                row[x] = 0.0;
                row
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn strategy_exponent_matches_lambda_dual(
        p in pmf3(), qh in pmf3(), d in matrix3(), delta in 0.0f64..0.5, rho in 0.5f64..3.0,
    ) {
        let model = DistortionModel::from_matrix(d.clone(), delta).unwrap();
        let rep = iid_strategy_exponent(&p, &qh, &model, rho, &ctl()).unwrap();
        let oracle = lambda_dual_oracle(&p, &qh, &d, delta, rho);
        prop_assert!((rep.value - oracle).abs() <= 1e-6 * oracle.abs().max(1.0),
            "solver {} vs dual {}", rep.value, oracle);
        // Witness reproduces the value.
        let rd = mismatched_rd(&rep.inner_witness, &qh, &model, &ctl()).unwrap();
        let div = divergence(&rep.inner_witness, &p).unwrap().finite().unwrap();
        prop_assert!((rho * rd.value - div - rep.value).abs() <= 1e-6);
    }

    #[test]
    fn danskin_matches_finite_differences(
        p in pmf3(), qh in prop::collection::vec(0.2f64..1.0, 3).prop_map(normalized),
        d in matrix3(), delta in 0.05f64..0.4,
    ) {
        let rho = 1.5;
        let model = DistortionModel::from_matrix(d.clone(), delta).unwrap();
        let (_, g) = strategy_exponent_subgradient(&p, &qh, &model, rho, &ctl()).unwrap();
        let h = 1e-5;
        for (i, j) in [(0usize, 1usize), (1, 2), (0, 2)] {
            let shift = |t: f64| { let mut v = qh.clone(); v[i] += t; v[j] -= t; v };
            let fd = (lambda_dual_oracle(&p, &shift(h), &d, delta, rho)
                - lambda_dual_oracle(&p, &shift(-h), &d, delta, rho)) / (2.0 * h);
            let an = g[i] - g[j];
            prop_assert!((fd - an).abs() <= 1e-4 * an.abs().max(1e-2),
                "direction ({i},{j}): analytic {an} vs fd {fd}");
        }
    }
}

#[test]
fn synchronous_lossless_is_renyi() {
    let model = DistortionModel::hamming(3, 0.0).unwrap();
    let p = [0.6, 0.3, 0.1];
    for rho in [1.0, 2.0] {
        let rep = synchronous_exponent(&p, &model, rho, &ctl()).unwrap();
        let target = rho * renyi_entropy(&p, 1.0 / (1.0 + rho)).unwrap();
        assert!((rep.value - target).abs() < 1e-3, "rho={rho}: {} vs {target}", rep.value);
    }
}

#[test]
fn synchronous_binary_matches_grid() {
    // Binary Hamming: R(Q|Δ) = h(q) − h(Δ) for Δ < min(q, 1−q), else 0.
    let p = [0.9, 0.1];
    let delta = 0.05;
    let model = DistortionModel::hamming(2, delta).unwrap();
    let rep = synchronous_exponent(&p, &model, 1.0, &ctl()).unwrap();
    let mut grid_best = f64::NEG_INFINITY;
    for i in 1..1000 {
        let q = i as f64 / 1000.0;
        let r = if delta < q.min(1.0 - q) { h2(q) - h2(delta) } else { 0.0 };
        let div = q * (q / 0.9).ln() + (1.0 - q) * ((1.0 - q) / 0.1).ln();
        grid_best = grid_best.max(r - div);
    }
    assert!((rep.value - grid_best).abs() < 1e-3, "{} vs grid {grid_best}", rep.value);
}

#[test]
fn optimal_iid_against_strategy_grid() {
    let d = vec![vec![0.0, 1.0, 0.4], vec![1.0, 0.0, 0.6], vec![0.5, 0.7, 0.0]];
    let p = [0.5, 0.3, 0.2];
    let delta = 0.15;
    let rho = 1.0;
    let model = DistortionModel::from_matrix(d.clone(), delta).unwrap();
    let rep = optimal_iid_exponent(&p, &model, rho, &ctl()).unwrap();
    let cert = rep.diagnostics.certificate.unwrap();
    let mut grid_best = f64::INFINITY;
    for a in 1..50 {
        for b in 1..(50 - a) {
            let qh = [a as f64 / 50.0, b as f64 / 50.0, (50 - a - b) as f64 / 50.0];
            grid_best = grid_best.min(lambda_dual_oracle(&p, &qh, &d, delta, rho));
        }
    }
    assert!(rep.value <= grid_best + 1e-6, "{} vs grid {grid_best}", rep.value);
    assert!(cert.lower <= grid_best + 1e-9);
    assert!(grid_best - rep.value < 1e-2);
    assert!(rep.diagnostics.converged, "{:?}", rep.diagnostics);
    let qh = rep.outer_witness.unwrap();
    let check = lambda_dual_oracle(&p, &qh, &d, delta, rho);
    assert!((check - rep.value).abs() < 1e-6);
}

#[test]
fn min_max_dominates_max_min() {
    let cases = [
        (vec![vec![0.0, 1.0, 0.4], vec![1.0, 0.0, 0.6], vec![0.5, 0.7, 0.0]], vec![0.5, 0.3, 0.2], 0.15, 1.0),
        (vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.9, 0.1], 0.05, 1.0),
        (vec![vec![0.0, 0.3, 0.9], vec![0.2, 0.0, 0.5], vec![0.8, 0.1, 0.0]], vec![0.2, 0.2, 0.6], 0.1, 2.0),
    ];
    for (d, p, delta, rho) in cases {
        let model = DistortionModel::from_matrix(d, delta).unwrap();
        let iid = optimal_iid_exponent(&p, &model, rho, &ctl()).unwrap();
        let sync = synchronous_exponent(&p, &model, rho, &ctl()).unwrap();
        assert!(iid.value >= sync.value - 1e-6, "{} < {}", iid.value, sync.value);
        let penalty = iid_penalty(&p, &model, rho, &ctl()).unwrap();
        assert!(penalty >= -1e-6);
        println!("delta={delta} rho={rho}: E_iid={} E_sync={} penalty={penalty}", iid.value, sync.value);
    }
}

#[test]
fn lossless_penalty_vanishes() {
    let model = DistortionModel::hamming(3, 0.0).unwrap();
    let penalty = iid_penalty(&[0.5, 0.3, 0.2], &model, 1.0, &ctl()).unwrap();
    assert!(penalty.abs() < 1e-3, "{penalty}");
    let model = DistortionModel::hamming(3, 1.0).unwrap();
    let penalty = iid_penalty(&[0.5, 0.3, 0.2], &model, 1.0, &ctl()).unwrap();
    assert!(penalty.abs() < 1e-9);
}

#[test]
fn inner_objective_concavity_probe() {
    let d = vec![vec![0.0, 1.0, 0.4], vec![1.0, 0.0, 0.6], vec![0.5, 0.7, 0.0]];
    let model = DistortionModel::from_matrix(d, 0.15).unwrap();
    let probe = concavity_probe(&[0.5, 0.3, 0.2], &[0.3, 0.3, 0.4], &model, 1.0, 200, &ctl()).unwrap();
    println!("concavity probe: {probe:?}");
    assert_eq!(probe.segments, 200);
}

/// Source and budget whose rate-distortion curve has a linear piece, so the
/// optimal distortion jumps at a single slope.
fn kinked_instance() -> (Vec<f64>, DistortionModel) {
    let model = DistortionModel::from_matrix(
        vec![
            vec![0.6375775929540606, 0.6064325928511636, 0.8358168557662369],
            vec![0.5897045728828572, 0.6559604961861936, 0.5445714901978056],
        ],
        0.6140054732507645,
    )
    .unwrap();
    (vec![0.7500793156628947, 0.24992068433710524], model)
}

#[test]
fn rate_distortion_across_a_distortion_jump() {
    let (_, model) = kinked_instance();
    for q in [[0.6491072890043244, 0.35089271099567554], [0.5387655423036255, 0.46123445769637444]] {
        let r = rate_distortion(&q, &model, &ctl()).unwrap();
        assert!(r.converged, "residual {}", r.residual);
        assert!((r.achieved_distortion - model.delta()).abs() < 1e-12);
        let id = verify_min_identity(&q, &model, &ctl(), 1e-6).unwrap();
        assert!(id.gap.abs() <= 1e-6, "identity gap {}", id.gap);
        // Coarse grid over channels: an upper bound on the minimum.
        let n = 60;
        let mut grid_best = f64::INFINITY;
        for a in 0..=n {
            for b in 0..=n - a {
                for c in 0..=n {
                    for e in 0..=n - c {
                        let row = |i: usize, j: usize| vec![i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
                        let ch = Channel::new(vec![row(a, b), row(c, e)]).unwrap();
                        if ch.average_distortion(&q, model.matrix()).unwrap() <= model.delta() {
                            grid_best = grid_best.min(mutual_info(&q, &ch).unwrap());
                        }
                    }
                }
            }
        }
        assert!(r.value <= grid_best + 1e-12, "{} above grid {grid_best}", r.value);
    }
}

#[test]
fn kinked_instance_keeps_min_max_order() {
    let (p, model) = kinked_instance();
    let sync = synchronous_exponent(&p, &model, 0.5, &ctl()).unwrap();
    let iid = optimal_iid_exponent(&p, &model, 0.5, &ctl()).unwrap();
    assert!(sync.diagnostics.converged && iid.diagnostics.converged);
    assert!(iid.value >= sync.value - 1e-6, "{} < {}", iid.value, sync.value);
}
