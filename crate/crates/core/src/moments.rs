//! One-shot randomized guessing.
//!
//! A strategy is a law on the reproduction alphabet; guesses are drawn i.i.d.
//! from it until one lands in the distortion ball of the realization. For a
//! fixed realization `x` the number of guesses is geometric with success
//! probability `q_x`, the strategy mass of the ball `A(x)`.
//!
//! Two moment notions are provided: the ordinary moment
//! `G_ρ(x) = E[G^ρ]`, and the binomial-smoothed moment
//! `V_ρ(x) = E[C(G + ρ - 1, ρ)]`, which has the closed form `q_x^{-ρ}`.

use serde::Serialize;

use crate::distortion::{validate_pmf, BallIndex, DistortionModel, FiniteSource};
use crate::error::{Error, Result};
use crate::numeric::{as_small_integer, ln_factorial, ln_gamma, log_sum_exp, CompensatedSum};
use crate::quantizer::{distortion_renyi, Quantizer};

/// Largest integer order handled by [`g_moment_integer`].
pub const RHO_MAX: u32 = 12;

/// Slack allowed when checking one-shot bounds in the log domain.
pub const BOUND_SLACK: f64 = 1e-12;

/// Default absolute tolerance for series evaluations.
pub const SERIES_TOL: f64 = 1e-12;

/// Hard cap on the number of series terms.
const SERIES_MAX_TERMS: u64 = 200_000_000;

/// Guessing law on the reproduction alphabet.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Strategy(Vec<f64>);

impl Strategy {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        validate_pmf(&pmf)?;
        Ok(Self(pmf))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    pub fn pmf(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(Error::RhoNonpositive(rho))
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else if q == 0.0 {
        Err(Error::ZeroBallMass { symbol: None })
    } else {
        Err(Error::InvalidPmf(format!("ball mass {q} outside (0,1]")))
    }
}

/// Tilted law `∝ base^{1/(1+ρ)}`, computed in the log domain. Zero atoms stay
/// zero.
pub fn tilted_strategy(base: &[f64], rho: f64) -> Result<Strategy> {
    check_rho(rho)?;
    validate_pmf(base)?;
    let s = 1.0 / (1.0 + rho);
    let logs: Vec<f64> = base
        .iter()
        .map(|&p| if p > 0.0 { s * p.ln() } else { f64::NEG_INFINITY })
        .collect();
    let norm = log_sum_exp(&logs);
    Ok(Strategy(logs.iter().map(|&l| (l - norm).exp()).collect()))
}

/// Strategy mass of the ball `A(x)`.
pub fn ball_mass(strategy: &Strategy, balls: &BallIndex, x: usize) -> f64 {
    balls.members(x).map(|xh| strategy.0[xh]).sum()
}

/// `V_ρ = q^{-ρ}`.
pub fn v_moment(q: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    check_q(q)?;
    Ok(q.powf(-rho))
}

/// `ln V_ρ = -ρ ln q`.
pub fn log_v_moment(q: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    check_q(q)?;
    Ok(-rho * q.ln())
}

/// Outcome of a certified series summation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesSum {
    pub value: f64,
    pub terms: u64,
    /// Upper bound on the omitted tail.
    pub tail_bound: f64,
}

/// Sums `Σ_{k>=1} t_k` for positive terms whose ratio `t_{k+1}/t_k` is
/// nonincreasing in `k` and bounded by `ratio_bound(k)`.
///
/// Tail certificate: once `θ = ratio_bound(K+1) < 1`, every later ratio is at
/// most `θ`, so `Σ_{k>K} t_k <= t_{K+1} / (1 - θ)`.
fn certified_series(
    log_term: impl Fn(u64) -> f64,
    ratio_bound: impl Fn(u64) -> f64,
    tol: f64,
) -> Result<SeriesSum> {
    let mut sum = CompensatedSum::new();
    let mut k = 1u64;
    loop {
        sum.add(log_term(k).exp());
        let theta = ratio_bound(k + 1);
        if theta < 1.0 {
            let tail = log_term(k + 1).exp() / (1.0 - theta);
            if tail < tol {
                return Ok(SeriesSum {
                    value: sum.value(),
                    terms: k,
                    tail_bound: tail,
                });
            }
        }
        k += 1;
        if k > SERIES_MAX_TERMS {
            return Err(Error::NonConvergence {
                what: "moment series",
                residual: log_term(k).exp(),
            });
        }
    }
}

/// `Σ_m C(m+ρ-1, ρ) (1-q)^{m-1} q` with gamma-function coefficients. Equals
/// `q^{-ρ}`; exposed as an independent check of [`v_moment`].
pub fn v_moment_series(q: f64, rho: f64, tol: f64) -> Result<SeriesSum> {
    check_rho(rho)?;
    check_q(q)?;
    if q == 1.0 {
        return Ok(SeriesSum { value: 1.0, terms: 1, tail_bound: 0.0 });
    }
    let (ln_q, ln_r) = (q.ln(), (-q).ln_1p());
    let ln_rho_fact = ln_gamma(rho + 1.0);
    let r = 1.0 - q;
    certified_series(
        |m| {
            let m = m as f64;
            ln_gamma(m + rho) - ln_rho_fact - ln_gamma(m) + (m - 1.0) * ln_r + ln_q
        },
        // t_{m+1}/t_m = (m+ρ)/m · r, decreasing in m
        |m| (m as f64 + rho) / m as f64 * r,
        tol,
    )
}

/// `Σ_k k^ρ (1-q)^{k-1} q`, truncated with a certified tail below `tol`.
pub fn g_moment_series(q: f64, rho: f64, tol: f64) -> Result<f64> {
    g_moment_series_detailed(q, rho, tol).map(|s| s.value)
}

pub fn g_moment_series_detailed(q: f64, rho: f64, tol: f64) -> Result<SeriesSum> {
    check_rho(rho)?;
    check_q(q)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidPmf(format!("series tolerance {tol} must be positive")));
    }
    if q == 1.0 {
        return Ok(SeriesSum { value: 1.0, terms: 1, tail_bound: 0.0 });
    }
    let (ln_q, ln_r) = (q.ln(), (-q).ln_1p());
    let r = 1.0 - q;
    certified_series(
        |k| rho * (k as f64).ln() + (k as f64 - 1.0) * ln_r + ln_q,
        // t_{k+1}/t_k = (1 + 1/k)^ρ · r, decreasing in k
        |k| (1.0 + 1.0 / k as f64).powf(rho) * r,
        tol,
    )
}

/// Eulerian numbers `A(n, k)`, `k = 0..n-1`.
fn eulerian_row(n: u32) -> Vec<f64> {
    let mut row = vec![1.0];
    for m in 2..=n {
        let prev = row;
        row = (0..m as usize)
            .map(|k| {
                let keep = if k < prev.len() { (k as f64 + 1.0) * prev[k] } else { 0.0 };
                let shift = if k > 0 { (m as f64 - k as f64) * prev[k - 1] } else { 0.0 };
                keep + shift
            })
            .collect();
    }
    row
}

fn check_integer_rho(rho: u32) -> Result<()> {
    if rho == 0 {
        return Err(Error::RhoNonpositive(0.0));
    }
    if rho > RHO_MAX {
        return Err(Error::RhoTooLarge { rho, max: RHO_MAX });
    }
    Ok(())
}

/// Numerator polynomial of the geometric moment: `G_ρ = poly(q) / q^ρ`.
/// Orders 1..=4 use the explicit expansions; higher orders use the Eulerian
/// polynomial `A_ρ(1-q)` obtained from repeated differentiation of the
/// moment generating function.
fn moment_numerator(q: f64, rho: u32) -> f64 {
    match rho {
        1 => 1.0,
        2 => 2.0 - q,
        3 => q * q - 6.0 * q + 6.0,
        4 => -q * q * q + 14.0 * q * q - 36.0 * q + 24.0,
        _ => eulerian_numerator(q, rho),
    }
}

fn eulerian_numerator(q: f64, rho: u32) -> f64 {
    let r = 1.0 - q;
    eulerian_row(rho).iter().rev().fold(0.0, |acc, &a| acc * r + a)
}

/// Exact `ρ`-th moment of the geometric law with success probability `q`.
pub fn g_moment_integer(q: f64, rho: u32) -> Result<f64> {
    check_integer_rho(rho)?;
    check_q(q)?;
    Ok(moment_numerator(q, rho) / q.powi(rho as i32))
}

/// Same as [`g_moment_integer`] through the Eulerian route for every order.
pub fn g_moment_eulerian(q: f64, rho: u32) -> Result<f64> {
    check_integer_rho(rho)?;
    check_q(q)?;
    Ok(eulerian_numerator(q, rho) / q.powi(rho as i32))
}

/// `ln G_ρ` for integer `ρ`; safe when `q^{-ρ}` overflows.
pub fn log_g_moment_integer(q: f64, rho: u32) -> Result<f64> {
    check_integer_rho(rho)?;
    check_q(q)?;
    Ok(moment_numerator(q, rho).ln() - f64::from(rho) * q.ln())
}

/// `ln G_ρ` for any positive `ρ`: exact for small integers, certified series
/// otherwise (relative tolerance `rel_tol`).
pub fn log_g_moment(q: f64, rho: f64, rel_tol: f64) -> Result<f64> {
    if let Some(k) = as_small_integer(rho, RHO_MAX) {
        return log_g_moment_integer(q, k);
    }
    check_rho(rho)?;
    check_q(q)?;
    // G_ρ >= q^{-ρ} for ρ >= 1 and >= 2^{-ρ}e^{-2}q^{-ρ} generally, so a tail
    // below rel_tol * (lower bound) is a relative truncation error.
    let floor = (-rho * q.ln() - rho * std::f64::consts::LN_2 - 2.0).exp();
    let tol = (rel_tol * floor).max(f64::MIN_POSITIVE);
    g_moment_series(q, rho, tol).map(f64::ln)
}

/// Lower bounds on `G_ρ` valid for `q < 1/2`:
/// `((1-q)/q)^ρ e^{-1/(1-q)}` and the weaker `2^{-ρ} e^{-2} q^{-ρ}`.
pub fn g_moment_lower_bounds(q: f64, rho: f64) -> (f64, f64) {
    let first = ((1.0 - q) / q).powf(rho) * (-1.0 / (1.0 - q)).exp();
    let second = 2f64.powf(-rho) * (-2.0f64).exp() * q.powf(-rho);
    (first, second)
}

/// Upper envelope `Γ(ρ+1) q^{-ρ} (1 + ε)` on `G_ρ`.
///
/// For `ρ >= 1`, `k^ρ <= Γ(k+ρ)/Γ(k)` for every `k >= 1`, so termwise
/// comparison with the binomial series gives `G_ρ <= Γ(ρ+1) q^{-ρ}` (`ε = 0`).
/// For `ρ < 1`, Jensen gives `G_ρ <= (E G)^ρ = q^{-ρ}`, i.e.
/// `ε = 1/Γ(ρ+1) - 1`.
pub fn g_moment_upper_envelope(q: f64, rho: f64) -> f64 {
    let gamma = ln_gamma(rho + 1.0).exp();
    let eps = if rho >= 1.0 { 0.0 } else { 1.0 / gamma - 1.0 };
    gamma * q.powf(-rho) * (1.0 + eps)
}

/// Per-symbol moments inside a [`MomentReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymbolMoments {
    pub symbol: usize,
    pub label: String,
    pub p: f64,
    pub q: f64,
    pub log_v: f64,
    pub log_g: f64,
    /// `true` when `log_g` is a closed form; `false` for series values.
    pub g_exact: bool,
}

/// Expected moments of one-shot randomized guessing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub rho: f64,
    pub strategy: Vec<f64>,
    /// Entries for symbols with positive probability.
    pub per_symbol: Vec<SymbolMoments>,
    pub log_expected_v: f64,
    pub log_expected_g: f64,
    /// `ln(ρ!) + ln E[V_ρ]`; only for integer `ρ`.
    pub log_g_upper: Option<f64>,
    /// `ρ H^Δ_{1/(1+ρ)}(X)` when the report comes from the achievability
    /// pipeline.
    pub bound_rhs_v: Option<f64>,
    /// `ρ H^Δ_{1/(1+ρ)}(X) + ln(ρ!)`; integer `ρ` only.
    pub bound_rhs_g: Option<f64>,
    pub quantizer: Option<Quantizer>,
    pub pushforward: Option<Vec<f64>>,
}

impl MomentReport {
    pub fn expected_v(&self) -> f64 {
        self.log_expected_v.exp()
    }

    pub fn expected_g(&self) -> f64 {
        self.log_expected_g.exp()
    }
}

/// Expected `V_ρ` and `G_ρ` under `strategy`.
///
/// Fails with [`Error::ZeroBallMass`] naming the first symbol with positive
/// probability whose ball has zero strategy mass.
pub fn expected_moments(
    source: &FiniteSource,
    strategy: &Strategy,
    balls: &BallIndex,
    rho: f64,
) -> Result<MomentReport> {
    check_rho(rho)?;
    if source.len() != balls.source_size() {
        return Err(Error::LengthMismatch { left: source.len(), right: balls.source_size() });
    }
    if strategy.len() != balls.repro_size() {
        return Err(Error::LengthMismatch { left: strategy.len(), right: balls.repro_size() });
    }
    let integer = as_small_integer(rho, RHO_MAX);
    let mut per_symbol = Vec::new();
    for (x, &p) in source.pmf().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let q = ball_mass(strategy, balls, x).min(1.0);
        if q <= 0.0 {
            return Err(Error::ZeroBallMass { symbol: Some(source.label(x).to_string()) });
        }
        let log_v = log_v_moment(q, rho)?;
        let log_g = log_g_moment(q, rho, SERIES_TOL)?;
        per_symbol.push(SymbolMoments {
            symbol: x,
            label: source.label(x).to_string(),
            p,
            q,
            log_v,
            log_g,
            g_exact: integer.is_some(),
        });
    }
    let lv: Vec<f64> = per_symbol.iter().map(|s| s.p.ln() + s.log_v).collect();
    let lg: Vec<f64> = per_symbol.iter().map(|s| s.p.ln() + s.log_g).collect();
    let log_expected_v = log_sum_exp(&lv);
    Ok(MomentReport {
        rho,
        strategy: strategy.pmf().to_vec(),
        per_symbol,
        log_expected_v,
        log_expected_g: log_sum_exp(&lg),
        log_g_upper: integer.map(|k| log_expected_v + ln_factorial(f64::from(k))),
        bound_rhs_v: None,
        bound_rhs_g: None,
        quantizer: None,
        pushforward: None,
    })
}

/// The tilted-greedy achievability pipeline: greedy quantizer, its
/// pushforward, the tilted strategy, the resulting moments, and the
/// right-hand sides `ρ H^Δ_{1/(1+ρ)}` (and `+ ln ρ!` for integer `ρ`).
///
/// Returns [`Error::BoundViolated`] if a bound fails by more than
/// [`BOUND_SLACK`] in the log domain.
pub fn oneshot_achievability(
    source: &FiniteSource,
    model: &DistortionModel,
    rho: f64,
) -> Result<MomentReport> {
    check_rho(rho)?;
    let (h, quantizer) = distortion_renyi(source, model, 1.0 / (1.0 + rho))?;
    let push = quantizer.pushforward(source.pmf());
    let strategy = tilted_strategy(&push, rho)?;
    let balls = model.balls()?;
    let mut report = expected_moments(source, &strategy, &balls, rho)?;
    let rhs_v = rho * h;
    if report.log_expected_v > rhs_v + BOUND_SLACK {
        return Err(Error::BoundViolated(format!(
            "ln E[V] = {} exceeds {}",
            report.log_expected_v, rhs_v
        )));
    }
    report.bound_rhs_v = Some(rhs_v);
    if let Some(k) = as_small_integer(rho, RHO_MAX) {
        let rhs_g = rhs_v + ln_factorial(f64::from(k));
        if report.log_expected_g > rhs_g + BOUND_SLACK {
            return Err(Error::BoundViolated(format!(
                "ln E[G] = {} exceeds {}",
                report.log_expected_g, rhs_g
            )));
        }
        report.bound_rhs_g = Some(rhs_g);
    }
    report.quantizer = Some(quantizer);
    report.pushforward = Some(push);
    Ok(report)
}

/// Largest reproduction alphabet for exhaustive ordering search.
pub const SYNC_MAX_REPRO: usize = 8;

/// Optimal deterministic (synchronous) guessing by exhaustive search over
/// guessing orders, with the distortion-ball Rényi bracket around it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyncReport {
    pub rho: f64,
    /// `min_G E[G_sync^ρ]`.
    pub value: f64,
    /// Reproduction symbols in guessing order.
    pub ordering: Vec<usize>,
    /// `ρ H^Δ_{1/(1+ρ)}(X)`, an upper bound on `ln value`.
    pub upper: f64,
    /// `ρ H^Δ - ρ ln(1 + ln M)` with `M = min(|X|,|X̂|)`.
    pub lower: f64,
    /// `ρ H^Δ - ρ ln ln(1 + M)`; this tighter form is reported for
    /// comparison and is not a valid bound in general (it fails for a uniform
    /// binary source under lossless guessing).
    pub lower_loglog: f64,
    pub within_bracket: bool,
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

pub fn optimal_sync_guesswork(
    source: &FiniteSource,
    model: &DistortionModel,
    rho: f64,
) -> Result<SyncReport> {
    check_rho(rho)?;
    let nxh = model.repro_size();
    if nxh > SYNC_MAX_REPRO {
        return Err(Error::InstanceTooLarge {
            what: "guessing-order enumeration",
            size: nxh as f64,
            cap: SYNC_MAX_REPRO as f64,
        });
    }
    let balls = model.balls()?;
    let p = source.pmf();
    let mut order: Vec<usize> = (0..nxh).collect();
    let mut rank = vec![0usize; nxh];
    let mut best = (f64::INFINITY, order.clone());
    loop {
        for (pos, &xh) in order.iter().enumerate() {
            rank[xh] = pos + 1;
        }
        let mut acc = CompensatedSum::new();
        for (x, &px) in p.iter().enumerate() {
            if px > 0.0 {
                let g = balls.members(x).map(|xh| rank[xh]).min().unwrap_or(usize::MAX);
                acc.add(px * (g as f64).powf(rho));
            }
        }
        if acc.value() < best.0 {
            best = (acc.value(), order.clone());
        }
        if !next_permutation(&mut order) {
            break;
        }
    }
    let (h, _) = distortion_renyi(source, model, 1.0 / (1.0 + rho))?;
    let m = model.source_size().min(nxh) as f64;
    let upper = rho * h;
    let lower = upper - rho * (1.0 + m.ln()).ln();
    let lower_loglog = upper - rho * (1.0 + m).ln().ln();
    let lv = best.0.ln();
    Ok(SyncReport {
        rho,
        value: best.0,
        ordering: best.1,
        upper,
        lower,
        lower_loglog,
        within_bracket: lv <= upper + BOUND_SLACK && lv >= lower - BOUND_SLACK,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_g(q: f64, rho: f64) -> f64 {
        // direct truncated sum; tail below 1e-14 for the q used here
        (1..20_000)
            .map(|k| (k as f64).powf(rho) * (1.0 - q).powi(k - 1) * q)
            .sum()
    }

    #[test]
    fn tilted_examples() {
        let u = tilted_strategy(&[0.25; 4], 2.0).unwrap();
        for &v in u.pmf() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert_eq!(tilted_strategy(&[0.0, 1.0, 0.0], 3.0).unwrap().pmf(), &[0.0, 1.0, 0.0]);
        let t = tilted_strategy(&[0.75, 0.25], 1.0).unwrap();
        assert!((t.pmf()[0] - 0.63397).abs() < 1e-5);
        assert!((t.pmf()[1] - 0.36603).abs() < 1e-5);
        let z = 0.75f64.sqrt() + 0.5;
        assert!((t.pmf()[0] - 0.75f64.sqrt() / z).abs() < 1e-15);
        assert!(matches!(tilted_strategy(&[0.5, 0.5], 0.0), Err(Error::RhoNonpositive(_))));
    }

    #[test]
    fn ball_mass_examples() {
        let model = DistortionModel::absolute(3, 1.0).unwrap();
        let balls = model.balls().unwrap();
        let u = Strategy::uniform(3);
        assert!((ball_mass(&u, &balls, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((ball_mass(&u, &balls, 1) - 1.0).abs() < 1e-15);
        let s = Strategy::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(ball_mass(&s, &balls, 0), 0.0);
    }

    #[test]
    fn v_moment_examples() {
        assert_eq!(v_moment(1.0, 3.3).unwrap(), 1.0);
        assert_eq!(v_moment(0.5, 2.0).unwrap(), 4.0);
        assert!((v_moment(0.25, 0.5).unwrap() - 2.0).abs() < 1e-15);
        let series = v_moment_series(0.25, 0.5, 1e-12).unwrap();
        assert!((series.value - 2.0).abs() < 1e-9);
        assert!(matches!(v_moment(0.0, 1.0), Err(Error::ZeroBallMass { .. })));
    }

    #[test]
    fn closed_forms_at_one_half() {
        let expected = [2.0, 6.0, 26.0, 150.0];
        for (i, &e) in expected.iter().enumerate() {
            let rho = i as u32 + 1;
            assert!((g_moment_integer(0.5, rho).unwrap() - e).abs() < 1e-12);
            let s = g_moment_series(0.5, f64::from(rho), 1e-10).unwrap();
            assert!((s - e).abs() < 1e-9 * e.max(1.0), "rho={rho}: {s}");
            assert!((brute_g(0.5, f64::from(rho)) - e).abs() < 1e-10 * e);
        }
        let g2 = g_moment_integer(0.5, 2).unwrap();
        assert!((4.0..=8.0).contains(&g2));
    }

    #[test]
    fn closed_forms_agree_with_eulerian_route() {
        for rho in 1..=4 {
            for i in 1..20 {
                let q = i as f64 / 20.0;
                let a = g_moment_integer(q, rho).unwrap();
                let b = g_moment_eulerian(q, rho).unwrap();
                assert!((a - b).abs() <= 1e-12 * a, "q={q} rho={rho}");
            }
        }
    }

    #[test]
    fn high_orders_match_brute_force() {
        for rho in 5..=RHO_MAX {
            let a = g_moment_integer(0.3, rho).unwrap();
            let b = brute_g(0.3, f64::from(rho));
            assert!((a - b).abs() <= 1e-10 * a, "rho={rho}: {a} vs {b}");
        }
        assert!(matches!(g_moment_integer(0.3, 13), Err(Error::RhoTooLarge { .. })));
    }

    #[test]
    fn series_limits() {
        assert_eq!(g_moment_series(1.0, 2.7, 1e-12).unwrap(), 1.0);
        let near = g_moment_series(1.0 - 1e-9, 2.7, 1e-12).unwrap();
        assert!((near - 1.0).abs() < 1e-7);
        let q = 0.3;
        let g = g_moment_series(q, 1.5, 1e-12).unwrap();
        let (b1, b2) = g_moment_lower_bounds(q, 1.5);
        assert!(g >= b1 && g >= b2);
        assert!(g <= g_moment_upper_envelope(q, 1.5));
    }

    #[test]
    fn log_moments_survive_tiny_masses() {
        let lg = log_g_moment_integer(1e-200, 12).unwrap();
        assert!(lg.is_finite());
        assert!((lg - (ln_factorial(12.0) + 12.0 * 200.0 * 10f64.ln())).abs() < 1e-6);
    }

    fn lossless_binary() -> (FiniteSource, DistortionModel) {
        (
            FiniteSource::from_pmf(vec![0.75, 0.25]).unwrap(),
            DistortionModel::hamming(2, 0.0).unwrap(),
        )
    }

    #[test]
    fn expected_moments_lossless_tilted() {
        let (s, m) = lossless_binary();
        let t = tilted_strategy(s.pmf(), 1.0).unwrap();
        let r = expected_moments(&s, &t, &m.balls().unwrap(), 1.0).unwrap();
        let z = 0.75f64.sqrt() + 0.5;
        assert!((r.expected_v() - z * z).abs() < 1e-12);
        assert!((r.expected_v() - 1.86603).abs() < 1e-5);
        assert!((r.expected_g() - r.expected_v()).abs() < 1e-12);
    }

    #[test]
    fn expected_moments_trivial_threshold() {
        let s = FiniteSource::from_pmf(vec![0.2, 0.3, 0.5]).unwrap();
        let m = DistortionModel::absolute(3, 2.0).unwrap();
        let r = expected_moments(&s, &Strategy::uniform(3), &m.balls().unwrap(), 2.0).unwrap();
        assert!(r.log_expected_v.abs() < 1e-15);
        assert!(r.log_expected_g.abs() < 1e-15);
    }

    #[test]
    fn zero_mass_ball_names_symbol() {
        let (s, m) = lossless_binary();
        let strat = Strategy::new(vec![1.0, 0.0]).unwrap();
        let err = expected_moments(&s, &strat, &m.balls().unwrap(), 1.0).unwrap_err();
        assert_eq!(err, Error::ZeroBallMass { symbol: Some("1".into()) });
    }

    #[test]
    fn achievability_constant_quantizer() {
        let s = FiniteSource::from_pmf(vec![0.5, 0.3, 0.2]).unwrap();
        let m = DistortionModel::absolute(3, 1.0).unwrap();
        for rho in [0.5, 1.0, 2.0] {
            let r = oneshot_achievability(&s, &m, rho).unwrap();
            assert_eq!(r.bound_rhs_v, Some(0.0));
            assert!(r.log_expected_v.abs() < 1e-15);
        }
    }

    #[test]
    fn achievability_lossless_equality() {
        let (s, m) = lossless_binary();
        for rho in [1.0, 2.0, 3.0] {
            let r = oneshot_achievability(&s, &m, rho).unwrap();
            assert!((r.log_expected_v - r.bound_rhs_v.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn sync_examples() {
        let (s, m) = lossless_binary();
        let r = optimal_sync_guesswork(&s, &m, 1.0).unwrap();
        assert_eq!(r.ordering, vec![0, 1]);
        assert!((r.value - 1.25).abs() < 1e-15);
        assert!(r.within_bracket);
        let big = DistortionModel::absolute(3, 2.0).unwrap();
        let s3 = FiniteSource::from_pmf(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(optimal_sync_guesswork(&s3, &big, 2.0).unwrap().value, 1.0);
    }

    #[test]
    fn loglog_form_fails_on_uniform_binary() {
        let s = FiniteSource::from_pmf(vec![0.5, 0.5]).unwrap();
        let m = DistortionModel::hamming(2, 0.0).unwrap();
        let r = optimal_sync_guesswork(&s, &m, 1.0).unwrap();
        assert!((r.value - 1.5).abs() < 1e-15);
        assert!(r.value.ln() < r.lower_loglog);
        assert!(r.within_bracket);
    }
}
