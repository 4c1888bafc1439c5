//! Asymptotic exponents of guessing with product strategies.
//!
//! For a fixed i.i.d. strategy `Q̂` the exponent of `E[G^ρ]` is
//! `max_Q [ρ R(Q, Q̂|Δ) − D(Q‖P)]`; the best product strategy minimizes this
//! over `Q̂`. The synchronous benchmark replaces the mismatched function by
//! the rate-distortion function. The inner maximization is solved by a
//! minorize-maximize fixed point `Q ∝ P e^{ρ c}`, where `c` are the dual
//! source costs of the mismatched problem, with random restarts. The outer
//! minimization is a projected subgradient method whose cutting planes also
//! yield a certified lower bound.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distortion::{validate_pmf, DistortionModel};
use crate::error::{Error, Result};
use crate::info::{divergence, normalize, Nats};
use crate::numeric::log_sum_exp;
use crate::rd::{mismatched_rd, rate_distortion, RDResult, SolverControls, Stall};

/// Bracket `lower ≤ optimum ≤ upper` for a min-max value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub lower: f64,
    pub upper: f64,
}

impl Certificate {
    pub fn gap(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentDiagnostics {
    /// Objective evaluations (inner solves for outer problems).
    pub evaluations: usize,
    /// Ascent or descent iterations summed over all runs.
    pub iterations: usize,
    pub restarts: usize,
    pub converged: bool,
    /// Best minus worst restart value of the final inner maximization.
    pub restart_spread: f64,
    pub certificate: Option<Certificate>,
    /// For a source class, index of the source attaining the maximum at the
    /// reported strategy.
    pub active_source: Option<usize>,
}

/// An exponent in nats per symbol together with the laws attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub value: f64,
    /// Maximizing source type `Q*`.
    pub inner_witness: Vec<f64>,
    /// Reproduction law `Q̂*` (the strategy, or the output marginal for the
    /// synchronous benchmark).
    pub outer_witness: Option<Vec<f64>>,
    pub diagnostics: ExponentDiagnostics,
}

fn check_problem(p: &[f64], model: &DistortionModel, rho: f64, controls: &SolverControls) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::RhoNonpositive(rho));
    }
    if p.len() != model.source_size() {
        return Err(Error::DimensionMismatch(format!(
            "source pmf has {} entries, model has {} source symbols",
            p.len(),
            model.source_size()
        )));
    }
    validate_pmf(p)?;
    let size = model.source_size().max(model.repro_size());
    if size > controls.alphabet_cap {
        return Err(Error::InstanceTooLarge {
            what: "exponent optimization",
            size: size as f64,
            cap: controls.alphabet_cap as f64,
        });
    }
    Ok(())
}

/// First source symbol charged by `p` with no reproduction in the support
/// of `weights` within distortion `Δ`.
fn uncovered_symbol(p: &[f64], weights: &[f64], model: &DistortionModel) -> Option<usize> {
    let delta = model.delta();
    (0..p.len()).find(|&x| {
        p[x] > 0.0 && !(0..weights.len()).any(|xh| weights[xh] > 0.0 && model.d(x, xh) <= delta)
    })
}

fn random_pmf(rng: &mut ChaCha8Rng, support: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = support
        .iter()
        .map(|&s| if s > 0.0 { -(1.0 - rng.gen::<f64>()).ln() } else { 0.0 })
        .collect();
    normalize(&mut v);
    v
}

fn barycenter(support: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = support.iter().map(|&s| if s > 0.0 { 1.0 } else { 0.0 }).collect();
    normalize(&mut v);
    v
}

/// Starting points: barycenter of the support, `P` itself, then
/// `controls.restarts` uniform draws from the simplex on the support.
fn starts(p: &[f64], controls: &SolverControls) -> Vec<Vec<f64>> {
    let mut out = vec![barycenter(p), p.to_vec()];
    for i in 0..controls.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(controls.seed);
        rng.set_stream(i as u64 + 1);
        out.push(random_pmf(&mut rng, p));
    }
    out
}

fn finite_divergence(q: &[f64], p: &[f64]) -> Result<f64> {
    match divergence(q, p)? {
        Nats::Finite(v) => Ok(v),
        Nats::Infinite => Err(Error::InvalidPmf("source type leaves the support of the source".into())),
    }
}

/// One local maximization of `Q ↦ ρ R(Q, Q̂|Δ) − D(Q‖P)`.
#[derive(Debug, Clone)]
struct InnerRun {
    value: f64,
    q: Vec<f64>,
    rd: RDResult,
    iterations: usize,
    converged: bool,
}

fn inner_objective(
    q: &[f64],
    p: &[f64],
    qh: &[f64],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
) -> Result<(f64, RDResult)> {
    let rd = mismatched_rd(q, qh, model, controls).map_err(|e| match e {
        Error::NoFeasibleChannel { .. } => Error::InfiniteExponent {
            symbol: uncovered_symbol(q, qh, model).unwrap_or(0),
        },
        other => other,
    })?;
    Ok((rho * rd.value - finite_divergence(q, p)?, rd))
}

/// `Q_{t+1} ∝ P e^{ρ c(Q_t)}`. Each step maximizes a minorizer that is tight
/// at `Q_t`, so the objective never decreases.
fn mm_ascent(
    start: Vec<f64>,
    p: &[f64],
    qh: &[f64],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
) -> Result<InnerRun> {
    let (mut value, mut rd) = inner_objective(&start, p, qh, model, rho, controls)?;
    let mut q = start;
    let mut stall = Stall::new(controls.value_tol, controls.stall_iterations);
    for it in 1..=controls.max_iterations {
        let logits: Vec<f64> = p
            .iter()
            .zip(&rd.source_costs)
            .map(|(&px, &c)| if px > 0.0 { px.ln() + rho * c } else { f64::NEG_INFINITY })
            .collect();
        let norm = log_sum_exp(&logits);
        let next: Vec<f64> = logits.iter().map(|&l| (l - norm).exp()).collect();
        let (next_value, next_rd) = inner_objective(&next, p, qh, model, rho, controls)?;
        if next_value < value - 1e-12 * value.abs().max(1.0) {
            // Rounding in the inner solve; keep the better point.
            return Ok(InnerRun { value, q, rd, iterations: it, converged: true });
        }
        q = next;
        value = next_value;
        rd = next_rd;
        if stall.update(value) {
            return Ok(InnerRun { value, q, rd, iterations: it, converged: true });
        }
    }
    Ok(InnerRun { value, q, rd, iterations: controls.max_iterations, converged: false })
}

struct InnerMax {
    best: InnerRun,
    spread: f64,
    iterations: usize,
    restarts: usize,
}

fn inner_max(
    p: &[f64],
    qh: &[f64],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
) -> Result<InnerMax> {
    if let Some(symbol) = uncovered_symbol(p, qh, model) {
        return Err(Error::InfiniteExponent { symbol });
    }
    let runs = starts(p, controls)
        .into_iter()
        .map(|s| mm_ascent(s, p, qh, model, rho, controls))
        .collect::<Result<Vec<_>>>()?;
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let worst = runs.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let restarts = runs.len();
    // Largest value, earliest start on ties.
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .expect("at least two starts");
    Ok(InnerMax { spread: best.value - worst, best, iterations, restarts })
}

/// Exponent of `E[G^ρ]` for the product strategy `Q̂`:
/// `max_Q [ρ R(Q, Q̂|Δ) − D(Q‖P)]`. Infinite, reported as
/// `InfiniteExponent`, when some source symbol has no reproduction in the
/// support of `Q̂` within distortion `Δ`.
pub fn iid_strategy_exponent(
    p: &[f64],
    q_xh: &[f64],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
) -> Result<ExponentReport> {
    check_problem(p, model, rho, controls)?;
    if q_xh.len() != model.repro_size() {
        return Err(Error::DimensionMismatch(format!(
            "strategy has {} entries, model has {} reproduction symbols",
            q_xh.len(),
            model.repro_size()
        )));
    }
    validate_pmf(q_xh)?;
    let m = inner_max(p, q_xh, model, rho, controls)?;
    Ok(ExponentReport {
        value: m.best.value,
        diagnostics: ExponentDiagnostics {
            evaluations: 1,
            iterations: m.iterations,
            restarts: m.restarts,
            converged: m.best.converged,
            restart_spread: m.spread,
            certificate: None,
            active_source: None,
        },
        inner_witness: m.best.q,
        outer_witness: Some(q_xh.to_vec()),
    })
}

/// Value and Danskin subgradient in `Q̂` of the strategy exponent:
/// `∂/∂Q̂(x̂) = −ρ (Q*V*)(x̂) / Q̂(x̂)` with `Q*` the inner maximizer and `V*`
/// its mismatched witness channel.
pub fn strategy_exponent_subgradient(
    p: &[f64],
    q_xh: &[f64],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
) -> Result<(f64, Vec<f64>)> {
    check_problem(p, model, rho, controls)?;
    validate_pmf(q_xh)?;
    let m = inner_max(p, q_xh, model, rho, controls)?;
    Ok((m.best.value, danskin(&m.best, q_xh, rho)?))
}

fn danskin(run: &InnerRun, qh: &[f64], rho: f64) -> Result<Vec<f64>> {
    let w = run.rd.witness_channel.output_marginal(&run.q)?;
    Ok(w.iter()
        .zip(qh)
        .map(|(&wj, &qj)| if wj > 0.0 { -rho * wj / qj } else { 0.0 })
        .collect())
}

/// One evaluation of an outer objective.
struct OuterEval {
    value: f64,
    grad: Vec<f64>,
    inner_q: Vec<f64>,
    source: usize,
    restart_spread: f64,
    iterations: usize,
}

struct OuterSolution {
    best: OuterEval,
    qh: Vec<f64>,
    evaluations: usize,
    iterations: usize,
    certificate: Certificate,
}

fn floor_renormalize(v: &[f64], floor: f64) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().map(|&x| x.max(floor)).collect();
    normalize(&mut out);
    out
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut css = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        css += ui;
        let t = (css - 1.0) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Points of the simplex grid with the given number of steps per unit.
fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() + 1 == k {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k, left - c, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, steps, steps, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Planes whose slopes exceed this are left out of the cutting-plane model;
/// dropping planes keeps the bound valid and avoids cancellation.
const PLANE_SLOPE_CAP: f64 = 1e8;

/// Minimum over the simplex of the cutting-plane model
/// `max_i [f_i + g_i·(q − q_i)]`, a lower bound on a convex function.
fn cutting_plane_bound(planes: &[(Vec<f64>, f64, Vec<f64>)], k: usize) -> Option<(f64, Vec<f64>)> {
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let t = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    let q: Vec<_> = (0..k).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    lp.add_constraint(q.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    let mut used = 0;
    for (point, value, grad) in planes {
        let slope = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if !(slope <= PLANE_SLOPE_CAP) {
            continue;
        }
        let s = slope.max(1.0);
        let offset: f64 = value - grad.iter().zip(point).map(|(g, x)| g * x).sum::<f64>();
        let mut row = vec![(t, 1.0 / s)];
        row.extend(q.iter().zip(grad).map(|(&v, &g)| (v, -g / s)));
        lp.add_constraint(row, ComparisonOp::Ge, offset / s);
        used += 1;
    }
    if used == 0 {
        return None;
    }
    let sol = lp.solve().ok()?;
    Some((sol.objective(), q.iter().map(|&v| sol[v]).collect()))
}

/// Subgradient steps allowed without improving the best value.
const SUBGRADIENT_PATIENCE: usize = 40;

/// Minimizes a convex function of the reproduction law given by `eval`.
/// Seeds (uniform law, a coarse simplex grid for small alphabets) are
/// followed by normalized projected subgradient steps, golden-section polish
/// along pairwise mass transfers, and cutting-plane refinement until the
/// certificate closes or the budget is spent.
fn outer_minimize<F>(k: usize, mut eval: F, controls: &SolverControls) -> Result<OuterSolution>
where
    F: FnMut(&[f64]) -> Result<OuterEval>,
{
    let floor = controls.floor;
    let mut planes: Vec<(Vec<f64>, f64, Vec<f64>)> = Vec::new();
    let mut evaluations = 0;
    let mut iterations = 0;
    let mut best: Option<(OuterEval, Vec<f64>)> = None;

    let mut visit = |qh: Vec<f64>,
                     planes: &mut Vec<(Vec<f64>, f64, Vec<f64>)>,
                     best: &mut Option<(OuterEval, Vec<f64>)>|
     -> Result<(f64, Vec<f64>)> {
        let ev = eval(&qh)?;
        evaluations += 1;
        iterations += ev.iterations;
        planes.push((qh.clone(), ev.value, ev.grad.clone()));
        let out = (ev.value, ev.grad.clone());
        if best.as_ref().is_none_or(|(b, _)| ev.value < b.value) {
            *best = Some((ev, qh));
        }
        Ok(out)
    };

    let mut seeds = vec![vec![1.0 / k as f64; k]];
    if k <= 3 {
        seeds.extend(simplex_grid(k, 10).into_iter().map(|g| floor_renormalize(&g, floor)));
    }
    for s in seeds {
        visit(s, &mut planes, &mut best)?;
    }

    // Projected subgradient descent with normalized, diminishing steps.
    let mut x = best.as_ref().unwrap().1.clone();
    let mut grad = best.as_ref().unwrap().0.grad.clone();
    let step0 = 0.1;
    let mut last_gain = 0;
    let mut record = best.as_ref().unwrap().0.value;
    for t in 0..controls.outer_iterations {
        if t - last_gain > SUBGRADIENT_PATIENCE {
            break;
        }
        let mean = grad.iter().sum::<f64>() / k as f64;
        let tangent: Vec<f64> = grad.iter().map(|g| g - mean).collect();
        let norm = tangent.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            break;
        }
        let step = step0 / ((t + 1) as f64).sqrt();
        let moved: Vec<f64> = x.iter().zip(&tangent).map(|(xi, gi)| xi - step * gi / norm).collect();
        x = floor_renormalize(&project_simplex(&moved), floor);
        grad = visit(x.clone(), &mut planes, &mut best)?.1;
        let current = best.as_ref().unwrap().0.value;
        if current < record - controls.value_tol * record.abs().max(1.0) {
            record = current;
            last_gain = t;
        }
    }

    // Golden-section polish: the objective is convex along q + t(e_i − e_j).
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _sweep in 0..2 {
        for i in 0..k {
            for j in (i + 1)..k {
                let base = best.as_ref().unwrap().1.clone();
                let along = |t: f64| -> Vec<f64> {
                    let mut v = base.clone();
                    v[i] += t;
                    v[j] -= t;
                    floor_renormalize(&v, floor)
                };
                let (mut a, mut b) = (-base[i], base[j]);
                let mut c = b - inv_phi * (b - a);
                let mut d = a + inv_phi * (b - a);
                let mut fc = visit(along(c), &mut planes, &mut best)?.0;
                let mut fd = visit(along(d), &mut planes, &mut best)?.0;
                for _ in 0..30 {
                    if fc < fd {
                        b = d;
                        d = c;
                        fd = fc;
                        c = b - inv_phi * (b - a);
                        fc = visit(along(c), &mut planes, &mut best)?.0;
                    } else {
                        a = c;
                        c = d;
                        fc = fd;
                        d = a + inv_phi * (b - a);
                        fd = visit(along(d), &mut planes, &mut best)?.0;
                    }
                }
            }
        }
    }

    // Cutting-plane refinement of the certificate.
    let mut lower = f64::NEG_INFINITY;
    for _ in 0..controls.outer_iterations {
        let upper = best.as_ref().unwrap().0.value;
        let Some((lb, argmin)) = cutting_plane_bound(&planes, k) else {
            break;
        };
        lower = lower.max(lb);
        if upper - lower <= controls.certificate_gap {
            break;
        }
        visit(floor_renormalize(&argmin, floor), &mut planes, &mut best)?;
    }
    let (best, qh) = best.unwrap();
    let upper = best.value;
    Ok(OuterSolution {
        certificate: Certificate { lower: lower.min(upper), upper },
        best,
        qh,
        evaluations,
        iterations,
    })
}

fn outer_report(sol: OuterSolution, controls: &SolverControls) -> ExponentReport {
    ExponentReport {
        value: sol.best.value,
        inner_witness: sol.best.inner_q,
        outer_witness: Some(sol.qh),
        diagnostics: ExponentDiagnostics {
            evaluations: sol.evaluations,
            iterations: sol.iterations,
            restarts: controls.restarts + 2,
            converged: sol.certificate.gap() <= controls.certificate_gap,
            restart_spread: sol.best.restart_spread,
            certificate: Some(sol.certificate),
            active_source: Some(sol.best.source),
        },
    }
}

fn require_nonempty_balls(p: &[f64], model: &DistortionModel) -> Result<()> {
    let full = vec![1.0; model.repro_size()];
    match uncovered_symbol(p, &full, model) {
        Some(symbol) => Err(Error::InfiniteExponent { symbol }),
        None => Ok(()),
    }
}

fn strategy_eval(
    p: &[f64],
    qh: &[f64],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
    source: usize,
) -> Result<OuterEval> {
    let m = inner_max(p, qh, model, rho, controls)?;
    Ok(OuterEval {
        value: m.best.value,
        grad: danskin(&m.best, qh, rho)?,
        inner_q: m.best.q,
        source,
        restart_spread: m.spread,
        iterations: m.iterations,
    })
}

/// Best exponent over product strategies:
/// `min_Q̂ max_Q [ρ R(Q, Q̂|Δ) − D(Q‖P)]`. The report carries a certificate
/// `[lower, upper]`; `converged` is set when its width is within
/// `controls.certificate_gap`.
pub fn optimal_iid_exponent(
    p: &[f64],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
) -> Result<ExponentReport> {
    uncertainty_exponent(&[p.to_vec()], model, rho, controls)
}

/// Exponent of the best product strategy against a finite class of sources:
/// `min_Q̂ max_{P∈class} max_Q [ρ R(Q, Q̂|Δ) − D(Q‖P)]`.
pub fn uncertainty_exponent(
    sources: &[Vec<f64>],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
) -> Result<ExponentReport> {
    if sources.is_empty() {
        return Err(Error::InvalidPmf("empty source class".into()));
    }
    for p in sources {
        check_problem(p, model, rho, controls)?;
        require_nonempty_balls(p, model)?;
    }
    let sol = outer_minimize(
        model.repro_size(),
        |qh| {
            let mut best: Option<OuterEval> = None;
            for (i, p) in sources.iter().enumerate() {
                let ev = strategy_eval(p, qh, model, rho, controls, i)?;
                if best.as_ref().is_none_or(|b| ev.value > b.value) {
                    best = Some(ev);
                }
            }
            Ok(best.unwrap())
        },
        controls,
    )?;
    Ok(outer_report(sol, controls))
}

fn sync_objective(
    q: &[f64],
    p: &[f64],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
) -> Result<(f64, RDResult)> {
    let rd = rate_distortion(q, model, controls)?;
    Ok((rho * rd.value - finite_divergence(q, p)?, rd))
}

/// Mirror ascent `Q ← Q^{1−η} (P e^{ρ c})^η` with backtracking on `η`,
/// where `c` are the source costs of the rate-distortion solution.
fn sync_ascent(
    start: Vec<f64>,
    p: &[f64],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
) -> Result<InnerRun> {
    let (mut value, mut rd) = sync_objective(&start, p, model, rho, controls)?;
    let mut q = start;
    let mut stall = Stall::new(controls.value_tol, controls.stall_iterations);
    let mut eta = 1.0;
    for it in 1..=controls.max_iterations {
        let mut accepted = None;
        while eta >= 1e-6 {
            let logits: Vec<f64> = (0..p.len())
                .map(|x| {
                    if p[x] > 0.0 && q[x] > 0.0 {
                        (1.0 - eta) * q[x].ln() + eta * (p[x].ln() + rho * rd.source_costs[x])
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            let norm = log_sum_exp(&logits);
            let next: Vec<f64> = logits.iter().map(|&l| (l - norm).exp()).collect();
            let (v, r) = sync_objective(&next, p, model, rho, controls)?;
            if v >= value - 1e-13 * value.abs().max(1.0) {
                accepted = Some((next, v, r));
                break;
            }
            eta *= 0.5;
        }
        let Some((next, v, r)) = accepted else {
            return Ok(InnerRun { value, q, rd, iterations: it, converged: true });
        };
        q = next;
        value = v;
        rd = r;
        eta = (eta * 2.0).min(1.0);
        if stall.update(value) {
            return Ok(InnerRun { value, q, rd, iterations: it, converged: true });
        }
    }
    Ok(InnerRun { value, q, rd, iterations: controls.max_iterations, converged: false })
}

/// Synchronous benchmark `E_ρ = max_Q [ρ R(Q|Δ) − D(Q‖P)]`.
pub fn synchronous_exponent(
    p: &[f64],
    model: &DistortionModel,
    rho: f64,
    controls: &SolverControls,
) -> Result<ExponentReport> {
    check_problem(p, model, rho, controls)?;
    require_nonempty_balls(p, model)?;
    let runs = starts(p, controls)
        .into_iter()
        .map(|s| sync_ascent(s, p, model, rho, controls))
        .collect::<Result<Vec<_>>>()?;
    let iterations = runs.iter().map(|r| r.iterations).sum();
    let restarts = runs.len();
    let worst = runs.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let best = runs.into_iter().reduce(|a, b| if b.value > a.value { b } else { a }).unwrap();
    let marginal = best.rd.witness_channel.output_marginal(&best.q)?;
    Ok(ExponentReport {
        value: best.value,
        diagnostics: ExponentDiagnostics {
            evaluations: restarts,
            iterations,
            restarts,
            converged: best.converged && best.rd.converged,
            restart_spread: best.value - worst,
            certificate: None,
            active_source: None,
        },
        inner_witness: best.q,
        outer_witness: Some(marginal),
    })
}

/// Loss of product strategies against the synchronous benchmark,
/// `E_ρ^iid − E_ρ`. Nonnegative up to solver accuracy.
pub fn iid_penalty(p: &[f64], model: &DistortionModel, rho: f64, controls: &SolverControls) -> Result<f64> {
    let iid = optimal_iid_exponent(p, model, rho, controls)?;
    let sync = synchronous_exponent(p, model, rho, controls)?;
    Ok(iid.value - sync.value)
}

/// Midpoint test of the inner objective along random segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityProbe {
    pub segments: usize,
    pub violations: usize,
    /// Largest `(f(a) + f(b))/2 − f((a+b)/2)` seen.
    pub worst: f64,
}

/// Checks `f((a+b)/2) ≥ (f(a)+f(b))/2` for `f(Q) = ρ R(Q, Q̂|Δ) − D(Q‖P)` on
/// random pairs of source types. A diagnostic; the objective need not be
/// concave.
pub fn concavity_probe(
    p: &[f64],
    q_xh: &[f64],
    model: &DistortionModel,
    rho: f64,
    segments: usize,
    controls: &SolverControls,
) -> Result<ConcavityProbe> {
    check_problem(p, model, rho, controls)?;
    if let Some(symbol) = uncovered_symbol(p, q_xh, model) {
        return Err(Error::InfiniteExponent { symbol });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(controls.seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..segments {
        let a = random_pmf(&mut rng, p);
        let b = random_pmf(&mut rng, p);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let fa = inner_objective(&a, p, q_xh, model, rho, controls)?.0;
        let fb = inner_objective(&b, p, q_xh, model, rho, controls)?.0;
        let fm = inner_objective(&mid, p, q_xh, model, rho, controls)?.0;
        let excess = 0.5 * (fa + fb) - fm;
        worst = worst.max(excess);
        if excess > 1e-9 {
            violations += 1;
        }
    }
    Ok(ConcavityProbe { segments, violations, worst })
}
