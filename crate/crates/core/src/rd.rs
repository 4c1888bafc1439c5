//! Distortion-constrained minimizations over channels: the rate-distortion
//! function `R(Q|Δ)` and its mismatched counterpart `R(Q, Q̂|Δ)`, where the
//! output marginal is replaced by a fixed reproduction law `Q̂`.
//!
//! The mismatched problem `min Σ Q(x)V(x̂|x) ln[V(x̂|x)/Q̂(x̂)]` subject to an
//! average distortion budget is solved on the tilted family
//! `V_λ(x̂|x) ∝ Q̂(x̂) e^{-λ d(x,x̂)}` with `λ` found by bisection. The ordinary
//! rate-distortion function uses Blahut–Arimoto iterations at fixed slope,
//! again with bisection on the slope.

use serde::{Deserialize, Serialize};

use crate::distortion::{validate_pmf, DistortionModel};
use crate::error::{Error, Result};
use crate::info::{mismatched_objective, mutual_info, normalize, Channel, Nats};
use crate::numeric::{solve_linear, CompensatedSum};

/// Tolerances and iteration caps shared by the channel and exponent solvers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverControls {
    /// Stall threshold: a run stops once the value moves less than this for
    /// `stall_iterations` consecutive iterations.
    pub value_tol: f64,
    pub stall_iterations: usize,
    pub max_iterations: usize,
    /// Target for the Blahut–Arimoto upper/lower bound gap.
    pub gap_tol: f64,
    /// Largest bound gap still reported as converged.
    pub converged_tol: f64,
    /// Slope cap, in units of `1 / max d`.
    pub lambda_cap: f64,
    pub bisection_iterations: usize,
    /// Random restarts of the inner maximization over source types.
    pub restarts: usize,
    pub seed: u64,
    pub outer_iterations: usize,
    /// Target width of the min-max certificate.
    pub certificate_gap: f64,
    pub alphabet_cap: usize,
    /// Floor applied to reproduction-law iterates before renormalizing.
    pub floor: f64,
    /// Step of the simplex grid used by the grid oracle.
    pub grid_step: f64,
}

impl Default for SolverControls {
    fn default() -> Self {
        Self {
            value_tol: 1e-10,
            stall_iterations: 3,
            max_iterations: 100_000,
            gap_tol: 1e-12,
            converged_tol: 1e-9,
            lambda_cap: 1e6,
            bisection_iterations: 200,
            restarts: 20,
            seed: 0,
            outer_iterations: 400,
            certificate_gap: 1e-4,
            alphabet_cap: 12,
            floor: 1e-12,
            grid_step: 0.02,
        }
    }
}

/// Solution of a channel minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RDResult {
    /// Optimal value in nats, computed from the witness channel.
    pub value: f64,
    pub witness_channel: Channel,
    /// Multiplier of the distortion constraint; `+∞` when the budget equals
    /// the least achievable distortion.
    pub lagrange_lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Certified bound on the suboptimality of the witness.
    pub residual: f64,
    pub achieved_distortion: f64,
    /// Per-symbol costs `c_x` with `value = Σ_x Q(x) c_x` when the constraint
    /// binds; `c` is a supergradient of the value in `Q` up to a constant.
    pub source_costs: Vec<f64>,
}

/// Monotone stall detector for the "small change for k iterations" rule.
#[derive(Debug, Clone)]
pub(crate) struct Stall {
    last: f64,
    count: usize,
    tol: f64,
    needed: usize,
}

impl Stall {
    pub(crate) fn new(tol: f64, needed: usize) -> Self {
        Self { last: f64::NAN, count: 0, tol, needed }
    }

    pub(crate) fn update(&mut self, value: f64) -> bool {
        if (value - self.last).abs() < self.tol {
            self.count += 1;
        } else {
            self.count = 0;
        }
        self.last = value;
        self.count >= self.needed
    }
}

fn check_dims(q_x: &[f64], model: &DistortionModel) -> Result<()> {
    if q_x.len() != model.source_size() {
        return Err(Error::DimensionMismatch(format!(
            "source pmf has {} entries, model has {} source symbols",
            q_x.len(),
            model.source_size()
        )));
    }
    validate_pmf(q_x)
}

fn distortion_scale(model: &DistortionModel) -> f64 {
    let s = model.max_distortion();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Slack below which a budget counts as sitting at the least achievable
/// distortion.
fn boundary_slack(scale: f64) -> f64 {
    1e-12 * scale
}

/// Rows of the tilted family at slope `lambda` restricted to the support of
/// `weights`, with `m[x]` the row minimum over that support. Returns rows and
/// the shifted log partition `ln Σ w e^{-λ(d - m_x)}`.
fn tilt(
    weights: &[f64],
    d: &[Vec<f64>],
    m: &[f64],
    lambda: f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    if lambda == 0.0 {
        return (vec![weights.to_vec(); d.len()], vec![0.0; d.len()]);
    }
    let mut rows = Vec::with_capacity(d.len());
    let mut log_z = Vec::with_capacity(d.len());
    for (drow, &mx) in d.iter().zip(m) {
        let mut row: Vec<f64> = drow
            .iter()
            .zip(weights)
            .map(|(&dv, &w)| {
                if w <= 0.0 {
                    0.0
                } else if lambda.is_infinite() {
                    if dv == mx {
                        w
                    } else {
                        0.0
                    }
                } else {
                    w * (-lambda * (dv - mx)).exp()
                }
            })
            .collect();
        let z: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= z;
        }
        rows.push(row);
        log_z.push(z.ln());
    }
    (rows, log_z)
}

fn average(q_x: &[f64], rows: &[Vec<f64>], d: &[Vec<f64>]) -> f64 {
    let mut acc = CompensatedSum::new();
    for ((row, drow), &px) in rows.iter().zip(d).zip(q_x) {
        for (&v, &dv) in row.iter().zip(drow) {
            acc.add(px * v * dv);
        }
    }
    acc.value()
}

fn costs(log_z: &[f64], m: &[f64], lambda: f64, delta: f64) -> Vec<f64> {
    log_z
        .iter()
        .zip(m)
        .map(|(&lz, &mx)| {
            // At λ = ∞ every charged row sits at its minimum, m_x = Δ.
            let shift = if lambda == 0.0 || lambda.is_infinite() || mx == delta {
                0.0
            } else {
                lambda * (mx - delta)
            };
            shift - lz
        })
        .collect()
}

/// Row minima of `d` over the columns where `weights` is positive.
fn row_minima(d: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    d.iter()
        .map(|row| {
            row.iter()
                .zip(weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(&dv, _)| dv)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Bracket `[lo, hi]` on a decreasing function with `f(lo) > 0 >= f(hi)`,
/// refined by the Illinois variant of false position.
#[derive(Debug, Clone, Copy)]
struct Bracket {
    lo: f64,
    f_lo: f64,
    hi: f64,
    f_hi: f64,
    side: i8,
}

impl Bracket {
    fn new(lo: f64, f_lo: f64, hi: f64, f_hi: f64) -> Self {
        Self { lo, f_lo, hi, f_hi, side: 0 }
    }

    /// Secant point of the (possibly down-weighted) endpoint values; the
    /// midpoint when that point is not strictly inside.
    fn next(&self) -> f64 {
        let mid = 0.5 * (self.lo + self.hi);
        let denom = self.f_lo - self.f_hi;
        if !(denom > 0.0) || !self.f_lo.is_finite() {
            return mid;
        }
        let c = self.hi - self.f_hi * (self.hi - self.lo) / (self.f_hi - self.f_lo);
        let margin = 1e-3 * (self.hi - self.lo);
        if c > self.lo + margin && c < self.hi - margin {
            c
        } else {
            mid
        }
    }

    fn update(&mut self, c: f64, fc: f64) {
        if fc > 0.0 {
            self.lo = c;
            self.f_lo = fc;
            if self.side == -1 {
                self.f_hi *= 0.5;
            }
            self.side = -1;
        } else {
            self.hi = c;
            self.f_hi = fc;
            if self.side == 1 {
                self.f_lo *= 0.5;
            }
            self.side = 1;
        }
    }
}

/// Mismatched rate-distortion function
/// `R(Q, Q̂|Δ) = min_V Σ Q(x)V(x̂|x) ln[V(x̂|x)/Q̂(x̂)]` over channels with
/// average distortion at most `Δ`. When `Q̂` cannot meet the budget the
/// value is infinite and `NoFeasibleChannel` carries the least distortion
/// reachable inside the support of `Q̂` as certificate.
pub fn mismatched_rd(
    q_x: &[f64],
    q_xh: &[f64],
    model: &DistortionModel,
    controls: &SolverControls,
) -> Result<RDResult> {
    check_dims(q_x, model)?;
    if q_xh.len() != model.repro_size() {
        return Err(Error::DimensionMismatch(format!(
            "reproduction pmf has {} entries, model has {} reproduction symbols",
            q_xh.len(),
            model.repro_size()
        )));
    }
    validate_pmf(q_xh)?;

    let d = model.matrix();
    let delta = model.delta();
    let scale = distortion_scale(model);
    let m = row_minima(d, q_xh);
    let d_min: f64 = {
        let mut acc = CompensatedSum::new();
        for (&px, &mx) in q_x.iter().zip(&m) {
            if px > 0.0 {
                acc.add(px * mx);
            }
        }
        acc.value()
    };
    if d_min > delta + boundary_slack(scale) {
        return Err(Error::NoFeasibleChannel { min_distortion: d_min, delta });
    }

    let finish = |lambda: f64, iterations: usize, converged: bool, residual: f64| -> Result<RDResult> {
        let (rows, log_z) = tilt(q_xh, d, &m, lambda);
        let achieved = average(q_x, &rows, d);
        let witness = Channel::from_rows_unchecked(rows);
        let value = match mismatched_objective(q_x, &witness, q_xh)? {
            Nats::Finite(v) => v.max(0.0),
            Nats::Infinite => unreachable!("tilted rows live on the support of the reproduction law"),
        };
        Ok(RDResult {
            value,
            witness_channel: witness,
            lagrange_lambda: lambda,
            iterations,
            converged,
            residual,
            achieved_distortion: achieved,
            source_costs: costs(&log_z, &m, lambda, delta),
        })
    };

    let distortion_at = |lambda: f64| -> f64 {
        let (rows, _) = tilt(q_xh, d, &m, lambda);
        average(q_x, &rows, d)
    };

    if distortion_at(0.0) <= delta {
        return finish(0.0, 0, true, 0.0);
    }
    if delta - d_min <= boundary_slack(scale) {
        return finish(f64::INFINITY, 0, true, 0.0);
    }

    let cap = controls.lambda_cap / scale;
    let mut lo = 0.0;
    let mut hi = 1.0 / scale;
    let mut iterations = 0;
    let mut d_hi = distortion_at(hi);
    while d_hi > delta {
        iterations += 1;
        lo = hi;
        hi *= 2.0;
        if hi > cap {
            // Budget lies within reach only at slopes beyond the cap; the
            // limiting channel is feasible and returned unconverged.
            let residual = d_hi - delta;
            return finish(f64::INFINITY, iterations, false, residual);
        }
        d_hi = distortion_at(hi);
    }

    // Value and distortion of the tilted channel at one slope.
    let value_at = |lambda: f64| -> (f64, f64) {
        let (rows, log_z) = tilt(q_xh, d, &m, lambda);
        let dist = average(q_x, &rows, d);
        let mut acc = CompensatedSum::new();
        for (&px, &lz) in q_x.iter().zip(&log_z) {
            if px > 0.0 {
                acc.add(-px * lz);
            }
        }
        (-lambda * (dist - d_min) + acc.value(), dist)
    };

    let mut stall = Stall::new(controls.value_tol, controls.stall_iterations);
    let mut sweep: Vec<(f64, f64)> = Vec::new();
    let f_lo = distortion_at(lo) - delta;
    let mut br = Bracket::new(lo, f_lo, hi, d_hi - delta);
    for _ in 0..controls.bisection_iterations {
        iterations += 1;
        let gap_bound = br.hi * (delta - d_hi);
        if gap_bound <= controls.gap_tol || br.hi - br.lo <= 1e-15 * br.hi {
            break;
        }
        let mid = br.next();
        let (v_mid, d_mid) = value_at(mid);
        if cfg!(debug_assertions) {
            sweep.push((mid, v_mid));
        }
        br.update(mid, d_mid - delta);
        if d_mid <= delta {
            d_hi = d_mid;
        }
        if stall.update(v_mid) {
            break;
        }
    }
    let hi = br.hi;
    if cfg!(debug_assertions) {
        sweep.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in sweep.windows(2) {
            debug_assert!(
                w[1].1 >= w[0].1 - 1e-12 * w[0].1.abs().max(1.0),
                "tilted-family value not monotone in slope: {:?}",
                w
            );
        }
    }
    let residual = hi * (delta - d_hi);
    finish(hi, iterations, residual <= controls.converged_tol, residual.max(0.0))
}

/// Weight of the uniform law mixed into every warm start.
const WARM_START_MIX: f64 = 1e-6;

/// BA iterations between Newton polish attempts.
const POLISH_INTERVAL: usize = 200;

/// Minimum spacing of polish attempts triggered by a stalled value.
const STALL_POLISH_SPACING: usize = 20;

/// A stalled iteration is accepted once its bound gap is below this share
/// of `converged_tol`, so gaps combined across a bracket stay within it.
const STALL_GAP_FRACTION: f64 = 0.1;

/// `Σ_x p_x ln z_x` with `z = W r`; `-inf` if a weighted row vanishes.
fn log_likelihood(q_x: &[f64], w: &[Vec<f64>], r: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for (&px, wrow) in q_x.iter().zip(w) {
        if px > 0.0 {
            let z: f64 = wrow.iter().zip(r).map(|(a, b)| a * b).sum();
            if !(z > 0.0) {
                return f64::NEG_INFINITY;
            }
            acc.add(px * z.ln());
        }
    }
    acc.value()
}

/// Active-set Newton steps on `max_r Σ_x p_x ln (W r)_x` over the simplex.
/// Blahut-Arimoto slows to a sublinear rate when an output symbol is nearly
/// tied at the optimum; a few Newton steps on the current support (plus the
/// most violated outside symbol) resolve such ties. Accepts only steps that
/// increase the objective.
fn newton_polish(q_x: &[f64], w: &[Vec<f64>], r: &mut [f64]) {
    let k = r.len();
    let mut f = log_likelihood(q_x, w, r);
    for _ in 0..50 {
        let z: Vec<f64> = w.iter().map(|row| row.iter().zip(r.iter()).map(|(a, b)| a * b).sum()).collect();
        let mut grad = vec![0.0; k];
        for ((&px, row), &zx) in q_x.iter().zip(w).zip(&z) {
            if px > 0.0 {
                for (g, &wv) in grad.iter_mut().zip(row) {
                    *g += px * wv / zx;
                }
            }
        }
        let outside = (0..k).filter(|&j| r[j] <= 0.0).max_by(|&a, &b| grad[a].total_cmp(&grad[b]));
        let mut active: Vec<usize> = (0..k).filter(|&j| r[j] > 0.0).collect();
        if let Some(j) = outside.filter(|&j| grad[j] > 1.0) {
            active.push(j);
        }
        let s = active.len();
        if s < 2 {
            return;
        }
        // KKT system of the quadratic model on the face Σ step = 0.
        let mut a = vec![vec![0.0; s + 1]; s + 1];
        let mut b = vec![0.0; s + 1];
        for (i, &ji) in active.iter().enumerate() {
            for (l, &jl) in active.iter().enumerate() {
                a[i][l] = q_x
                    .iter()
                    .zip(w)
                    .zip(&z)
                    .filter(|((&px, _), _)| px > 0.0)
                    .map(|((&px, row), &zx)| px * row[ji] * row[jl] / (zx * zx))
                    .sum();
            }
            a[i][s] = 1.0;
            a[s][i] = 1.0;
            b[i] = grad[ji];
        }
        let trace: f64 = (0..s).map(|i| a[i][i]).sum();
        for (i, row) in a.iter_mut().enumerate().take(s) {
            row[i] += 1e-13 * trace;
        }
        let Some(sol) = solve_linear(a, b) else {
            return;
        };
        let step = &sol[..s];
        // Projected backtracking: coordinates that would turn negative are
        // clipped to zero, so vanishing entries cannot block the step.
        let mut t = 1.0;
        let mut improved = false;
        while t > 1e-12 {
            let mut cand = r.to_vec();
            for (&j, &d) in active.iter().zip(step) {
                cand[j] = (cand[j] + t * d).max(0.0);
            }
            normalize(&mut cand);
            let fc = log_likelihood(q_x, w, &cand);
            if fc > f {
                r.copy_from_slice(&cand);
                improved = fc - f > 1e-15 * f.abs().max(1.0);
                f = fc;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            return;
        }
    }
}

/// Blahut–Arimoto iterations at a fixed slope, warm-started from `r`.
/// Returns the channel rows, the shifted log partitions and the final bound
/// gap.
fn blahut_arimoto(
    q_x: &[f64],
    d: &[Vec<f64>],
    m: &[f64],
    lambda: f64,
    r: &mut Vec<f64>,
    controls: &SolverControls,
    iterations: &mut usize,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    let k = r.len();
    let w: Vec<Vec<f64>> = d
        .iter()
        .zip(m)
        .map(|(row, &mx)| {
            row.iter()
                .map(|&dv| {
                    if lambda.is_infinite() {
                        if dv == mx {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        (-lambda * (dv - mx)).exp()
                    }
                })
                .collect()
        })
        .collect();
    // Keep every output symbol alive: an entry that underflowed at another
    // slope cannot regrow under multiplicative updates.
    for rj in r.iter_mut() {
        *rj = (1.0 - WARM_START_MIX) * *rj + WARM_START_MIX / k as f64;
    }
    let mut stall = Stall::new(controls.value_tol, controls.stall_iterations);
    let mut c = vec![0.0; k];
    let mut z = vec![0.0; q_x.len()];
    let mut last_gap = f64::INFINITY;
    let mut last_polish = 0;
    let mut polish_due = false;
    for it in 0..controls.max_iterations {
        *iterations += 1;
        if polish_due || (it > 0 && it - last_polish >= POLISH_INTERVAL) {
            newton_polish(q_x, &w, r);
            last_polish = it;
            polish_due = false;
        }
        let mut lower = CompensatedSum::new();
        for (x, (&px, wrow)) in q_x.iter().zip(&w).enumerate() {
            z[x] = wrow.iter().zip(r.iter()).map(|(&a, &b)| a * b).sum();
            if px > 0.0 {
                lower.add(-px * z[x].ln());
            }
        }
        c.iter_mut().for_each(|v| *v = 0.0);
        for ((&px, wrow), &zx) in q_x.iter().zip(&w).zip(&z) {
            if px > 0.0 {
                for (cj, &wv) in c.iter_mut().zip(wrow) {
                    *cj += px * wv / zx;
                }
            }
        }
        let max_log_c = c.iter().map(|&v| v.ln()).fold(f64::NEG_INFINITY, f64::max);
        let mut avg = CompensatedSum::new();
        for (&rj, &cj) in r.iter().zip(&c) {
            if rj > 0.0 && cj > 0.0 {
                avg.add(rj * cj * cj.ln());
            }
        }
        let gap = (max_log_c - avg.value()).max(0.0);
        last_gap = gap;
        let stalled = stall.update(lower.value());
        if gap <= controls.gap_tol || (stalled && gap <= STALL_GAP_FRACTION * controls.converged_tol) {
            let rows = q_x
                .iter()
                .zip(&w)
                .zip(&z)
                .map(|((_, wrow), &zx)| {
                    wrow.iter().zip(r.iter()).map(|(&a, &b)| a * b / zx).collect()
                })
                .collect();
            let log_z = z.iter().map(|v| v.ln()).collect();
            return Ok((rows, log_z, gap));
        }
        if stalled && it - last_polish >= STALL_POLISH_SPACING {
            polish_due = true;
            continue;
        }
        for (rj, &cj) in r.iter_mut().zip(&c) {
            *rj *= cj;
        }
        normalize(r);
    }
    Err(Error::NonConvergence { what: "Blahut-Arimoto iteration", residual: last_gap })
}

/// Rate-distortion function `R(Q|Δ) = min I(Q, V)` over channels with
/// average distortion at most `Δ`.
pub fn rate_distortion(
    q_x: &[f64],
    model: &DistortionModel,
    controls: &SolverControls,
) -> Result<RDResult> {
    check_dims(q_x, model)?;
    let d = model.matrix();
    let delta = model.delta();
    let scale = distortion_scale(model);
    let k = model.repro_size();
    let m: Vec<f64> = (0..model.source_size()).map(|x| model.row_min(x)).collect();
    let d_min: f64 = q_x.iter().zip(&m).filter(|(&p, _)| p > 0.0).map(|(&p, &mx)| p * mx).sum();
    if d_min > delta + boundary_slack(scale) {
        return Err(Error::NoFeasibleChannel { min_distortion: d_min, delta });
    }

    // Zero rate: a constant reproduction meeting the budget.
    let column_cost: Vec<f64> = (0..k)
        .map(|xh| q_x.iter().zip(d).map(|(&p, row)| p * row[xh]).sum())
        .collect();
    let (best_col, d_max) = column_cost
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (j, v)| if v < acc.1 { (j, v) } else { acc });
    if d_max <= delta {
        let mut point = vec![0.0; k];
        point[best_col] = 1.0;
        let witness = Channel::product(&point, model.source_size())?;
        return Ok(RDResult {
            value: 0.0,
            witness_channel: witness,
            lagrange_lambda: 0.0,
            iterations: 0,
            converged: true,
            residual: 0.0,
            achieved_distortion: d_max,
            source_costs: vec![0.0; model.source_size()],
        });
    }

    let mut r = vec![1.0 / k as f64; k];
    let mut iterations = 0;
    let finish = |rows: Vec<Vec<f64>>,
                  log_z: Vec<f64>,
                  lambda: f64,
                  iterations: usize,
                  residual: f64|
     -> Result<RDResult> {
        let witness = Channel::from_rows_unchecked(rows);
        let value = mutual_info(q_x, &witness)?;
        let achieved = witness.average_distortion(q_x, d)?;
        Ok(RDResult {
            value,
            witness_channel: witness,
            lagrange_lambda: lambda,
            iterations,
            converged: residual <= controls.converged_tol,
            residual,
            achieved_distortion: achieved,
            source_costs: costs(&log_z, &m, lambda, delta),
        })
    };

    if delta - d_min <= boundary_slack(scale) {
        let (rows, log_z, gap) =
            blahut_arimoto(q_x, d, &m, f64::INFINITY, &mut r, controls, &mut iterations)?;
        return finish(rows, log_z, f64::INFINITY, iterations, gap);
    }

    let cap = controls.lambda_cap / scale;
    let mut lo = 0.0;
    let mut hi = 1.0 / scale;
    let mut state = blahut_arimoto(q_x, d, &m, hi, &mut r, controls, &mut iterations)?;
    let mut d_hi = average(q_x, &state.0, d);
    let mut d_lo = d_max;
    // Channel and bound gap on the infeasible side; slope 0 is the best
    // constant column.
    let mut lo_state: (Vec<Vec<f64>>, f64) = {
        let mut point = vec![0.0; k];
        point[best_col] = 1.0;
        (vec![point; q_x.len()], 0.0)
    };
    while d_hi > delta {
        lo = hi;
        d_lo = d_hi;
        lo_state = (state.0.clone(), state.2);
        hi *= 2.0;
        if hi > cap {
            let (rows, log_z, gap) =
                blahut_arimoto(q_x, d, &m, f64::INFINITY, &mut r, controls, &mut iterations)?;
            let mut res = finish(rows, log_z, f64::INFINITY, iterations, gap + (d_hi - delta))?;
            res.converged = false;
            return Ok(res);
        }
        state = blahut_arimoto(q_x, d, &m, hi, &mut r, controls, &mut iterations)?;
        d_hi = average(q_x, &state.0, d);
    }

    let mut r_hi = r.clone();
    let mut stall = Stall::new(controls.value_tol, controls.stall_iterations);
    // At slope 0 the optimal channel is the best constant column.
    let f_lo = d_lo - delta;
    let mut br = Bracket::new(lo, f_lo, hi, d_hi - delta);
    // Bound gaps of the feasible-side channel and of the mixture across
    // the bracket (see below).
    let slacks = |br: &Bracket, d_lo: f64, d_hi: f64, gap_lo: f64, gap_hi: f64| -> (f64, f64) {
        let plain = gap_hi + br.hi * (delta - d_hi).max(0.0);
        let mixed = if d_lo > delta && d_hi < delta {
            let theta = (delta - d_hi) / (d_lo - d_hi);
            theta * gap_lo + gap_hi + theta * (br.hi - br.lo) * d_lo
        } else {
            f64::INFINITY
        };
        (plain, mixed)
    };
    for _ in 0..controls.bisection_iterations {
        let (plain, mixed) = slacks(&br, d_lo, d_hi, lo_state.1, state.2);
        if plain.min(mixed) <= controls.gap_tol || br.hi - br.lo <= 1e-15 * br.hi {
            break;
        }
        let mid = br.next();
        let mut r_mid = r_hi.clone();
        let trial = blahut_arimoto(q_x, d, &m, mid, &mut r_mid, controls, &mut iterations)?;
        let d_mid = average(q_x, &trial.0, d);
        let v_mid = mutual_info(q_x, &Channel::from_rows_unchecked(trial.0.clone()))?;
        br.update(mid, d_mid - delta);
        if d_mid <= delta {
            d_hi = d_mid;
            state = trial;
            r_hi = r_mid;
        } else {
            d_lo = d_mid;
            lo_state = (trial.0, trial.2);
        }
        // The value is flat across a kink of the curve, so a stall only ends
        // the search once the bound gap is also small.
        let (plain, mixed) = slacks(&br, d_lo, d_hi, lo_state.1, state.2);
        if stall.update(v_mid) && plain.min(mixed) <= controls.converged_tol {
            break;
        }
    }
    let hi = br.hi;
    let (slack, mixed_slack) = slacks(&br, d_lo, d_hi, lo_state.1, state.2);
    let (rows, log_z, _) = state;
    // A linear piece of the curve makes the distortion jump at one slope.
    // Optimal channels on both sides of the jump are then mixed to meet the
    // budget exactly; the bound gap of the mixture is
    // θ·gap_lo + gap_hi + θ(hi − lo)·D_lo.
    if mixed_slack < slack {
        let theta = (delta - d_hi) / (d_lo - d_hi);
        let mixed: Vec<Vec<f64>> = rows
            .iter()
            .zip(&lo_state.0)
            .map(|(a, b)| a.iter().zip(b).map(|(u, v)| (1.0 - theta) * u + theta * v).collect())
            .collect();
        return finish(mixed, log_z, hi, iterations, mixed_slack);
    }
    finish(rows, log_z, hi, iterations, slack)
}

/// Outcome of checking `min_{Q̂} R(Q, Q̂|Δ) = R(Q|Δ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinIdentityReport {
    pub mismatched_min: f64,
    pub minimizing_repro: Vec<f64>,
    pub rate_distortion: f64,
    pub gap: f64,
    pub iterations: usize,
    pub holds: bool,
}

/// Minimizes the mismatched function over the reproduction law by
/// alternating `Q̂ ← Q V*` with the mismatched solve, and compares the limit
/// with the independently computed rate-distortion function.
pub fn verify_min_identity(
    q_x: &[f64],
    model: &DistortionModel,
    controls: &SolverControls,
    tol: f64,
) -> Result<MinIdentityReport> {
    check_dims(q_x, model)?;
    let reference = rate_distortion(q_x, model, controls)?;
    let k = model.repro_size();
    let mut q_xh = vec![1.0 / k as f64; k];
    let mut stall = Stall::new(controls.value_tol, controls.stall_iterations);
    let mut best = f64::INFINITY;
    let mut best_q = q_xh.clone();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let res = mismatched_rd(q_x, &q_xh, model, controls)?;
        if res.value < best {
            best = res.value;
            best_q.clone_from(&q_xh);
        }
        if stall.update(res.value) {
            break;
        }
        if iterations >= controls.max_iterations {
            return Err(Error::NonConvergence {
                what: "mismatched rate-distortion minimization",
                residual: (best - reference.value).abs(),
            });
        }
        q_xh = res.witness_channel.output_marginal(q_x)?;
        normalize(&mut q_xh);
    }
    let gap = best - reference.value;
    Ok(MinIdentityReport {
        mismatched_min: best,
        minimizing_repro: best_q,
        rate_distortion: reference.value,
        gap,
        iterations,
        holds: gap.abs() <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::divergence;
    use proptest::prelude::*;

    fn h2(e: f64) -> f64 {
        -e * e.ln() - (1.0 - e) * (1.0 - e).ln()
    }

    fn ctl() -> SolverControls {
        SolverControls::default()
    }

    #[test]
    fn large_budget_gives_product_channel() {
        let model = DistortionModel::hamming(3, 1.0).unwrap();
        let q = [0.2, 0.5, 0.3];
        let qh = [0.1, 0.3, 0.6];
        let res = mismatched_rd(&q, &qh, &model, &ctl()).unwrap();
        assert_eq!(res.value, 0.0);
        for row in res.witness_channel.rows() {
            assert_eq!(row.as_slice(), &qh);
        }
        assert_eq!(rate_distortion(&q, &model, &ctl()).unwrap().value, 0.0);
    }

    #[test]
    fn symmetric_binary_closed_form() {
        let model = DistortionModel::hamming(2, 0.1).unwrap();
        let target = 2f64.ln() - h2(0.1);
        assert!((target - 0.36806).abs() < 1e-5);
        let res = mismatched_rd(&[0.5, 0.5], &[0.5, 0.5], &model, &ctl()).unwrap();
        assert!((res.value - target).abs() < 1e-9, "{}", res.value);
        assert!((res.witness_channel.get(0, 1) - 0.1).abs() < 1e-9);
        let rd = rate_distortion(&[0.5, 0.5], &model, &ctl()).unwrap();
        assert!((rd.value - target).abs() < 1e-9, "{}", rd.value);
        assert!(rd.converged);
    }

    #[test]
    fn lossless_limits() {
        let model = DistortionModel::hamming(3, 0.0).unwrap();
        let q = [0.5, 0.3, 0.2];
        let qh = [0.2, 0.2, 0.6];
        let cross: f64 = q.iter().zip(&qh).map(|(a, b): (&f64, &f64)| -a * b.ln()).sum();
        let res = mismatched_rd(&q, &qh, &model, &ctl()).unwrap();
        assert!((res.value - cross).abs() < 1e-12);
        assert!(res.lagrange_lambda.is_infinite());
        let near = model.with_delta(1e-12).unwrap();
        let res = mismatched_rd(&q, &qh, &near, &ctl()).unwrap();
        assert!((res.value - cross).abs() < 1e-9);
        let rd = rate_distortion(&q, &model, &ctl()).unwrap();
        assert!((rd.value - crate::info::entropy(&q)).abs() < 1e-9);
    }

    #[test]
    fn support_gap_is_infinite_with_certificate() {
        let model = DistortionModel::hamming(2, 0.1).unwrap();
        match mismatched_rd(&[0.5, 0.5], &[1.0, 0.0], &model, &ctl()) {
            Err(Error::NoFeasibleChannel { min_distortion, .. }) => {
                assert!((min_distortion - 0.5).abs() < 1e-15)
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn witness_reproduces_value_and_constraint() {
        let d = vec![vec![0.0, 1.0, 3.0], vec![2.0, 0.0, 1.0], vec![1.0, 2.0, 0.0]];
        let model = DistortionModel::from_matrix(d.clone(), 0.4).unwrap();
        let q = [0.3, 0.3, 0.4];
        let qh = [0.5, 0.25, 0.25];
        let res = mismatched_rd(&q, &qh, &model, &ctl()).unwrap();
        let raw = mismatched_objective(&q, &res.witness_channel, &qh).unwrap().finite().unwrap();
        assert!((raw - res.value).abs() < 1e-9);
        let dist = res.witness_channel.average_distortion(&q, &d).unwrap();
        assert!(dist <= 0.4 + 1e-9);
        let dot: f64 = q.iter().zip(&res.source_costs).map(|(a, b)| a * b).sum();
        assert!((dot - res.value).abs() < 1e-8, "{dot} vs {}", res.value);
    }

    #[test]
    fn min_identity_binary() {
        let model = DistortionModel::hamming(2, 0.1).unwrap();
        let rep = verify_min_identity(&[0.5, 0.5], &model, &ctl(), 1e-6).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!((rep.mismatched_min - 0.36806).abs() < 1e-5);
        let model = DistortionModel::hamming(2, 1.0).unwrap();
        let rep = verify_min_identity(&[0.3, 0.7], &model, &ctl(), 1e-6).unwrap();
        assert_eq!((rep.mismatched_min, rep.rate_distortion), (0.0, 0.0));
    }

    /// Lower bound on oracle entries; keeps the entropy gradient finite.
    const ORACLE_FLOOR: f64 = 1e-14;

    /// Euclidean projection onto `{v ≥ ORACLE_FLOOR, Σ v = 1}`.
    fn project_simplex(v: &[f64]) -> Vec<f64> {
        let budget = 1.0 - ORACLE_FLOOR * v.len() as f64;
        let shifted: Vec<f64> = v.iter().map(|&x| x - ORACLE_FLOOR).collect();
        let mut u = shifted.clone();
        u.sort_by(|a, b| b.total_cmp(a));
        let mut css = 0.0;
        let mut theta = 0.0;
        for (i, &ui) in u.iter().enumerate() {
            css += ui;
            let t = (css - budget) / (i as f64 + 1.0);
            if ui - t > 0.0 {
                theta = t;
            }
        }
        shifted.iter().map(|&x| (x - theta).max(0.0) + ORACLE_FLOOR).collect()
    }

    /// Euclidean projection onto channels meeting the budget: rows on the
    /// floored simplex and `Σ a·V ≤ delta`, by bisection on the halfspace
    /// multiplier.
    fn project_feasible(y: &[Vec<f64>], a: &[Vec<f64>], delta: f64) -> Vec<Vec<f64>> {
        let at = |nu: f64| -> (Vec<Vec<f64>>, f64) {
            let v: Vec<Vec<f64>> = y
                .iter()
                .zip(a)
                .map(|(yr, ar)| {
                    let moved: Vec<f64> = yr.iter().zip(ar).map(|(&u, &w)| u - nu * w).collect();
                    project_simplex(&moved)
                })
                .collect();
            let g = v.iter().flatten().zip(a.iter().flatten()).map(|(&x, &w)| x * w).sum();
            (v, g)
        };
        let (v0, g0) = at(0.0);
        if g0 <= delta {
            return v0;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        while at(hi).1 > delta {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if at(mid).1 > delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(hi).0
    }

    /// Direct solve of the mismatched problem by accelerated projected
    /// gradient with backtracking and adaptive restart. Every iterate meets
    /// the budget.
    fn projected_gradient_oracle(q: &[f64], qh: &[f64], d: &[Vec<f64>], delta: f64) -> f64 {
        let n = q.len();
        let k = qh.len();
        let a: Vec<Vec<f64>> = (0..n).map(|x| d[x].iter().map(|&v| q[x] * v).collect()).collect();
        let objective = |v: &[Vec<f64>]| -> f64 {
            let mut f = 0.0;
            for x in 0..n {
                for j in 0..k {
                    f += q[x] * v[x][j] * (v[x][j] / qh[j]).ln();
                }
            }
            f
        };
        let gradient = |v: &[Vec<f64>]| -> Vec<Vec<f64>> {
            (0..n)
                .map(|x| (0..k).map(|j| q[x] * ((v[x][j] / qh[j]).ln() + 1.0)).collect())
                .collect()
        };
        let inner = |g: &[Vec<f64>], u: &[Vec<f64>], w: &[Vec<f64>]| -> f64 {
            (0..n).map(|x| (0..k).map(|j| g[x][j] * (u[x][j] - w[x][j])).sum::<f64>()).sum()
        };
        // Interior start: mix the product channel with a row-argmin channel
        // so that the budget holds with slack.
        let argmin: Vec<usize> = (0..n)
            .map(|x| (0..k).min_by(|&i, &j| d[x][i].total_cmp(&d[x][j])).unwrap())
            .collect();
        let g_prod: f64 = (0..n).map(|x| (0..k).map(|j| a[x][j] * qh[j]).sum::<f64>()).sum();
        let g_min: f64 = (0..n).map(|x| a[x][argmin[x]]).sum();
        let target = g_min + 0.5 * (delta - g_min);
        let t0 = if g_prod <= target { 0.0 } else { (g_prod - target) / (g_prod - g_min) };
        let start: Vec<Vec<f64>> = (0..n)
            .map(|x| {
                (0..k)
                    .map(|j| (1.0 - t0) * qh[j] + if j == argmin[x] { t0 } else { 0.0 })
                    .collect()
            })
            .collect();
        let mut v = project_feasible(&start, &a, delta);
        let mut prev = v.clone();
        let mut f = objective(&v);
        let mut t = 1.0f64;
        let mut step = 1.0;
        let mut window_start = f;
        for it in 1..=200_000 {
            if it % 200 == 0 {
                if window_start - f < 1e-13 {
                    break;
                }
                window_start = f;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let beta = (t - 1.0) / t_next;
            let mut y: Vec<Vec<f64>> = (0..n)
                .map(|x| (0..k).map(|j| v[x][j] + beta * (v[x][j] - prev[x][j])).collect())
                .collect();
            if y.iter().flatten().any(|&e| e < ORACLE_FLOOR) {
                y = v.clone();
            }
            let fy = objective(&y);
            let gy = gradient(&y);
            let cand = loop {
                let moved: Vec<Vec<f64>> = (0..n)
                    .map(|x| (0..k).map(|j| y[x][j] - step * gy[x][j]).collect())
                    .collect();
                let cand = project_feasible(&moved, &a, delta);
                let dist2: f64 = cand.iter().flatten().zip(y.iter().flatten()).map(|(c, e)| (c - e).powi(2)).sum();
                if objective(&cand) <= fy + inner(&gy, &cand, &y) + dist2 / (2.0 * step) + 1e-15
                    || step < 1e-16
                {
                    break cand;
                }
                step *= 0.5;
            };
            let fc = objective(&cand);
            if fc > f {
                // Adaptive restart: drop momentum.
                prev = v.clone();
                t = 1.0;
                continue;
            }
            prev = std::mem::replace(&mut v, cand);
            f = fc;
            t = t_next;
            step *= 1.2;
        }
        f
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn tilted_family_matches_direct_solve(
            qraw in prop::collection::vec(0.05f64..1.0, 3),
            hraw in prop::collection::vec(0.05f64..1.0, 3),
            draw in prop::collection::vec(0.0f64..1.0, 9),
            frac in 0.1f64..0.9,
        ) {
            let mut q = qraw; normalize(&mut q);
            let mut qh = hraw; normalize(&mut qh);
            let d: Vec<Vec<f64>> = (0..3).map(|x| draw[3 * x..3 * x + 3].to_vec()).collect();
            let d_min: f64 = (0..3).map(|x| q[x] * d[x].iter().copied().fold(f64::INFINITY, f64::min)).sum();
            let d_prod: f64 = (0..3).map(|x| q[x] * (0..3).map(|j| qh[j] * d[x][j]).sum::<f64>()).sum();
            let delta = d_min + frac * (d_prod - d_min);
            let model = DistortionModel::from_matrix(d.clone(), delta).unwrap();
            let res = mismatched_rd(&q, &qh, &model, &ctl()).unwrap();
            let oracle = projected_gradient_oracle(&q, &qh, &d, delta);
            prop_assert!((res.value - oracle).abs() <= 1e-6, "tilted {} vs direct {}", res.value, oracle);
        }

        #[test]
        fn mismatched_dominates_and_identity_holds(
            qraw in prop::collection::vec(0.05f64..1.0, 3),
            hraw in prop::collection::vec(0.05f64..1.0, 3),
            draw in prop::collection::vec(0.0f64..1.0, 9),
            delta in 0.0f64..0.6,
        ) {
            let mut q = qraw; normalize(&mut q);
            let mut qh = hraw; normalize(&mut qh);
            let d: Vec<Vec<f64>> = (0..3).map(|x| {
                let mut row = draw[3 * x..3 * x + 3].to_vec();
                row[x] = 0.0;
                row
            }).collect();
            let model = DistortionModel::from_matrix(d, delta).unwrap();
            let rd = rate_distortion(&q, &model, &ctl()).unwrap();
            let mm = mismatched_rd(&q, &qh, &model, &ctl()).unwrap();
            prop_assert!(mm.value >= rd.value - 1e-9);
            let rep = verify_min_identity(&q, &model, &ctl(), 1e-6).unwrap();
            prop_assert!(rep.holds, "{:?}", rep);
        }

        #[test]
        fn mismatched_nonincreasing_in_budget(
            qraw in prop::collection::vec(0.05f64..1.0, 3),
            hraw in prop::collection::vec(0.05f64..1.0, 3),
            a in 0.0f64..1.0, b in 0.0f64..1.0,
        ) {
            let mut q = qraw; normalize(&mut q);
            let mut qh = hraw; normalize(&mut qh);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let m_lo = DistortionModel::absolute(3, lo).unwrap();
            let m_hi = m_lo.with_delta(hi).unwrap();
            let v_lo = mismatched_rd(&q, &qh, &m_lo, &ctl()).unwrap().value;
            let v_hi = mismatched_rd(&q, &qh, &m_hi, &ctl()).unwrap().value;
            prop_assert!(v_hi <= v_lo + 1e-9);
            let prod = Channel::product(&qh, 3).unwrap();
            let prod_d = prod.average_distortion(&q, m_hi.matrix()).unwrap();
            prop_assert_eq!(v_hi == 0.0, prod_d <= hi);
        }
    }

    #[test]
    fn divergence_term_vanishes_at_output_marginal() {
        let model = DistortionModel::hamming(3, 0.2).unwrap();
        let q = [0.5, 0.3, 0.2];
        let rd = rate_distortion(&q, &model, &ctl()).unwrap();
        let out = rd.witness_channel.output_marginal(&q).unwrap();
        let mm = mismatched_rd(&q, &out, &model, &ctl()).unwrap();
        assert!((mm.value - rd.value).abs() < 1e-8);
        assert!(divergence(&out, &out).unwrap().finite().unwrap() == 0.0);
    }
}
