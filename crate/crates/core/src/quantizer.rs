//! Greedy covering quantizer, majorization, and the distortion-ball Rényi
//! entropy.
//!
//! For `α ∈ (0,1)` the Rényi entropy is Schur concave, so the smallest
//! Rényi entropy over all almost-surely feasible channels is attained by a
//! pushforward that majorizes every other feasible pushforward. The greedy
//! covering construction produces exactly such a pushforward: repeatedly take
//! the reproduction symbol whose reverse ball captures the most source mass
//! not yet covered.

use serde::Serialize;

use crate::distortion::{validate_pmf, BallIndex, DistortionModel, FiniteSource};
use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

/// Relative slack used when comparing prefix sums in [`majorizes`].
pub const MAJORIZATION_TOL: f64 = 1e-12;

/// Default cap on the number of deterministic quantizers enumerated by
/// [`exhaustive_quantizer_oracle`].
pub const DEFAULT_ENUMERATION_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MajorizationVerdict {
    pub majorizes: bool,
    /// 1-based length of the first prefix whose inequality fails.
    pub first_violated_prefix: Option<usize>,
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Does `q` majorize `p`? Both are sorted nonincreasing; every proper prefix
/// sum of `q` must dominate that of `p` and the totals must agree. All
/// comparisons allow a relative slack of [`MAJORIZATION_TOL`].
pub fn majorizes(q: &[f64], p: &[f64]) -> Result<MajorizationVerdict> {
    majorizes_with_tol(q, p, MAJORIZATION_TOL)
}

pub fn majorizes_with_tol(q: &[f64], p: &[f64], tol: f64) -> Result<MajorizationVerdict> {
    if q.len() != p.len() {
        return Err(Error::LengthMismatch {
            left: q.len(),
            right: p.len(),
        });
    }
    for v in [q, p] {
        if let Some((index, &value)) = v.iter().enumerate().find(|(_, &x)| x < 0.0 || x.is_nan()) {
            return Err(Error::NegativeEntry { index, value });
        }
    }
    let (qs, ps) = (sorted_desc(q), sorted_desc(p));
    let scale = tol * qs.iter().sum::<f64>().max(ps.iter().sum::<f64>()).max(1.0);
    let m = qs.len();
    let (mut sq, mut sp) = (0.0, 0.0);
    for j in 0..m {
        sq += qs[j];
        sp += ps[j];
        let ok = if j + 1 < m {
            sp <= sq + scale
        } else {
            (sp - sq).abs() <= scale
        };
        if !ok {
            return Ok(MajorizationVerdict {
                majorizes: false,
                first_violated_prefix: Some(j + 1),
            });
        }
    }
    Ok(MajorizationVerdict {
        majorizes: true,
        first_violated_prefix: None,
    })
}

/// Rényi entropy of order `alpha` in nats.
///
/// The vector is sorted before summation so that permutations of the same
/// law give bit-identical values.
pub fn renyi_entropy(p: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    validate_pmf(p)?;
    let logs: Vec<f64> = sorted_desc(p)
        .into_iter()
        .filter(|&v| v > 0.0)
        .map(|v| alpha * v.ln())
        .collect();
    Ok(log_sum_exp(&logs) / (1.0 - alpha))
}

/// A deterministic map `π: X → X̂`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Quantizer {
    map: Vec<usize>,
    repro_size: usize,
    /// Reproduction symbols in the order the greedy construction picked them
    /// (empty for quantizers not built greedily).
    order: Vec<usize>,
}

impl Quantizer {
    pub fn new(map: Vec<usize>, repro_size: usize) -> Result<Self> {
        if map.iter().any(|&xh| xh >= repro_size) {
            return Err(Error::DimensionMismatch("quantizer maps outside the reproduction alphabet".into()));
        }
        Ok(Self {
            map,
            repro_size,
            order: Vec::new(),
        })
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn apply(&self, x: usize) -> usize {
        self.map[x]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Law of `π(X)` over the reproduction alphabet.
    pub fn pushforward(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.repro_size];
        for (x, &xh) in self.map.iter().enumerate() {
            out[xh] += p[x];
        }
        out
    }

    /// `d(x, π(x)) <= Δ` for every `x`.
    pub fn is_feasible(&self, balls: &BallIndex) -> bool {
        self.map.iter().enumerate().all(|(x, &xh)| balls.covers(x, xh))
    }
}

/// Greedy covering quantizer.
///
/// Ties in the residual mass go to the smallest reproduction index. Source
/// symbols with zero probability map to the smallest member of their ball.
pub fn greedy_quantizer(source: &FiniteSource, balls: &BallIndex) -> Result<Quantizer> {
    let p = source.pmf();
    let (nx, nxh) = (balls.source_size(), balls.repro_size());
    if p.len() != nx {
        return Err(Error::LengthMismatch { left: p.len(), right: nx });
    }
    let mut map = vec![usize::MAX; nx];
    let mut uncovered: Vec<bool> = p.iter().map(|&v| v > 0.0).collect();
    let mut chosen = vec![false; nxh];
    let mut order = Vec::new();
    while uncovered.iter().any(|&u| u) {
        let mut best: Option<(usize, f64)> = None;
        for xh in (0..nxh).filter(|&xh| !chosen[xh]) {
            let mass: f64 = balls
                .reverse(xh)
                .iter_ones()
                .filter(|&x| uncovered[x])
                .map(|x| p[x])
                .sum();
            if best.is_none_or(|(_, m)| mass > m) {
                best = Some((xh, mass));
            }
        }
        let Some((xh, mass)) = best else { break };
        if mass <= 0.0 {
            break;
        }
        chosen[xh] = true;
        order.push(xh);
        for x in balls.reverse(xh).iter_ones() {
            if uncovered[x] {
                map[x] = xh;
                uncovered[x] = false;
            }
        }
    }
    for (x, slot) in map.iter_mut().enumerate() {
        if *slot == usize::MAX {
            *slot = balls.members(x).next().ok_or(Error::EmptyBall { symbol: x })?;
        }
    }
    Ok(Quantizer {
        map,
        repro_size: nxh,
        order,
    })
}

/// Distortion-ball Rényi entropy for `α ∈ (0,1)` together with the greedy
/// quantizer attaining it.
pub fn distortion_renyi(
    source: &FiniteSource,
    model: &DistortionModel,
    alpha: f64,
) -> Result<(f64, Quantizer)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let balls = model.balls()?;
    let q = greedy_quantizer(source, &balls)?;
    let h = renyi_entropy(&q.pushforward(source.pmf()), alpha)?;
    Ok((h, q))
}

/// Rényi entropy of the greedy pushforward for any admissible order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyRenyi {
    pub value: f64,
    /// `true` when the value is the distortion-ball Rényi entropy itself
    /// (`α < 1`); otherwise it is only an upper bound on it.
    pub exact: bool,
    pub quantizer: Quantizer,
}

pub fn greedy_renyi(source: &FiniteSource, model: &DistortionModel, alpha: f64) -> Result<GreedyRenyi> {
    let balls = model.balls()?;
    let quantizer = greedy_quantizer(source, &balls)?;
    let value = renyi_entropy(&quantizer.pushforward(source.pmf()), alpha)?;
    Ok(GreedyRenyi {
        value,
        exact: alpha < 1.0,
        quantizer,
    })
}

/// Calls `f` on every feasible deterministic quantizer, in lexicographic
/// order of the map.
pub fn for_each_feasible_quantizer(
    balls: &BallIndex,
    cap: f64,
    mut f: impl FnMut(&[usize]),
) -> Result<()> {
    let nx = balls.source_size();
    let choices: Vec<Vec<usize>> = (0..nx).map(|x| balls.members(x).collect()).collect();
    let count: f64 = choices.iter().map(|c| c.len() as f64).product();
    if count > cap {
        return Err(Error::InstanceTooLarge {
            what: "quantizer enumeration",
            size: count,
            cap,
        });
    }
    let mut idx = vec![0usize; nx];
    let mut map: Vec<usize> = choices.iter().map(|c| c[0]).collect();
    loop {
        f(&map);
        let mut pos = nx;
        loop {
            if pos == 0 {
                return Ok(());
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                map[pos] = choices[pos][idx[pos]];
                break;
            }
            idx[pos] = 0;
            map[pos] = choices[pos][0];
        }
    }
}

/// Minimum Rényi entropy of `π(X)` over all feasible deterministic `π`, by
/// enumeration. Refuses instances with more than `cap` feasible maps.
pub fn exhaustive_quantizer_oracle(
    source: &FiniteSource,
    model: &DistortionModel,
    alpha: f64,
    cap: f64,
) -> Result<f64> {
    let balls = model.balls()?;
    let nxh = model.repro_size();
    let p = source.pmf();
    let mut best = f64::INFINITY;
    let mut err = None;
    for_each_feasible_quantizer(&balls, cap, |map| {
        let mut push = vec![0.0; nxh];
        for (x, &xh) in map.iter().enumerate() {
            push[xh] += p[x];
        }
        match renyi_entropy(&push, alpha) {
            Ok(h) if h < best => best = h,
            Ok(_) => {}
            Err(e) => err = Some(e),
        }
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(best),
    }
}
