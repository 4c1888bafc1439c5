//! Exact small-n verification by the method of types.
//!
//! Block balls `A(x) = {x̂ : (1/n) Σ d(x_i, x̂_i) <= Δ}` are measured under the
//! product law `Q̂^n` exactly: by enumerating `X̂^n`, by dynamic programming over
//! the cumulative integer distortion, or by summing over conditional types
//! `T_V(x)`. The ball mass depends on `x` only through its type, so block
//! moments are sums over source types.

use serde::Serialize;

use crate::distortion::{validate_pmf, DistortionModel, IntegerUnits};
use crate::error::{Error, Result};
use crate::exponents::iid_strategy_exponent;
use crate::moments::{log_g_moment_integer, Strategy, BOUND_SLACK, RHO_MAX};
use crate::numeric::{as_small_integer, ln_factorial, log_add_exp, log_sum_exp};
use crate::rd::SolverControls;

/// Largest enumeration handled by any routine here.
pub const ENUMERATION_CAP: f64 = 1e7;

/// Terms folded into one partial log-sum during enumeration.
const CHUNK: usize = 4096;

fn too_large(what: &'static str, size: f64) -> Error {
    Error::InstanceTooLarge { what, size, cap: ENUMERATION_CAP }
}

/// `C(n + m - 1, m - 1)`, the number of types of length-`n` sequences over `m`
/// symbols, as a float.
pub fn type_count(n: usize, m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    (ln_factorial((n + m - 1) as f64) - ln_factorial(n as f64) - ln_factorial((m - 1) as f64))
        .exp()
        .round()
}

/// Exact multinomial `n! / Π c_i!`; `None` on `u128` overflow.
fn multinomial(counts: &[u32]) -> Option<u128> {
    let mut acc: u128 = 1;
    let mut total: u128 = 0;
    for &c in counts {
        for k in 1..=u128::from(c) {
            total += 1;
            // acc * total / k stays integral: it is a running binomial product.
            acc = acc.checked_mul(total)? / k;
        }
    }
    Some(acc)
}

fn ln_multinomial(counts: &[u32]) -> f64 {
    let n: u32 = counts.iter().sum();
    ln_factorial(f64::from(n)) - counts.iter().map(|&c| ln_factorial(f64::from(c))).sum::<f64>()
}

/// Empirical distribution of a length-`n` sequence, stored as counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TypeClass {
    counts: Vec<u32>,
}

impl TypeClass {
    pub fn new(counts: Vec<u32>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::DimensionMismatch("type over an empty alphabet".into()));
        }
        Ok(Self { counts })
    }

    /// Type of a sequence over `{0..m}`.
    pub fn of_sequence(seq: &[usize], m: usize) -> Result<Self> {
        let mut counts = vec![0u32; m];
        for &s in seq {
            if s >= m {
                return Err(Error::DimensionMismatch(format!("symbol {s} outside alphabet of {m}")));
            }
            counts[s] += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn n(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn pmf(&self) -> Vec<f64> {
        let n = self.n() as f64;
        self.counts.iter().map(|&c| f64::from(c) / n).collect()
    }

    /// `|T_Q|` exactly, `None` on overflow.
    pub fn size(&self) -> Option<u128> {
        multinomial(&self.counts)
    }

    pub fn log_size(&self) -> f64 {
        ln_multinomial(&self.counts)
    }

    /// `ln P^n(x)` for any `x` in the class.
    pub fn log_sequence_probability(&self, p: &[f64]) -> f64 {
        self.counts
            .iter()
            .zip(p)
            .map(|(&c, &px)| if c == 0 { 0.0 } else { f64::from(c) * px.ln() })
            .sum()
    }

    /// Lexicographically smallest member: symbols in increasing order.
    pub fn representative(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(s, &c)| std::iter::repeat_n(s, c as usize))
            .collect()
    }
}

/// Calls `f` on every composition of `n` into `m` nonnegative parts, in
/// reverse lexicographic order.
fn for_each_composition(n: u32, m: usize, f: &mut dyn FnMut(&[u32])) {
    fn rec(rest: u32, slot: usize, cur: &mut Vec<u32>, f: &mut dyn FnMut(&[u32])) {
        if slot + 1 == cur.len() {
            cur[slot] = rest;
            f(cur);
            return;
        }
        for c in (0..=rest).rev() {
            cur[slot] = c;
            rec(rest - c, slot + 1, cur, f);
        }
    }
    if m == 0 {
        return;
    }
    let mut cur = vec![0u32; m];
    rec(n, 0, &mut cur, f);
}

/// All types of length-`n` sequences over `m` symbols.
pub fn enumerate_types(n: usize, m: usize) -> Result<Vec<TypeClass>> {
    if m == 0 {
        return Err(Error::DimensionMismatch("empty alphabet".into()));
    }
    let count = type_count(n, m);
    if count > ENUMERATION_CAP {
        return Err(too_large("type enumeration", count));
    }
    let mut out = Vec::with_capacity(count as usize);
    for_each_composition(n as u32, m, &mut |c| out.push(TypeClass { counts: c.to_vec() }));
    Ok(out)
}

/// Joint counts `N(x, x̂)` of a pair of sequences; row `x` sums to the number
/// of occurrences of `x` in the base sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct ConditionalType {
    joint: Vec<Vec<u32>>,
}

impl ConditionalType {
    pub fn of_pair(x_seq: &[usize], xh_seq: &[usize], nx: usize, nxh: usize) -> Result<Self> {
        if x_seq.len() != xh_seq.len() {
            return Err(Error::LengthMismatch { left: x_seq.len(), right: xh_seq.len() });
        }
        let mut joint = vec![vec![0u32; nxh]; nx];
        for (&x, &xh) in x_seq.iter().zip(xh_seq) {
            if x >= nx || xh >= nxh {
                return Err(Error::DimensionMismatch("symbol index out of range".into()));
            }
            joint[x][xh] += 1;
        }
        Ok(Self { joint })
    }

    pub fn joint(&self) -> &[Vec<u32>] {
        &self.joint
    }

    pub fn row_sums(&self) -> Vec<u32> {
        self.joint.iter().map(|r| r.iter().sum()).collect()
    }

    /// Type of every `x̂` in the cell.
    pub fn output_counts(&self) -> Vec<u32> {
        let width = self.joint.first().map_or(0, Vec::len);
        (0..width).map(|j| self.joint.iter().map(|r| r[j]).sum()).collect()
    }

    /// `|T_V(x)| = Π_x (N(x)! / Π_x̂ N(x,x̂)!)`, `None` on overflow.
    pub fn size(&self) -> Option<u128> {
        self.joint.iter().try_fold(1u128, |acc, row| acc.checked_mul(multinomial(row)?))
    }

    pub fn log_size(&self) -> f64 {
        self.joint.iter().map(|r| ln_multinomial(r)).sum()
    }

    /// `ln Q̂^n(x̂)` for any `x̂` in the cell.
    pub fn log_sequence_mass(&self, q: &[f64]) -> f64 {
        self.output_counts()
            .iter()
            .zip(q)
            .map(|(&c, &qv)| if c == 0 { 0.0 } else { f64::from(c) * qv.ln() })
            .sum()
    }
}

/// One cell of the partition of `X̂^n` by conditional type.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusCell {
    pub ctype: ConditionalType,
    /// Exact `|T_V(x)|`.
    pub size: u128,
    pub feasible: bool,
}

/// Block-level feasibility rule shared by all paths.
enum Rule {
    Units(IntegerUnits),
    Real,
}

impl Rule {
    fn of(model: &DistortionModel) -> Self {
        model.integer_units().map_or(Rule::Real, Rule::Units)
    }

    fn cell_feasible(&self, model: &DistortionModel, joint: &[Vec<u32>], n: usize) -> bool {
        match self {
            Rule::Units(u) => {
                let mut total = 0u64;
                for (x, row) in joint.iter().enumerate() {
                    for (xh, &c) in row.iter().enumerate() {
                        total += u64::from(c) * u.unit(x, xh);
                    }
                }
                u.feasible(total, n)
            }
            Rule::Real => {
                let mut total = 0.0;
                for (x, row) in joint.iter().enumerate() {
                    for (xh, &c) in row.iter().enumerate() {
                        total += f64::from(c) * model.d(x, xh);
                    }
                }
                total / n as f64 <= model.delta()
            }
        }
    }

    fn sequence_feasible(&self, model: &DistortionModel, x: &[usize], xh: &[usize]) -> bool {
        match self {
            Rule::Units(u) => {
                let total: u64 = x.iter().zip(xh).map(|(&a, &b)| u.unit(a, b)).sum();
                u.feasible(total, x.len())
            }
            Rule::Real => {
                let total: f64 = x.iter().zip(xh).map(|(&a, &b)| model.d(a, b)).sum();
                total / x.len() as f64 <= model.delta()
            }
        }
    }
}

fn check_sequence(x_seq: &[usize], model: &DistortionModel) -> Result<()> {
    if x_seq.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 0 });
    }
    if x_seq.iter().any(|&x| x >= model.source_size()) {
        return Err(Error::DimensionMismatch("source symbol index out of range".into()));
    }
    Ok(())
}

fn check_strategy(q: &Strategy, model: &DistortionModel) -> Result<()> {
    if q.len() != model.repro_size() {
        return Err(Error::LengthMismatch { left: q.len(), right: model.repro_size() });
    }
    Ok(())
}

/// Number of conditional-type cells for a base sequence.
fn census_size(x_seq: &[usize], model: &DistortionModel) -> f64 {
    let counts = TypeClass::of_sequence(x_seq, model.source_size()).map(|t| t.counts).unwrap_or_default();
    counts.iter().map(|&c| type_count(c as usize, model.repro_size())).product()
}

/// Partition of `X̂^n` by conditional type given `x_seq`, with exact cell sizes
/// and the distortion feasibility of each cell.
pub fn conditional_type_census(x_seq: &[usize], model: &DistortionModel) -> Result<Vec<CensusCell>> {
    check_sequence(x_seq, model)?;
    let cells = census_size(x_seq, model);
    if cells > ENUMERATION_CAP {
        return Err(too_large("conditional type census", cells));
    }
    let (nx, nxh, n) = (model.source_size(), model.repro_size(), x_seq.len());
    let base = TypeClass::of_sequence(x_seq, nx)?;
    let rule = Rule::of(model);
    let rows: Vec<Vec<Vec<u32>>> = base
        .counts
        .iter()
        .map(|&c| {
            let mut v = Vec::new();
            for_each_composition(c, nxh, &mut |r| v.push(r.to_vec()));
            v
        })
        .collect();
    let mut out = Vec::with_capacity(cells as usize);
    let mut idx = vec![0usize; nx];
    loop {
        let joint: Vec<Vec<u32>> = (0..nx).map(|x| rows[x][idx[x]].clone()).collect();
        let feasible = rule.cell_feasible(model, &joint, n);
        let ctype = ConditionalType { joint };
        let size = ctype.size().ok_or_else(|| too_large("cell size", f64::INFINITY))?;
        out.push(CensusCell { ctype, size, feasible });
        let mut k = nx;
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < rows[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// Path used to measure a block ball.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BallMethod {
    /// Pick dynamic programming when integer units exist, else the type
    /// census, else enumeration.
    Auto,
    Enumeration,
    DynamicProgramming,
    TypeCensus,
}

/// `ln Q̂^n(A(x))` by enumerating `X̂^n`.
fn log_ball_enumeration(x_seq: &[usize], q: &[f64], model: &DistortionModel) -> Result<f64> {
    let (n, m) = (x_seq.len(), q.len());
    let size = (m as f64).powi(n as i32);
    if size > ENUMERATION_CAP {
        return Err(too_large("ball enumeration", size));
    }
    let rule = Rule::of(model);
    let lq: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let mut xh = vec![0usize; n];
    let mut chunk = Vec::with_capacity(CHUNK);
    let mut partials = Vec::new();
    loop {
        if rule.sequence_feasible(model, x_seq, &xh) {
            let l: f64 = xh.iter().map(|&s| lq[s]).sum();
            if l > f64::NEG_INFINITY {
                chunk.push(l);
            }
            if chunk.len() == CHUNK {
                partials.push(log_sum_exp(&chunk));
                chunk.clear();
            }
        }
        let mut k = n;
        loop {
            if k == 0 {
                partials.push(log_sum_exp(&chunk));
                return Ok(log_sum_exp(&partials));
            }
            k -= 1;
            xh[k] += 1;
            if xh[k] < m {
                break;
            }
            xh[k] = 0;
        }
    }
}

/// `ln Q̂^n(A(x))` by dynamic programming over the running integer total.
fn log_ball_dp(x_seq: &[usize], q: &[f64], model: &DistortionModel) -> Result<f64> {
    let units = model.integer_units().ok_or_else(|| {
        Error::InvalidDistortion("dynamic programming needs integer or rational distortions".into())
    })?;
    let n = x_seq.len();
    let cap = units.max_feasible_total(n) as usize;
    if (cap as f64 + 1.0) * n as f64 > 1e9 {
        return Err(too_large("ball dynamic program", (cap as f64 + 1.0) * n as f64));
    }
    let lq: Vec<f64> = q.iter().map(|v| v.ln()).collect();
    let mut state = vec![f64::NEG_INFINITY; cap + 1];
    state[0] = 0.0;
    for &x in x_seq {
        let mut next = vec![f64::NEG_INFINITY; cap + 1];
        for (t, &l) in state.iter().enumerate() {
            if l == f64::NEG_INFINITY {
                continue;
            }
            for (xh, &lqv) in lq.iter().enumerate() {
                let nt = t as u64 + units.unit(x, xh);
                if nt as usize <= cap && lqv > f64::NEG_INFINITY {
                    next[nt as usize] = log_add_exp(next[nt as usize], l + lqv);
                }
            }
        }
        state = next;
    }
    let feasible: Vec<f64> = state
        .iter()
        .enumerate()
        .filter(|&(t, _)| units.feasible(t as u64, n))
        .map(|(_, &l)| l)
        .collect();
    Ok(log_sum_exp(&feasible))
}

/// `ln Q̂^n(A(x))` as a sum over feasible conditional-type cells.
fn log_ball_census(x_seq: &[usize], q: &[f64], model: &DistortionModel) -> Result<f64> {
    let terms: Vec<f64> = conditional_type_census(x_seq, model)?
        .iter()
        .filter(|c| c.feasible)
        .map(|c| c.ctype.log_size() + c.ctype.log_sequence_mass(q))
        .filter(|l| *l > f64::NEG_INFINITY)
        .collect();
    Ok(log_sum_exp(&terms))
}

/// `ln Q̂^n(A(x))` by the requested method.
pub fn exact_log_ball_probability_with(
    x_seq: &[usize],
    strategy: &Strategy,
    model: &DistortionModel,
    method: BallMethod,
) -> Result<f64> {
    check_sequence(x_seq, model)?;
    check_strategy(strategy, model)?;
    let q = strategy.pmf();
    match method {
        BallMethod::Enumeration => log_ball_enumeration(x_seq, q, model),
        BallMethod::DynamicProgramming => log_ball_dp(x_seq, q, model),
        BallMethod::TypeCensus => log_ball_census(x_seq, q, model),
        BallMethod::Auto => {
            if model.integer_units().is_some() {
                log_ball_dp(x_seq, q, model)
            } else if census_size(x_seq, model) <= ENUMERATION_CAP {
                log_ball_census(x_seq, q, model)
            } else {
                log_ball_enumeration(x_seq, q, model)
            }
        }
    }
}

/// Exact `Q̂^n(A(x))`.
pub fn exact_ball_probability(x_seq: &[usize], strategy: &Strategy, model: &DistortionModel) -> Result<f64> {
    exact_log_ball_probability_with(x_seq, strategy, model, BallMethod::Auto).map(f64::exp)
}

/// Exact block moments at one blocklength.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockMoment {
    pub n: usize,
    pub rho: f64,
    /// `ln E[V_ρ] = ln Σ_x P^n(x) q_x^{-ρ}`.
    pub log_expected_v: f64,
    /// `ln E[G_ρ]`; integer `ρ` only.
    pub log_expected_g: Option<f64>,
    /// Source types with positive probability.
    pub types: usize,
}

/// Exact `E[V_ρ]` and, for integer `ρ`, `E[G_ρ]` of the i.i.d. strategy
/// `Q̂^n` at blocklength `n`, grouping sequences by type. For integer `ρ` the
/// sandwich `E[V_ρ] <= E[G_ρ] <= ρ! E[V_ρ]` is checked.
pub fn exact_block_moment(
    p: &[f64],
    strategy: &Strategy,
    model: &DistortionModel,
    n: usize,
    rho: f64,
) -> Result<BlockMoment> {
    validate_pmf(p)?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::RhoNonpositive(rho));
    }
    if n == 0 {
        return Err(Error::LengthMismatch { left: 0, right: 0 });
    }
    if p.len() != model.source_size() {
        return Err(Error::LengthMismatch { left: p.len(), right: model.source_size() });
    }
    check_strategy(strategy, model)?;
    let integer = as_small_integer(rho, RHO_MAX);
    let mut v_terms = Vec::new();
    let mut g_terms = Vec::new();
    let mut weights = Vec::new();
    for t in enumerate_types(n, p.len())? {
        let lp = t.log_sequence_probability(p);
        if t.counts.iter().zip(p).any(|(&c, &px)| c > 0 && px == 0.0) {
            continue;
        }
        let weight = t.log_size() + lp;
        weights.push(weight);
        let lq = exact_log_ball_probability_with(&t.representative(), strategy, model, BallMethod::Auto)?.min(0.0);
        if lq == f64::NEG_INFINITY {
            return Err(Error::ZeroBallMass {
                symbol: Some(format!("type {:?}", t.counts)),
            });
        }
        v_terms.push(weight - rho * lq);
        if let Some(k) = integer {
            let q = lq.exp();
            let lg = if q > 0.0 { log_g_moment_integer(q.min(1.0), k)? } else { -rho * lq };
            g_terms.push(weight + lg);
        }
    }
    // Type probabilities sum to one; dividing by their computed total
    // removes rounding from trivial instances.
    let log_total = log_sum_exp(&weights);
    let log_expected_v = log_sum_exp(&v_terms) - log_total;
    let log_expected_g = integer.map(|_| log_sum_exp(&g_terms) - log_total);
    if let (Some(k), Some(lg)) = (integer, log_expected_g) {
        let upper = log_expected_v + ln_factorial(f64::from(k));
        if lg < log_expected_v - BOUND_SLACK || lg > upper + BOUND_SLACK {
            return Err(Error::BoundViolated(format!(
                "block moment sandwich at n={n}: ln E[V]={log_expected_v}, ln E[G]={lg}, upper={upper}"
            )));
        }
    }
    Ok(BlockMoment { n, rho, log_expected_v, log_expected_g, types: v_terms.len() })
}

/// One row of [`ConvergenceTable`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// `(1/n) ln E[V_ρ]`.
    pub v_rate: f64,
    /// `(1/n) ln E[G_ρ]`; integer `ρ` only.
    pub g_rate: Option<f64>,
    /// Limit exponent of the i.i.d. strategy.
    pub limit: f64,
    /// `|rate - limit|`, using the `G` rate when available.
    pub gap: f64,
}

/// Exact finite-n rates against the asymptotic exponent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub limit: f64,
    /// Least-squares `C` in `gap ≈ C ln(n) / n`.
    pub fitted_c: f64,
    /// Gap strictly decreasing over the last three `n`.
    pub gap_decreasing: bool,
    /// Last three gaps at or below `C ln(n) / n`.
    pub within_envelope: bool,
}

impl ConvergenceTable {
    pub fn final_gap(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.gap)
    }

    pub fn holds(&self) -> bool {
        self.gap_decreasing && self.within_envelope
    }
}

/// Exact `(1/n) ln E[G_ρ]` for each `n` in `n_list` against the exponent
/// returned by [`iid_strategy_exponent`].
pub fn exponent_convergence_check(
    p: &[f64],
    strategy: &Strategy,
    model: &DistortionModel,
    rho: f64,
    n_list: &[usize],
    controls: &SolverControls,
) -> Result<ConvergenceTable> {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 1 });
    }
    let limit = iid_strategy_exponent(p, strategy.pmf(), model, rho, controls)?.value;
    let mut rows = Vec::with_capacity(ns.len());
    for &n in &ns {
        let bm = exact_block_moment(p, strategy, model, n, rho)?;
        let v_rate = bm.log_expected_v / n as f64;
        let g_rate = bm.log_expected_g.map(|g| g / n as f64);
        let gap = (g_rate.unwrap_or(v_rate) - limit).abs();
        rows.push(ConvergenceRow { n, v_rate, g_rate, limit, gap });
    }
    let env = |n: usize| if n > 1 { (n as f64).ln() / n as f64 } else { 0.0 };
    let (num, den) = rows.iter().fold((0.0, 0.0), |(a, b), r| {
        let h = env(r.n);
        (a + r.gap * h, b + h * h)
    });
    let fitted_c = if den > 0.0 { num / den } else { 0.0 };
    let tail = &rows[rows.len().saturating_sub(3)..];
    let gap_decreasing = tail.len() == 3 && tail.windows(2).all(|w| w[1].gap < w[0].gap);
    let within_envelope = tail.iter().all(|r| r.gap <= fitted_c * env(r.n) + 1e-12);
    Ok(ConvergenceTable { rows, limit, fitted_c, gap_decreasing, within_envelope })
}
