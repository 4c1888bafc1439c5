//! Monte-Carlo guessing.
//!
//! Each trial owns a ChaCha stream selected by `(master_seed, trial)`, so the
//! sampled trajectories do not depend on how trials are scheduled across
//! workers. Per-trial guess counts are collected in trial order and reduced
//! sequentially, which makes reports bit-identical for any worker count.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distortion::{block_ball_membership, validate_pmf, DistortionModel};
use crate::error::{Error, Result};
use crate::moments::{Strategy, RHO_MAX};
use crate::numeric::{as_small_integer, LogSumAccumulator};
use crate::types::{enumerate_types, exact_block_moment, exact_log_ball_probability_with, BallMethod};

/// Censoring fraction above which a report carries a warning.
pub const CENSORING_WARNING: f64 = 0.01;

/// How block guesswork is generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimMode {
    /// Draw guess blocks until one lands in the ball.
    Literal,
    /// Compute the exact ball mass of the sampled block and draw a geometric
    /// count.
    #[default]
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub master_seed: u64,
    pub trials: u64,
    pub n: usize,
    pub rho_list: Vec<f64>,
    /// Guess counts are censored at this value.
    pub guess_cap: u64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub mode: SimMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            trials: 100_000,
            n: 1,
            rho_list: vec![1.0, 2.0],
            guess_cap: 1 << 40,
            workers: 1,
            mode: SimMode::Analytic,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.guess_cap == 0 {
            return Err(Error::InvalidConfig("guess_cap must be at least 1".into()));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("blocklength must be at least 1".into()));
        }
        if self.rho_list.is_empty() {
            return Err(Error::InvalidConfig("rho_list is empty".into()));
        }
        if let Some(&r) = self.rho_list.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::RhoNonpositive(r));
        }
        Ok(())
    }
}

/// Estimate of `E[G^ρ]` with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub rho: f64,
    pub mean: f64,
    pub std_error: f64,
    /// `ln` of the sample mean, finite even when `mean` overflows.
    pub log_mean: f64,
    /// Exact value when available.
    pub exact: Option<f64>,
    /// `(mean - exact) / std_error`.
    pub z_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub mode: SimMode,
    pub n: usize,
    pub trials: u64,
    pub master_seed: u64,
    pub estimates: Vec<MomentEstimate>,
    pub censored: u64,
    pub censoring_fraction: f64,
    /// Censoring biases every estimate downward; set above
    /// [`CENSORING_WARNING`].
    pub cap_too_low: bool,
    pub warnings: Vec<String>,
}

/// RNG for one trial: the master seed picks the key, the trial index picks
/// the stream.
pub fn trial_rng(master_seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Geometric guess count with success probability `q` by inversion:
/// `⌈ln U / ln(1 - q)⌉` with `U` uniform on `(0, 1]`.
pub fn sample_guesswork<R: Rng + ?Sized>(q: f64, rng: &mut R) -> Result<u64> {
    if q == 0.0 {
        return Err(Error::ZeroBallMass { symbol: None });
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidPmf(format!("ball mass {q} outside (0,1]")));
    }
    if q == 1.0 {
        return Ok(1);
    }
    let u = 1.0 - rng.gen::<f64>();
    let g = (u.ln() / (-q).ln_1p()).ceil();
    Ok(if g < 1.0 { 1 } else { g as u64 })
}

/// Kolmogorov distance between samples and the geometric law with success
/// probability `q`.
pub fn geometric_ks_distance(samples: &[u64], q: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut worst: f64 = 0.0;
    let cdf = |k: u64| -((k as f64) * (-q).ln_1p()).exp_m1();
    let mut i = 0;
    // Both CDFs are step functions on the integers; between observed values
    // the largest deviation sits at a gap endpoint.
    while i < sorted.len() {
        let k = sorted[i];
        let start = i;
        while i < sorted.len() && sorted[i] == k {
            i += 1;
        }
        let below = (start as f64 / n - cdf(k.saturating_sub(1))).abs();
        let at = (i as f64 / n - cdf(k)).abs();
        worst = worst.max(below).max(at);
    }
    worst
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Runs `trial` for every index in parallel and returns results in index
/// order.
fn run_trials<F>(cfg: &SimConfig, trial: F) -> Result<Vec<u64>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<u64> + Sync,
{
    let cap = cfg.guess_cap;
    let seed = cfg.master_seed;
    pool(cfg.workers)?.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|t| trial(&mut trial_rng(seed, t)).map(|g| g.min(cap)))
            .collect()
    })
}

/// Moment estimates from per-trial counts, reduced in trial order.
fn summarize(cfg: &SimConfig, counts: &[u64], exact: &dyn Fn(f64) -> Option<f64>) -> SimReport {
    let n = counts.len() as f64;
    let censored = counts.iter().filter(|&&g| g >= cfg.guess_cap).count() as u64;
    let censoring_fraction = censored as f64 / n;
    let estimates = cfg
        .rho_list
        .iter()
        .map(|&rho| {
            let mut first = LogSumAccumulator::new();
            let mut second = LogSumAccumulator::new();
            for &g in counts {
                let l = rho * (g as f64).ln();
                first.add(l);
                second.add(2.0 * l);
            }
            let log_mean = first.value() - n.ln();
            let log_second = second.value() - n.ln();
            let mean = log_mean.exp();
            // Var = E[g^2ρ] - E[g^ρ]^2, factored to keep it in range.
            let spread = -(2.0 * log_mean - log_second).exp_m1();
            let var = (log_second.exp() * spread.max(0.0)) * n / (n - 1.0).max(1.0);
            let std_error = (var / n).sqrt();
            let exact = exact(rho);
            let z_score = exact.map(|e| {
                if std_error > 0.0 {
                    (mean - e) / std_error
                } else if (mean - e).abs() <= 1e-12 * e.abs() {
                    0.0
                } else {
                    f64::INFINITY
                }
            });
            MomentEstimate { rho, mean, std_error, log_mean, exact, z_score }
        })
        .collect();
    let cap_too_low = censoring_fraction > CENSORING_WARNING;
    let warnings = if cap_too_low {
        vec![format!(
            "guess cap {} censored {:.3}% of trials; moment estimates are biased low",
            cfg.guess_cap,
            100.0 * censoring_fraction
        )]
    } else {
        Vec::new()
    };
    SimReport {
        mode: cfg.mode,
        n: cfg.n,
        trials: cfg.trials,
        master_seed: cfg.master_seed,
        estimates,
        censored,
        censoring_fraction,
        cap_too_low,
        warnings,
    }
}

/// Geometric guesswork at a fixed ball mass `q`, compared with the exact
/// moments where available.
pub fn simulate_fixed(q: f64, cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    sample_guesswork(q, &mut trial_rng(0, 0))?;
    let counts = run_trials(cfg, |rng| sample_guesswork(q, rng))?;
    let exact = |rho: f64| {
        as_small_integer(rho, RHO_MAX).and_then(|k| crate::moments::g_moment_integer(q, k).ok())
    };
    Ok(summarize(cfg, &counts, &exact))
}

/// Exact `E[G_ρ]` of the block strategy for integer `ρ`, when the oracle fits.
fn block_exact(p: &[f64], strategy: &Strategy, model: &DistortionModel, n: usize, rho: f64) -> Option<f64> {
    as_small_integer(rho, RHO_MAX)?;
    exact_block_moment(p, strategy, model, n, rho).ok()?.log_expected_g.map(f64::exp)
}

/// Block guessing with the i.i.d. strategy `Q̂^n` against an i.i.d. source.
pub fn simulate_block(
    p: &[f64],
    strategy: &Strategy,
    model: &DistortionModel,
    cfg: &SimConfig,
) -> Result<SimReport> {
    cfg.validate()?;
    validate_pmf(p)?;
    if p.len() != model.source_size() {
        return Err(Error::LengthMismatch { left: p.len(), right: model.source_size() });
    }
    if strategy.len() != model.repro_size() {
        return Err(Error::LengthMismatch { left: strategy.len(), right: model.repro_size() });
    }
    let n = cfg.n;
    let source = WeightedIndex::new(p).map_err(|e| Error::InvalidPmf(e.to_string()))?;
    let counts = match cfg.mode {
        SimMode::Analytic => {
            // Ball mass depends only on the block's type.
            let mut masses: HashMap<Vec<u32>, f64> = HashMap::new();
            for t in enumerate_types(n, p.len())? {
                if t.counts().iter().zip(p).any(|(&c, &px)| c > 0 && px == 0.0) {
                    continue;
                }
                let lq = exact_log_ball_probability_with(&t.representative(), strategy, model, BallMethod::Auto)?;
                if lq == f64::NEG_INFINITY {
                    return Err(Error::ZeroBallMass { symbol: Some(format!("type {:?}", t.counts())) });
                }
                masses.insert(t.counts().to_vec(), lq.exp().min(1.0));
            }
            let m = p.len();
            run_trials(cfg, |rng| {
                let mut counts = vec![0u32; m];
                for _ in 0..n {
                    counts[source.sample(rng)] += 1;
                }
                sample_guesswork(masses[&counts], rng)
            })?
        }
        SimMode::Literal => {
            let balls = model.balls()?;
            let reachable = |x: usize| balls.members(x).any(|xh| strategy.pmf()[xh] > 0.0);
            if let Some(x) = (0..p.len()).find(|&x| p[x] > 0.0 && !reachable(x)) {
                return Err(Error::ZeroBallMass { symbol: Some(model.source_alphabet()[x].clone()) });
            }
            let guesser = WeightedIndex::new(strategy.pmf()).map_err(|e| Error::InvalidPmf(e.to_string()))?;
            let cap = cfg.guess_cap;
            run_trials(cfg, |rng| {
                let x: Vec<usize> = (0..n).map(|_| source.sample(rng)).collect();
                let mut xh = vec![0usize; n];
                for g in 1..=cap {
                    xh.iter_mut().for_each(|s| *s = guesser.sample(rng));
                    if block_ball_membership(&x, &xh, model)? {
                        return Ok(g);
                    }
                }
                Ok(cap)
            })?
        }
    };
    let exact = |rho: f64| block_exact(p, strategy, model, n, rho);
    Ok(summarize(cfg, &counts, &exact))
}
