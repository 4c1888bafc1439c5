//! Problem configuration: a TOML file with explicit sections.
//!
//! Numbers may be written as TOML numbers or as `"a/b"` rational strings.
//! Rational entries in the distortion matrix or threshold switch the model
//! to exact block-level feasibility.

use std::fmt;
use std::path::Path;

use anyhow::{Context, Result};
use guessd_core::{DistortionModel, FiniteSource, SimConfig, SimMode, SolverControls};
use num_rational::Ratio;
use serde::Deserialize;

/// Validation failure carrying the offending field path.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// A number given either as a float or as an `"a/b"` string.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Number {
    fn rational(&self, field: &str) -> Result<Option<Ratio<i64>>> {
        match self {
            Number::Int(i) => Ok(Some(Ratio::from_integer(*i))),
            Number::Float(f) if *f == f.trunc() && f.abs() < 1e15 => Ok(Some(Ratio::from_integer(*f as i64))),
            Number::Float(_) => Ok(None),
            Number::Text(s) => parse_ratio(s, field).map(Some),
        }
    }

    fn value(&self, field: &str) -> Result<f64> {
        match self {
            Number::Int(i) => Ok(*i as f64),
            Number::Float(f) => Ok(*f),
            Number::Text(s) => {
                let r = parse_ratio(s, field)?;
                Ok(*r.numer() as f64 / *r.denom() as f64)
            }
        }
    }

    fn is_text(&self) -> bool {
        matches!(self, Number::Text(_))
    }
}

fn parse_ratio(s: &str, field: &str) -> Result<Ratio<i64>> {
    let parse = |t: &str| t.trim().parse::<i64>().map_err(|_| bad(format!("{field}: cannot read \"{s}\" as a/b")));
    let (num, den) = match s.split_once('/') {
        Some((a, b)) => (parse(a)?, parse(b)?),
        None => (parse(s)?, 1),
    };
    if den == 0 {
        return Err(bad(format!("{field}: zero denominator in \"{s}\"")));
    }
    Ok(Ratio::new(num, den))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum RhoList {
    One(Number),
    Many(Vec<Number>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSection {
    pub pmf: Vec<Number>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DistortionKind {
    #[default]
    Matrix,
    Hamming,
    Absolute,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistortionSection {
    #[serde(default)]
    pub kind: DistortionKind,
    #[serde(default)]
    pub matrix: Option<Vec<Vec<Number>>>,
    pub delta: Number,
    #[serde(default)]
    pub repro_labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    #[default]
    Tilted,
    Uniform,
    Optimize,
    Explicit,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    #[serde(default)]
    pub kind: StrategyKind,
    #[serde(default)]
    pub pmf: Option<Vec<Number>>,
}

/// Simulation settings; unset fields take the library defaults. `fixed_q`
/// runs the geometric law at a fixed ball mass instead of block guessing.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub master_seed: Option<u64>,
    pub trials: Option<u64>,
    pub n: Option<usize>,
    pub guess_cap: Option<u64>,
    pub workers: Option<usize>,
    pub mode: Option<SimMode>,
    pub fixed_q: Option<f64>,
}

impl SimulateSection {
    fn to_config(&self) -> SimConfig {
        let d = SimConfig::default();
        SimConfig {
            master_seed: self.master_seed.unwrap_or(d.master_seed),
            trials: self.trials.unwrap_or(d.trials),
            n: self.n.unwrap_or(d.n),
            rho_list: d.rho_list,
            guess_cap: self.guess_cap.unwrap_or(d.guess_cap),
            workers: self.workers.unwrap_or(d.workers),
            mode: self.mode.unwrap_or(d.mode),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub rho: RhoList,
    pub source: SourceSection,
    pub distortion: DistortionSection,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default)]
    pub solver: SolverControls,
    #[serde(default)]
    pub simulate: SimulateSection,
}

/// Reproduction strategy after validation.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpec {
    Tilted,
    Uniform,
    Optimize,
    Explicit(Vec<f64>),
}

/// Validated problem.
#[derive(Debug, Clone)]
pub struct Problem {
    pub source: FiniteSource,
    pub model: DistortionModel,
    pub rhos: Vec<f64>,
    pub strategy: StrategySpec,
    pub controls: SolverControls,
    pub sim: SimConfig,
    pub fixed_q: Option<f64>,
}

fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn pmf_values(v: &[Number], field: &str) -> Result<Vec<f64>> {
    v.iter().enumerate().map(|(i, x)| x.value(&format!("{field}[{i}]"))).collect()
}

fn core_err(field: &str, e: guessd_core::Error) -> anyhow::Error {
    bad(format!("{field}: {e}"))
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad(e.to_string()))
    }

    pub fn into_problem(self) -> Result<Problem> {
        let pmf = pmf_values(&self.source.pmf, "source.pmf")?;
        let m = pmf.len();
        let source_labels = self.source.labels.clone().unwrap_or_else(|| labels(m));
        if source_labels.len() != m {
            return Err(bad(format!("source.labels has {} entries, source.pmf has {m}", source_labels.len())));
        }
        let source = FiniteSource::new(source_labels.clone(), pmf).map_err(|e| core_err("source", e))?;

        let dist = &self.distortion;
        let matrix: Vec<Vec<Number>> = match (dist.kind, &dist.matrix) {
            (DistortionKind::Matrix, Some(mat)) => mat.clone(),
            (DistortionKind::Matrix, None) => return Err(bad("distortion.matrix is required when kind = \"matrix\"")),
            (_, Some(_)) => return Err(bad("distortion.matrix is only allowed when kind = \"matrix\"")),
            (kind, None) => (0..m)
                .map(|x| {
                    (0..m)
                        .map(|y| match kind {
                            DistortionKind::Hamming => Number::Int(i64::from(x != y)),
                            _ => Number::Int((x as i64 - y as i64).abs()),
                        })
                        .collect()
                })
                .collect(),
        };
        if matrix.len() != m {
            return Err(bad(format!("distortion.matrix has {} rows, source has {m} symbols", matrix.len())));
        }
        let k = matrix.first().map_or(0, Vec::len);
        let repro_labels = match (&dist.repro_labels, dist.kind) {
            (Some(l), _) => l.clone(),
            (None, DistortionKind::Matrix) => labels(k),
            (None, _) => source_labels.clone(),
        };
        for (x, row) in matrix.iter().enumerate() {
            if row.len() != k {
                return Err(bad(format!("distortion.matrix[{x}] has {} entries, expected {k}", row.len())));
            }
        }
        let exact = dist.delta.is_text() || matrix.iter().flatten().any(Number::is_text);
        let model = if exact {
            let delta = dist
                .delta
                .rational("distortion.delta")?
                .ok_or_else(|| bad("distortion.delta must be an integer or \"a/b\" when rationals are used"))?;
            let mut rows = Vec::with_capacity(m);
            for (x, row) in matrix.iter().enumerate() {
                let mut r = Vec::with_capacity(k);
                for (y, v) in row.iter().enumerate() {
                    let field = format!("distortion.matrix[{x}][{y}]");
                    let q = v
                        .rational(&field)?
                        .ok_or_else(|| bad(format!("{field}: write non-integer entries as \"a/b\" in exact mode")))?;
                    if q < Ratio::from_integer(0) {
                        return Err(bad(format!("{field}: negative distortion")));
                    }
                    r.push(q);
                }
                rows.push(r);
            }
            DistortionModel::from_rationals(source_labels, repro_labels, rows, delta)
        } else {
            let mut rows = Vec::with_capacity(m);
            for (x, row) in matrix.iter().enumerate() {
                let r: Result<Vec<f64>> =
                    row.iter().enumerate().map(|(y, v)| v.value(&format!("distortion.matrix[{x}][{y}]"))).collect();
                rows.push(r?);
            }
            DistortionModel::new(source_labels, repro_labels, rows, dist.delta.value("distortion.delta")?)
        }
        .map_err(|e| core_err("distortion", e))?;
        model.balls().map_err(|e| core_err("distortion", e))?;

        let rhos = match &self.rho {
            RhoList::One(r) => vec![r.value("rho")?],
            RhoList::Many(v) => pmf_values(v, "rho")?,
        };
        if rhos.is_empty() {
            return Err(bad("rho: at least one order is required"));
        }
        if let Some((i, r)) = rhos.iter().enumerate().find(|(_, r)| !(**r > 0.0 && r.is_finite())) {
            return Err(bad(format!("rho[{i}] = {r} must be positive and finite")));
        }

        let strategy = match self.strategy.kind {
            StrategyKind::Explicit => {
                let v = self
                    .strategy
                    .pmf
                    .as_ref()
                    .ok_or_else(|| bad("strategy.pmf is required when kind = \"explicit\""))?;
                let q = pmf_values(v, "strategy.pmf")?;
                if q.len() != k {
                    return Err(bad(format!("strategy.pmf has {} entries, reproduction alphabet has {k}", q.len())));
                }
                guessd_core::distortion::validate_pmf(&q).map_err(|e| core_err("strategy.pmf", e))?;
                StrategySpec::Explicit(q)
            }
            _ if self.strategy.pmf.is_some() => {
                return Err(bad("strategy.pmf is only allowed when kind = \"explicit\""));
            }
            StrategyKind::Tilted => StrategySpec::Tilted,
            StrategyKind::Uniform => StrategySpec::Uniform,
            StrategyKind::Optimize => StrategySpec::Optimize,
        };
        let sim = SimConfig { rho_list: rhos.clone(), ..self.simulate.to_config() };
        sim.validate().map_err(|e| core_err("simulate", e))?;
        if let Some(q) = self.simulate.fixed_q {
            if !(q > 0.0 && q <= 1.0) {
                return Err(bad(format!("simulate.fixed_q = {q} must lie in (0, 1]")));
            }
        }
        Ok(Problem {
            source,
            model,
            rhos,
            strategy,
            controls: self.solver,
            sim,
            fixed_q: self.simulate.fixed_q,
        })
    }
}

/// Reads and validates a config file.
pub fn load(path: &Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
    RawConfig::parse(&text)
        .and_then(RawConfig::into_problem)
        .with_context(|| format!("in {}", path.display()))
}
