//! Entropy, conditional entropy, mutual information and divergence over
//! finite alphabets, in nats. Channels are row-stochastic matrices.

use serde::{Deserialize, Serialize};

use crate::distortion::validate_pmf;
use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;

/// A quantity in nats that may be `+∞`. Kept apart from `f64::INFINITY` so an
/// infinite divergence is handled explicitly rather than leaking into sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Nats {
    Finite(f64),
    Infinite,
}

impl Nats {
    pub fn finite(self) -> Option<f64> {
        match self {
            Nats::Finite(v) => Some(v),
            Nats::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Nats::Infinite)
    }

    /// Lossy conversion for reporting.
    pub fn to_f64(self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

/// Conditional law `V(x̂|x)`; row `x` is a pmf over the reproduction alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    rows: Vec<Vec<f64>>,
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::DimensionMismatch(format!(
                    "channel row {x} has {} entries, expected {width}",
                    row.len()
                )));
            }
            validate_pmf(row)?;
        }
        Ok(Self { rows })
    }

    /// Builds without validation; callers guarantee row-stochasticity.
    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    /// Every row equal to `q`.
    pub fn product(q: &[f64], source_size: usize) -> Result<Self> {
        validate_pmf(q)?;
        Ok(Self { rows: vec![q.to_vec(); source_size] })
    }

    pub fn identity(m: usize) -> Self {
        let rows = (0..m)
            .map(|x| (0..m).map(|y| if x == y { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.rows[x]
    }

    pub fn get(&self, x: usize, xh: usize) -> f64 {
        self.rows[x][xh]
    }

    pub fn source_size(&self) -> usize {
        self.rows.len()
    }

    pub fn repro_size(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Output marginal `(pV)(x̂) = Σ_x p(x) V(x̂|x)`.
    pub fn output_marginal(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_input(p)?;
        let mut out = vec![0.0; self.repro_size()];
        for (row, &px) in self.rows.iter().zip(p) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += px * v;
            }
        }
        Ok(out)
    }

    /// Average distortion `Σ p(x) V(x̂|x) d(x, x̂)`.
    pub fn average_distortion(&self, p: &[f64], d: &[Vec<f64>]) -> Result<f64> {
        self.check_input(p)?;
        if d.len() != self.source_size() || d.iter().any(|r| r.len() != self.repro_size()) {
            return Err(Error::DimensionMismatch(
                "distortion matrix shape differs from channel".into(),
            ));
        }
        let mut acc = CompensatedSum::new();
        for ((row, drow), &px) in self.rows.iter().zip(d).zip(p) {
            for (&v, &dv) in row.iter().zip(drow) {
                acc.add(px * v * dv);
            }
        }
        Ok(acc.value())
    }

    fn check_input(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.source_size() {
            return Err(Error::DimensionMismatch(format!(
                "input pmf has {} entries, channel has {} rows",
                p.len(),
                self.source_size()
            )));
        }
        Ok(())
    }
}

#[inline]
fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Shannon entropy `H(p)`.
pub fn entropy(p: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    for &x in p {
        acc.add(-xlogx(x));
    }
    acc.value()
}

/// `H(V|p) = Σ_x p(x) H(V(·|x))`.
pub fn cond_entropy(v: &Channel, p: &[f64]) -> Result<f64> {
    v.check_input(p)?;
    let mut acc = CompensatedSum::new();
    for (row, &px) in v.rows.iter().zip(p) {
        if px > 0.0 {
            acc.add(px * entropy(row));
        }
    }
    Ok(acc.value())
}

/// `I(p, V) = Σ_{x,x̂} p(x) V(x̂|x) ln[V(x̂|x) / (pV)(x̂)]`, evaluated termwise
/// so it stays nonnegative up to rounding.
pub fn mutual_info(p: &[f64], v: &Channel) -> Result<f64> {
    let out = v.output_marginal(p)?;
    let mut acc = CompensatedSum::new();
    for (row, &px) in v.rows.iter().zip(p) {
        if px <= 0.0 {
            continue;
        }
        for (&w, &o) in row.iter().zip(&out) {
            // Skipping underflowed joint masses also keeps `o > 0` below.
            if px * w > 0.0 {
                acc.add(px * w * (w.ln() - o.ln()));
            }
        }
    }
    Ok(acc.value().max(0.0))
}

/// `D(p‖q)`; `Nats::Infinite` when `p` charges a symbol `q` does not.
pub fn divergence(p: &[f64], q: &[f64]) -> Result<Nats> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "divergence arguments have {} and {} entries",
            p.len(),
            q.len()
        )));
    }
    let mut acc = CompensatedSum::new();
    for (&a, &b) in p.iter().zip(q) {
        if a <= 0.0 {
            continue;
        }
        if b <= 0.0 {
            return Ok(Nats::Infinite);
        }
        acc.add(a * (a.ln() - b.ln()));
    }
    Ok(Nats::Finite(acc.value().max(0.0)))
}

/// `Σ_{x,x̂} p(x) V(x̂|x) ln[V(x̂|x) / q(x̂)]`, which equals
/// `I(p,V) + D(pV‖q)`. Infinite when `V` charges a zero of `q`.
pub fn mismatched_objective(p: &[f64], v: &Channel, q: &[f64]) -> Result<Nats> {
    v.check_input(p)?;
    if q.len() != v.repro_size() {
        return Err(Error::DimensionMismatch(format!(
            "reproduction pmf has {} entries, channel has {} columns",
            q.len(),
            v.repro_size()
        )));
    }
    let mut acc = CompensatedSum::new();
    for (row, &px) in v.rows.iter().zip(p) {
        if px <= 0.0 {
            continue;
        }
        for (&w, &qh) in row.iter().zip(q) {
            if w <= 0.0 {
                continue;
            }
            if qh <= 0.0 {
                return Ok(Nats::Infinite);
            }
            if px * w > 0.0 {
                acc.add(px * w * (w.ln() - qh.ln()));
            }
        }
    }
    Ok(Nats::Finite(acc.value()))
}

/// Normalizes a nonnegative vector in place; returns `false` if it sums to 0.
pub(crate) fn normalize(v: &mut [f64]) -> bool {
    let s: f64 = v.iter().sum();
    if !(s > 0.0) {
        return false;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
    true
}
