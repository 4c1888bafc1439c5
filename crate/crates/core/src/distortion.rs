//! Sources, distortion models, and distortion balls.
//!
//! Symbols are dense indices everywhere in the library; labels are carried
//! only so that reports and errors can name symbols.

use bitvec::prelude::*;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a probability vector.
pub const PMF_SUM_TOL: f64 = 1e-12;

/// Checks that `p` is a probability vector: finite, nonnegative, summing to
/// one within [`PMF_SUM_TOL`].
pub fn validate_pmf(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidPmf("empty vector".into()));
    }
    for (i, &v) in p.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidPmf(format!("entry {i} is not finite")));
        }
        if v < 0.0 {
            return Err(Error::NegativeEntry { index: i, value: v });
        }
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PMF_SUM_TOL {
        return Err(Error::InvalidPmf(format!("entries sum to {total}")));
    }
    Ok(())
}

fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| i.to_string()).collect()
}

fn check_unique(labels: &[String]) -> Result<()> {
    let mut sorted: Vec<&String> = labels.iter().collect();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidPmf(format!("duplicate symbol label {:?}", w[0])));
    }
    Ok(())
}

/// A finite-alphabet random variable: labelled symbols and their law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSource {
    symbols: Vec<String>,
    pmf: Vec<f64>,
}

impl FiniteSource {
    pub fn new(symbols: Vec<String>, pmf: Vec<f64>) -> Result<Self> {
        if symbols.len() != pmf.len() {
            return Err(Error::LengthMismatch {
                left: symbols.len(),
                right: pmf.len(),
            });
        }
        check_unique(&symbols)?;
        validate_pmf(&pmf)?;
        Ok(Self { symbols, pmf })
    }

    /// Source over symbols labelled `0..n`.
    pub fn from_pmf(pmf: Vec<f64>) -> Result<Self> {
        Self::new(default_labels(pmf.len()), pmf)
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn label(&self, x: usize) -> &str {
        &self.symbols[x]
    }

    pub fn len(&self) -> usize {
        self.pmf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pmf.is_empty()
    }
}

/// Distortion entries given exactly as rationals, rescaled to integer units
/// over a common denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistortion {
    units: Vec<Vec<u64>>,
    scale: u64,
    delta: Ratio<i64>,
}

impl ExactDistortion {
    /// Integer distortion units; a per-letter distortion equals `units / scale`.
    pub fn units(&self) -> &[Vec<u64>] {
        &self.units
    }

    pub fn scale(&self) -> u64 {
        self.scale
    }

    pub fn delta(&self) -> Ratio<i64> {
        self.delta
    }

    /// `total_units / (scale * n) <= delta`, decided exactly.
    pub fn feasible_total(&self, total_units: u64, n: usize) -> bool {
        let lhs = i128::from(total_units) * i128::from(*self.delta.denom());
        let rhs = i128::from(*self.delta.numer()) * i128::from(self.scale) * n as i128;
        lhs <= rhs
    }
}

/// Per-letter distortion matrix with threshold `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionModel {
    source_alphabet: Vec<String>,
    repro_alphabet: Vec<String>,
    d: Vec<Vec<f64>>,
    delta: f64,
    exact: Option<ExactDistortion>,
}

impl DistortionModel {
    /// Builds a model from a real-valued `|X| x |X̂|` matrix.
    ///
    /// Ball nonemptiness is not checked here; [`DistortionModel::balls`]
    /// reports the first empty ball.
    pub fn new(
        source_alphabet: Vec<String>,
        repro_alphabet: Vec<String>,
        d: Vec<Vec<f64>>,
        delta: f64,
    ) -> Result<Self> {
        if source_alphabet.is_empty() || repro_alphabet.is_empty() {
            return Err(Error::InvalidDistortion("empty alphabet".into()));
        }
        check_unique(&source_alphabet)?;
        check_unique(&repro_alphabet)?;
        if d.len() != source_alphabet.len() {
            return Err(Error::DimensionMismatch(format!(
                "distortion matrix has {} rows, source alphabet has {} symbols",
                d.len(),
                source_alphabet.len()
            )));
        }
        for (x, row) in d.iter().enumerate() {
            if row.len() != repro_alphabet.len() {
                return Err(Error::DimensionMismatch(format!(
                    "row {x} has {} entries, reproduction alphabet has {} symbols",
                    row.len(),
                    repro_alphabet.len()
                )));
            }
            for (xh, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidDistortion(format!(
                        "d({x},{xh}) = {v} is not a finite nonnegative number"
                    )));
                }
            }
        }
        if !delta.is_finite() || delta < 0.0 {
            return Err(Error::InvalidDistortion(format!(
                "threshold {delta} is not a finite nonnegative number"
            )));
        }
        Ok(Self {
            source_alphabet,
            repro_alphabet,
            d,
            delta,
            exact: None,
        })
    }

    /// Builds a model whose entries and threshold are exact rationals. The
    /// real-valued view is the nearest `f64` of each rational; block-level
    /// feasibility is decided on the rationals.
    pub fn from_rationals(
        source_alphabet: Vec<String>,
        repro_alphabet: Vec<String>,
        d: Vec<Vec<Ratio<i64>>>,
        delta: Ratio<i64>,
    ) -> Result<Self> {
        let to_f64 = |r: &Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
        let real: Vec<Vec<f64>> = d.iter().map(|row| row.iter().map(to_f64).collect()).collect();
        let mut model = Self::new(source_alphabet, repro_alphabet, real, to_f64(&delta))?;
        let mut scale: i64 = 1;
        for r in d.iter().flatten() {
            let den = *r.denom();
            scale = scale / gcd(scale, den) * den;
        }
        let units = d
            .iter()
            .map(|row| {
                row.iter()
                    .map(|r| (*r.numer() * (scale / *r.denom())) as u64)
                    .collect()
            })
            .collect();
        model.exact = Some(ExactDistortion {
            units,
            scale: scale as u64,
            delta,
        });
        Ok(model)
    }

    /// Real-valued model with index labels `0, 1, ...` on both alphabets.
    pub fn from_matrix(d: Vec<Vec<f64>>, delta: f64) -> Result<Self> {
        let n = d.len();
        let k = d.first().map_or(0, Vec::len);
        Self::new(default_labels(n), default_labels(k), d, delta)
    }

    /// Hamming distortion on `{0..m}` for both alphabets.
    pub fn hamming(m: usize, delta: f64) -> Result<Self> {
        let d = (0..m)
            .map(|x| (0..m).map(|y| if x == y { 0.0 } else { 1.0 }).collect())
            .collect();
        Self::new(default_labels(m), default_labels(m), d, delta)
    }

    /// Absolute-difference distortion `|x - x̂|` on `{0..m}`.
    pub fn absolute(m: usize, delta: f64) -> Result<Self> {
        let d = (0..m)
            .map(|x| (0..m).map(|y| (x as f64 - y as f64).abs()).collect())
            .collect();
        Self::new(default_labels(m), default_labels(m), d, delta)
    }

    /// Same matrix with a different threshold. Drops exact data.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        Self::new(
            self.source_alphabet.clone(),
            self.repro_alphabet.clone(),
            self.d.clone(),
            delta,
        )
    }

    #[inline]
    pub fn d(&self, x: usize, xh: usize) -> f64 {
        self.d[x][xh]
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.d
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn source_size(&self) -> usize {
        self.source_alphabet.len()
    }

    pub fn repro_size(&self) -> usize {
        self.repro_alphabet.len()
    }

    pub fn source_alphabet(&self) -> &[String] {
        &self.source_alphabet
    }

    pub fn repro_alphabet(&self) -> &[String] {
        &self.repro_alphabet
    }

    pub fn exact(&self) -> Option<&ExactDistortion> {
        self.exact.as_ref()
    }

    /// Largest entry of the matrix.
    pub fn max_distortion(&self) -> f64 {
        self.d.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// Smallest distortion reachable from `x`.
    pub fn row_min(&self, x: usize) -> f64 {
        self.d[x].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Convenience wrapper around [`build_ball_index`].
    pub fn balls(&self) -> Result<BallIndex> {
        build_ball_index(self)
    }

    /// Integer view of the matrix for dynamic programming over cumulative
    /// distortion. Available when exact rationals were supplied or when every
    /// real entry is a small integer.
    pub fn integer_units(&self) -> Option<IntegerUnits> {
        if let Some(exact) = &self.exact {
            return Some(IntegerUnits {
                units: exact.units.clone(),
                rule: UnitRule::Exact(exact.clone()),
            });
        }
        const LIMIT: f64 = (1u64 << 31) as f64;
        let integral = self
            .d
            .iter()
            .flatten()
            .all(|&v| v == v.round() && v < LIMIT);
        integral.then(|| IntegerUnits {
            units: self
                .d
                .iter()
                .map(|row| row.iter().map(|&v| v as u64).collect())
                .collect(),
            rule: UnitRule::Real(self.delta),
        })
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

#[derive(Debug, Clone, PartialEq)]
enum UnitRule {
    /// Real threshold: feasible iff `(total as f64) / (n as f64) <= delta`,
    /// which is bit-identical to [`block_distortion`] on integer entries.
    Real(f64),
    Exact(ExactDistortion),
}

/// Integer distortion units together with the block feasibility rule.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegerUnits {
    units: Vec<Vec<u64>>,
    rule: UnitRule,
}

impl IntegerUnits {
    pub fn unit(&self, x: usize, xh: usize) -> u64 {
        self.units[x][xh]
    }

    pub fn feasible(&self, total: u64, n: usize) -> bool {
        match &self.rule {
            UnitRule::Real(delta) => (total as f64) / (n as f64) <= *delta,
            UnitRule::Exact(exact) => exact.feasible_total(total, n),
        }
    }

    /// Largest feasible cumulative total at blocklength `n`.
    pub fn max_feasible_total(&self, n: usize) -> u64 {
        let guess = match &self.rule {
            UnitRule::Real(delta) => (delta * n as f64).floor() as u64 + 2,
            UnitRule::Exact(exact) => {
                let num = i128::from(*exact.delta.numer()) * i128::from(exact.scale) * n as i128;
                (num / i128::from(*exact.delta.denom())) as u64 + 2
            }
        };
        let mut t = guess;
        while t > 0 && !self.feasible(t, n) {
            t -= 1;
        }
        t
    }
}

/// Forward balls `A(x) = {x̂ : d(x,x̂) <= Δ}` and reverse balls
/// `B(x̂) = {x : d(x,x̂) <= Δ}` as bitsets.
#[derive(Debug, Clone, PartialEq)]
pub struct BallIndex {
    forward: Vec<BitVec>,
    reverse: Vec<BitVec>,
}

impl BallIndex {
    /// `A(x)`, a bitset over the reproduction alphabet.
    pub fn forward(&self, x: usize) -> &BitSlice {
        &self.forward[x]
    }

    /// `B(x̂)`, a bitset over the source alphabet.
    pub fn reverse(&self, xh: usize) -> &BitSlice {
        &self.reverse[xh]
    }

    pub fn covers(&self, x: usize, xh: usize) -> bool {
        self.forward[x][xh]
    }

    /// Members of `A(x)` in increasing index order.
    pub fn members(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        self.forward[x].iter_ones()
    }

    pub fn source_size(&self) -> usize {
        self.forward.len()
    }

    pub fn repro_size(&self) -> usize {
        self.reverse.len()
    }
}

/// Builds the ball index with exact `<=` comparisons against `Δ`.
pub fn build_ball_index(model: &DistortionModel) -> Result<BallIndex> {
    let (nx, nxh) = (model.source_size(), model.repro_size());
    let mut forward = vec![bitvec![0; nxh]; nx];
    let mut reverse = vec![bitvec![0; nx]; nxh];
    for x in 0..nx {
        for xh in 0..nxh {
            if model.d(x, xh) <= model.delta() {
                forward[x].set(xh, true);
                reverse[xh].set(x, true);
            }
        }
        if forward[x].not_any() {
            return Err(Error::EmptyBall { symbol: x });
        }
    }
    Ok(BallIndex { forward, reverse })
}

fn check_sequences(model: &DistortionModel, x_seq: &[usize], xh_seq: &[usize]) -> Result<()> {
    if x_seq.len() != xh_seq.len() {
        return Err(Error::LengthMismatch {
            left: x_seq.len(),
            right: xh_seq.len(),
        });
    }
    if x_seq.is_empty() {
        return Err(Error::LengthMismatch { left: 0, right: 0 });
    }
    if x_seq.iter().any(|&x| x >= model.source_size())
        || xh_seq.iter().any(|&xh| xh >= model.repro_size())
    {
        return Err(Error::DimensionMismatch("symbol index out of range".into()));
    }
    Ok(())
}

/// Per-symbol average distortion `(1/n) Σ d(x_i, x̂_i)`.
pub fn block_distortion(x_seq: &[usize], xh_seq: &[usize], model: &DistortionModel) -> Result<f64> {
    check_sequences(model, x_seq, xh_seq)?;
    let total: f64 = x_seq
        .iter()
        .zip(xh_seq)
        .map(|(&x, &xh)| model.d(x, xh))
        .sum();
    Ok(total / x_seq.len() as f64)
}

/// Whether `x̂` lies in the block ball of `x`. Uses exact rational arithmetic
/// when the model carries it.
pub fn block_ball_membership(
    x_seq: &[usize],
    xh_seq: &[usize],
    model: &DistortionModel,
) -> Result<bool> {
    if let Some(exact) = model.exact() {
        check_sequences(model, x_seq, xh_seq)?;
        let total: u64 = x_seq
            .iter()
            .zip(xh_seq)
            .map(|(&x, &xh)| exact.units[x][xh])
            .sum();
        return Ok(exact.feasible_total(total, x_seq.len()));
    }
    Ok(block_distortion(x_seq, xh_seq, model)? <= model.delta())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn members(b: &BallIndex, x: usize) -> Vec<usize> {
        b.members(x).collect()
    }

    #[test]
    fn absolute_distortion_balls() {
        let model = DistortionModel::absolute(3, 1.0).unwrap();
        let b = model.balls().unwrap();
        assert_eq!(members(&b, 0), vec![0, 1]);
        assert_eq!(members(&b, 1), vec![0, 1, 2]);
        assert_eq!(members(&b, 2), vec![1, 2]);
    }

    #[test]
    fn hamming_zero_threshold_gives_singletons() {
        let b = DistortionModel::hamming(4, 0.0).unwrap().balls().unwrap();
        for x in 0..4 {
            assert_eq!(members(&b, x), vec![x]);
        }
    }

    #[test]
    fn large_threshold_gives_full_balls() {
        let model = DistortionModel::absolute(4, 3.0).unwrap();
        let b = model.balls().unwrap();
        for x in 0..4 {
            assert_eq!(members(&b, x), vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn empty_ball_is_reported() {
        let d = vec![vec![0.5, 2.0], vec![3.0, 4.0]];
        let model = DistortionModel::new(default_labels(2), default_labels(2), d, 1.0).unwrap();
        assert_eq!(model.balls(), Err(Error::EmptyBall { symbol: 1 }));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(FiniteSource::from_pmf(vec![0.5, 0.4]).is_err());
        assert!(matches!(
            FiniteSource::from_pmf(vec![1.5, -0.5]),
            Err(Error::NegativeEntry { index: 1, .. })
        ));
        assert!(FiniteSource::new(vec!["a".into(), "a".into()], vec![0.5, 0.5]).is_err());
        assert!(DistortionModel::new(default_labels(1), default_labels(1), vec![vec![-1.0]], 0.0).is_err());
        assert!(DistortionModel::new(default_labels(1), default_labels(1), vec![vec![f64::INFINITY]], 0.0).is_err());
    }

    #[test]
    fn block_distortion_examples() {
        let h = DistortionModel::hamming(2, 0.5).unwrap();
        assert_eq!(block_distortion(&[0, 1], &[0, 1], &h).unwrap(), 0.0);
        assert_eq!(block_distortion(&[0, 0], &[0, 1], &h).unwrap(), 0.5);
        let a = DistortionModel::absolute(3, 1.0).unwrap();
        assert_eq!(block_distortion(&[0, 2], &[1, 1], &a).unwrap(), 1.0);
        assert_eq!(
            block_distortion(&[0], &[0, 1], &h),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        );
    }

    #[test]
    fn block_membership_boundary() {
        let h = DistortionModel::hamming(2, 0.5).unwrap();
        assert!(block_ball_membership(&[0, 0], &[0, 1], &h).unwrap());
        let h = DistortionModel::hamming(2, 0.4).unwrap();
        assert!(!block_ball_membership(&[0, 0], &[0, 1], &h).unwrap());
        assert!(block_ball_membership(&[1, 0, 1], &[1, 0, 1], &h).unwrap());
    }

    #[test]
    fn rational_model_decides_exactly() {
        let r = |n, d| Ratio::new(n, d);
        let d = vec![vec![r(0, 1), r(1, 3)], vec![r(1, 3), r(0, 1)]];
        let model =
            DistortionModel::from_rationals(default_labels(2), default_labels(2), d, r(1, 9)).unwrap();
        let exact = model.exact().unwrap();
        assert_eq!(exact.scale(), 3);
        // one mismatch in three letters: (1/3)/3 = 1/9 <= 1/9
        assert!(block_ball_membership(&[0, 0, 0], &[0, 0, 1], &model).unwrap());
        assert!(!block_ball_membership(&[0, 0, 0], &[0, 1, 1], &model).unwrap());
        let units = model.integer_units().unwrap();
        assert_eq!(units.max_feasible_total(3), 1);
    }

    #[test]
    fn integer_units_follow_real_rule() {
        let h = DistortionModel::hamming(2, 0.25).unwrap();
        let u = h.integer_units().unwrap();
        assert_eq!(u.max_feasible_total(12), 3);
        assert_eq!(u.max_feasible_total(11), 2);
        assert_eq!(u.max_feasible_total(2), 0);
        let frac = DistortionModel::new(default_labels(1), default_labels(2), vec![vec![0.0, 0.5]], 0.5).unwrap();
        assert!(frac.integer_units().is_none());
    }

    fn random_model() -> impl Strategy<Value = DistortionModel> {
        (1usize..6, 1usize..6).prop_flat_map(|(nx, nxh)| {
            (
                prop::collection::vec(prop::collection::vec(0.0f64..4.0, nxh), nx),
                0.0f64..4.0,
            )
                .prop_map(move |(d, delta)| {
                    DistortionModel::new(default_labels(nx), default_labels(nxh), d, delta).unwrap()
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn forward_reverse_duality(model in random_model()) {
            match model.balls() {
                Ok(b) => {
                    for x in 0..model.source_size() {
                        prop_assert!(b.forward(x).any());
                        for xh in 0..model.repro_size() {
                            prop_assert_eq!(b.forward(x)[xh], b.reverse(xh)[x]);
                            prop_assert_eq!(b.forward(x)[xh], model.d(x, xh) <= model.delta());
                        }
                    }
                }
                Err(Error::EmptyBall { symbol }) => {
                    prop_assert!(model.row_min(symbol) > model.delta());
                }
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn balls_grow_with_threshold(model in random_model(), extra in 0.0f64..2.0) {
            let bigger = model.with_delta(model.delta() + extra).unwrap();
            if let (Ok(small), Ok(large)) = (model.balls(), bigger.balls()) {
                for x in 0..model.source_size() {
                    for xh in small.members(x) {
                        prop_assert!(large.covers(x, xh));
                    }
                }
            }
        }

        #[test]
        fn block_distortion_is_permutation_covariant(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..10),
            seed in any::<u64>(),
        ) {
            let model = DistortionModel::absolute(3, 1.0).unwrap();
            let (xs, ys): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let mut perm: Vec<usize> = (0..xs.len()).collect();
            let mut s = seed;
            for i in (1..perm.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                perm.swap(i, (s >> 33) as usize % (i + 1));
            }
            let px: Vec<usize> = perm.iter().map(|&i| xs[i]).collect();
            let py: Vec<usize> = perm.iter().map(|&i| ys[i]).collect();
            let a = block_distortion(&xs, &ys, &model).unwrap();
            let b = block_distortion(&px, &py, &model).unwrap();
            // integer entries: sums are exact in any order
            prop_assert_eq!(a, b);
        }
    }
}
