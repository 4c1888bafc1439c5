//! Small numerical kernels shared across the crate: log-domain summation,
//! compensated and pairwise sums, log-gamma helpers.

/// Below this many terms the pairwise reduction falls back to a plain loop.
const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (cascade) summation. Deterministic for a fixed input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot vanishes.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[piv][col].abs() > 0.0) {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// `log(sum(exp(xs)))` with max-shift and pairwise reduction of the shifted
/// terms. Returns `-inf` for an empty slice or when every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let shifted: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    max + pairwise_sum(&shifted).ln()
}

/// `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Streaming log-sum-exp accumulator. Rescales whenever a larger term
/// arrives, and keeps the scaled sum compensated.
#[derive(Debug, Clone, Copy)]
pub struct LogSumAccumulator {
    max: f64,
    scaled: CompensatedSum,
}

impl Default for LogSumAccumulator {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: CompensatedSum::new(),
        }
    }
}

impl LogSumAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if log_term > self.max {
            let rescale = (self.max - log_term).exp();
            let old = self.scaled.value() * rescale;
            self.scaled = CompensatedSum::new();
            self.scaled.add(old);
            self.max = log_term;
        }
        self.scaled.add((log_term - self.max).exp());
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.value().ln()
        }
    }
}

/// Natural log of the gamma function for positive arguments.
#[inline]
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// `ln(rho!)` generalised to real `rho` via `ln Γ(rho + 1)`.
#[inline]
pub fn ln_factorial(rho: f64) -> f64 {
    ln_gamma(rho + 1.0)
}

/// Generalised binomial coefficient `C(a, b) = Γ(a+1) / (Γ(b+1) Γ(a-b+1))`
/// returned as `(sign, ln|C|)`. Poles of the numerator are not supported;
/// poles in the denominator give a zero coefficient (`ln = -inf`).
pub fn ln_binomial_signed(a: f64, b: f64) -> (f64, f64) {
    let (s1, l1) = signed_ln_gamma(a + 1.0);
    let (s2, l2) = signed_ln_gamma(b + 1.0);
    let (s3, l3) = signed_ln_gamma(a - b + 1.0);
    if l2 == f64::INFINITY || l3 == f64::INFINITY {
        return (0.0, f64::NEG_INFINITY);
    }
    (s1 * s2 * s3, l1 - l2 - l3)
}

/// `C(a, k) = a (a-1) ... (a-k+1) / k!` for real `a` and integer `k`.
pub fn binomial_falling(a: f64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (a - i as f64) / (i as f64 + 1.0))
}

/// `(sign Γ(x), ln|Γ(x)|)`; at nonpositive integers returns `(0, +inf)`.
pub fn signed_ln_gamma(x: f64) -> (f64, f64) {
    if x <= 0.0 && x == x.floor() {
        return (0.0, f64::INFINITY);
    }
    let (l, sign) = libm::lgamma_r(x);
    (f64::from(sign), l)
}

/// True when `x` is (numerically) a positive integer no larger than `max`.
pub fn as_small_integer(x: f64, max: u32) -> Option<u32> {
    if x >= 1.0 && x <= f64::from(max) && x == x.round() {
        Some(x as u32)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_solve_recovers_solution() {
        let a = vec![vec![0.0, 2.0, 1.0], vec![1.0, 1.0, 0.0], vec![3.0, 0.0, 1.0]];
        let x = [1.0, -2.0, 0.5];
        let b: Vec<f64> = a.iter().map(|r| r.iter().zip(&x).map(|(u, v)| u * v).sum()).collect();
        let got = solve_linear(a, b).unwrap();
        for (g, w) in got.iter().zip(&x) {
            assert!((g - w).abs() < 1e-14);
        }
        assert!(solve_linear(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let xs = [0.1f64.ln(), 0.2f64.ln(), 0.7f64.ln()];
        assert!((log_sum_exp(&xs)).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
    }

    #[test]
    fn accumulator_agrees_with_batch() {
        let xs: Vec<f64> = (0..1000).map(|i| -(i as f64) * 0.37 + (i % 7) as f64).collect();
        let mut acc = LogSumAccumulator::new();
        for &x in &xs {
            acc.add(x);
        }
        assert!((acc.value() - log_sum_exp(&xs)).abs() < 1e-13);
    }

    #[test]
    fn log_add_exp_handles_infinities() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert!((log_add_exp(0.0, 0.0) - 2f64.ln()).abs() < 1e-16);
    }

    #[test]
    fn ln_factorial_small_integers() {
        assert!((ln_factorial(4.0) - 24f64.ln()).abs() < 1e-14);
        assert!((ln_factorial(12.0) - 479_001_600f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn binomial_reflection_identity() {
        // C(m + rho - 1, rho) = (-1)^(m-1) C(-rho - 1, m - 1)
        for &rho in &[0.5, 1.0, 2.0, 3.7] {
            for m in 1..12 {
                let (s_lhs, l_lhs) = ln_binomial_signed(m as f64 + rho - 1.0, rho);
                let sign = if (m - 1) % 2 == 0 { 1.0 } else { -1.0 };
                let lhs = s_lhs * l_lhs.exp();
                let rhs = sign * binomial_falling(-rho - 1.0, (m - 1) as u64);
                assert!(
                    (lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0),
                    "rho={rho} m={m}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn small_integer_detection() {
        assert_eq!(as_small_integer(3.0, 12), Some(3));
        assert_eq!(as_small_integer(3.5, 12), None);
        assert_eq!(as_small_integer(13.0, 12), None);
        assert_eq!(as_small_integer(0.0, 12), None);
    }
}
