//! Log-space arithmetic.
//!
//! Every bound in this crate is a sum of terms like `C(lambda, j) * gamma^j * ...`
//! that overflows `f64` long before `lambda` reaches the orders an accountant
//! searches over. Terms are therefore carried as logarithms of their magnitude,
//! summed with log-sum-exp, and only leave log space through `log1p_exp`.

use std::cmp::Ordering;
use std::ops::{Mul, Neg};

use crate::error::{Error, Result};

/// Relative tolerance of the scalar special functions in this module.
pub const REL_TOL: f64 = 1e-12;

/// Per-term relative error budget of [`signed_log_sum`].
pub const SUM_TOL_PER_TERM: f64 = 1e-14;

/// A real number stored as a sign and the natural log of its magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    sign: i8,
    log_mag: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0,
        log_mag: f64::NEG_INFINITY,
    };

    pub const ONE: SignedLog = SignedLog {
        sign: 1,
        log_mag: 0.0,
    };

    /// Builds a value from a sign and a log-magnitude. A zero sign or a
    /// `-inf` magnitude both normalize to [`SignedLog::ZERO`].
    pub fn new(sign: i8, log_mag: f64) -> Self {
        if sign == 0 || log_mag == f64::NEG_INFINITY {
            Self::ZERO
        } else {
            SignedLog {
                sign: sign.signum(),
                log_mag,
            }
        }
    }

    pub fn positive(log_mag: f64) -> Self {
        Self::new(1, log_mag)
    }

    pub fn from_real(x: f64) -> Self {
        match x.partial_cmp(&0.0) {
            Some(Ordering::Greater) => Self::new(1, x.ln()),
            Some(Ordering::Less) => Self::new(-1, (-x).ln()),
            _ => Self::ZERO,
        }
    }

    pub fn to_real(self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * self.log_mag.exp(),
        }
    }

    pub fn sign(self) -> i8 {
        self.sign
    }

    pub fn log_mag(self) -> f64 {
        self.log_mag
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }

    /// `self^j` for a nonnegative integer exponent.
    pub fn powi(self, j: u32) -> Self {
        if j == 0 {
            return Self::ONE;
        }
        let sign = if self.sign < 0 && j % 2 == 0 { 1 } else { self.sign };
        Self::new(sign, self.log_mag * f64::from(j))
    }
}

impl Mul for SignedLog {
    type Output = SignedLog;

    fn mul(self, rhs: SignedLog) -> SignedLog {
        SignedLog::new(self.sign * rhs.sign, self.log_mag + rhs.log_mag)
    }
}

impl Neg for SignedLog {
    type Output = SignedLog;

    fn neg(self) -> SignedLog {
        SignedLog::new(-self.sign, self.log_mag)
    }
}

/// `ln(e^a + e^b)`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(sum_i e^{x_i})`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// `ln(1 + e^x)` without overflow for large `x` or loss of precision for
/// very negative `x`.
pub fn log1p_exp(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > 35.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Sums signed terms by accumulating positives and negatives separately and
/// differencing the two totals at the scale of the larger one.
pub fn signed_log_sum<I>(terms: I) -> SignedLog
where
    I: IntoIterator<Item = SignedLog>,
{
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for t in terms {
        match t.sign {
            1 => pos.push(t.log_mag),
            -1 => neg.push(t.log_mag),
            _ => {}
        }
    }
    let lp = log_sum_exp(&pos);
    let ln = log_sum_exp(&neg);
    match lp.partial_cmp(&ln) {
        Some(Ordering::Greater) => SignedLog::new(1, lp + (-(ln - lp).exp_m1()).ln()),
        Some(Ordering::Less) => SignedLog::new(-1, ln + (-(lp - ln).exp_m1()).ln()),
        _ => SignedLog::ZERO,
    }
}

/// `ln Gamma(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(libm::lgamma(x))
}

/// Largest `n` for which `C(n, k)` is computed exactly in 128-bit integers.
const EXACT_BINOMIAL_MAX_N: u64 = 120;

/// `ln C(n, k)`.
pub fn log_binomial(n: u64, k: u64) -> Result<f64> {
    if k > n {
        return Err(Error::domain(format!(
            "log_binomial requires k <= n, got n = {n}, k = {k}"
        )));
    }
    let k = k.min(n - k);
    if k == 0 {
        return Ok(0.0);
    }
    if n <= EXACT_BINOMIAL_MAX_N {
        // C(n, i) * (n - i) / (i + 1) stays integral at every step and below
        // 2^127 for n <= 120.
        let mut c: u128 = 1;
        for i in 0..k {
            c = c * u128::from(n - i) / u128::from(i + 1);
        }
        return Ok((c as f64).ln());
    }
    if k <= 64 {
        let n = n as f64;
        return Ok((0..k)
            .map(|i| {
                let i = i as f64;
                ((n - i) / (i + 1.0)).ln()
            })
            .sum());
    }
    Ok(libm::lgamma(n as f64 + 1.0)
        - libm::lgamma(k as f64 + 1.0)
        - libm::lgamma((n - k) as f64 + 1.0))
}

/// Table of `ln i!` for `i <= max`, for hot loops over binomial coefficients.
#[derive(Debug, Clone)]
pub struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    pub fn new(max: u64) -> Self {
        let table = (0..=max).map(|i| libm::lgamma(i as f64 + 1.0)).collect();
        LogFactorials { table }
    }

    pub fn max(&self) -> u64 {
        self.table.len() as u64 - 1
    }

    pub fn ln_factorial(&self, i: u64) -> f64 {
        self.table[i as usize]
    }

    /// `ln C(n, k)`; panics if `n` exceeds the table.
    pub fn ln_binomial(&self, n: u64, k: u64) -> f64 {
        debug_assert!(k <= n);
        self.table[n as usize] - self.table[k as usize] - self.table[(n - k) as usize]
    }
}

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)`, the error of Stirling's formula.
fn stirling_error(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
    if n <= 15.0 {
        return libm::lgamma(n + 1.0) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

/// `x ln(x / np) + np - x`, accurate when `x` is close to `np`.
fn deviance_term(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / f64::from(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        return s;
    }
    x * (x / np).ln() + np - x
}

/// `ln P[Bin(k, p) = m]` by the saddle-point expansion, which keeps full
/// relative precision where the factorial route loses digits to cancellation.
pub fn log_binomial_pmf(k: u64, m: u64, p: f64) -> f64 {
    debug_assert!(m <= k && (0.0..=1.0).contains(&p));
    let q = 1.0 - p;
    if p == 0.0 {
        return if m == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if m == k { 0.0 } else { f64::NEG_INFINITY };
    }
    let kf = k as f64;
    if m == 0 {
        return kf * (-p).ln_1p();
    }
    if m == k {
        return kf * p.ln();
    }
    let (x, y) = (m as f64, (k - m) as f64);
    stirling_error(kf) - stirling_error(x) - stirling_error(y) - deviance_term(x, kf * p)
        - deviance_term(y, kf * q)
        + 0.5 * (kf / (2.0 * std::f64::consts::PI * x * y)).ln()
}

/// Log-pmf of `Bin(k, p)` together with the signed log of `m - k p` for each
/// outcome `m`; the memo behind every central moment of the same `(k, p)`.
#[derive(Debug, Clone)]
pub struct BinomialTable {
    k: u64,
    p: f64,
    log_pmf: Vec<f64>,
    deviation: Vec<SignedLog>,
}

impl BinomialTable {
    pub fn new(k: u64, p: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("binomial table requires k >= 1"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("probability out of [0, 1]: {p}")));
        }
        let mean = k as f64 * p;
        let mut log_pmf = Vec::with_capacity(k as usize + 1);
        let mut deviation = Vec::with_capacity(k as usize + 1);
        for m in 0..=k {
            log_pmf.push(log_binomial_pmf(k, m, p));
            deviation.push(SignedLog::from_real(m as f64 - mean));
        }
        Ok(BinomialTable {
            k,
            p,
            log_pmf,
            deviation,
        })
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn log_pmf(&self) -> &[f64] {
        &self.log_pmf
    }

    /// `E[(m - k p)^j]` in signed log form.
    pub fn central_moment_log(&self, j: u32) -> SignedLog {
        if j == 0 {
            return SignedLog::ONE;
        }
        signed_log_sum(
            self.log_pmf
                .iter()
                .zip(&self.deviation)
                .map(|(&lp, &dev)| SignedLog::positive(lp) * dev.powi(j)),
        )
    }

    pub fn central_moment(&self, j: u32) -> f64 {
        self.central_moment_log(j).to_real()
    }
}

/// `E[(m - k p)^j]` for `m ~ Bin(k, p)`, by direct summation over `m`.
pub fn binom_central_moment(k: u64, p: f64, j: u32) -> Result<f64> {
    Ok(BinomialTable::new(k, p)?.central_moment(j))
}
