//! Renyi DP of one subsampled shuffle round.
//!
//! A round samples `k` of `n` clients, applies an `eps0`-LDP randomizer with a
//! discrete range to each, and shuffles the `k` messages. [`rdp_upper`] and
//! [`rdp_lower`] bracket the order-`lambda` Renyi DP of that round;
//! [`zeta_shuffle`] and [`zeta_special`] are the ternary `|chi|^alpha` bounds
//! of the shuffle step the upper bound is assembled from.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{
    log1p_exp, log_sum_exp, signed_log_sum, BinomialTable, LogFactorials, SignedLog,
};

/// One subsampled shuffle round: `n` clients, `k` sampled, `eps0`-LDP
/// local randomizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams")]
pub struct SubsampledShuffleParams {
    n: u64,
    k: u64,
    eps0: f64,
}

#[derive(Deserialize)]
struct RawParams {
    n: u64,
    k: u64,
    eps0: f64,
}

impl TryFrom<RawParams> for SubsampledShuffleParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        SubsampledShuffleParams::new(raw.n, raw.k, raw.eps0)
    }
}

impl SubsampledShuffleParams {
    pub fn new(n: u64, k: u64, eps0: f64) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::domain(format!(
                "need 1 <= k <= n, got n = {n}, k = {k}"
            )));
        }
        if !eps0.is_finite() || eps0 < 0.0 {
            return Err(Error::domain(format!(
                "eps0 must be finite and >= 0, got {eps0}"
            )));
        }
        Ok(SubsampledShuffleParams { n, k, eps0 })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    /// Sampling rate `k / n`.
    pub fn gamma(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CurveKind {
    UpperBound,
    LowerBound,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpEntry {
    pub lambda: u32,
    pub eps: f64,
}

/// `eps(lambda)` tabulated over strictly increasing integer orders `>= 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    params: SubsampledShuffleParams,
    kind: CurveKind,
    entries: Vec<RdpEntry>,
}

impl RdpCurve {
    pub fn new(
        params: SubsampledShuffleParams,
        kind: CurveKind,
        entries: Vec<RdpEntry>,
    ) -> Result<Self> {
        for w in entries.windows(2) {
            if w[1].lambda <= w[0].lambda {
                return Err(Error::domain("RDP orders must be strictly increasing"));
            }
        }
        for e in &entries {
            if e.lambda < 2 {
                return Err(Error::domain(format!("RDP order {} < 2", e.lambda)));
            }
            if !e.eps.is_finite() || e.eps < 0.0 {
                return Err(Error::domain(format!(
                    "RDP value at order {} must be finite and >= 0, got {}",
                    e.lambda, e.eps
                )));
            }
        }
        Ok(RdpCurve {
            params,
            kind,
            entries,
        })
    }

    /// Tabulates the upper or lower bound over a range of orders.
    pub fn tabulate(
        params: SubsampledShuffleParams,
        kind: CurveKind,
        lambdas: RangeInclusive<u32>,
    ) -> Result<Self> {
        let mut eval = BoundEvaluator::new(params, kind)?;
        let entries = lambdas
            .map(|lambda| {
                Ok(RdpEntry {
                    lambda,
                    eps: eval.eval(lambda)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        RdpCurve::new(params, kind, entries)
    }

    pub fn params(&self) -> &SubsampledShuffleParams {
        &self.params
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    pub fn entries(&self) -> &[RdpEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, lambda: u32) -> Option<f64> {
        self.entries
            .binary_search_by_key(&lambda, |e| e.lambda)
            .ok()
            .map(|i| self.entries[i].eps)
    }
}

/// A bound on `zeta(alpha)^alpha` at one order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaBound {
    pub alpha: u32,
    pub value: f64,
}

/// `floor((k - 1) / (2 e^eps0)) + 1`: the effective cohort the shuffle bound
/// is evaluated at.
pub fn k_bar(k: u64, eps0: f64) -> u64 {
    ((k - 1) as f64 / (2.0 * eps0.exp())).floor() as u64 + 1
}

fn check_order(name: &str, order: u32) -> Result<()> {
    if order < 2 {
        return Err(Error::domain(format!("{name} must be an integer >= 2, got {order}")));
    }
    Ok(())
}

fn check_eps0(eps0: f64) -> Result<()> {
    if !eps0.is_finite() || eps0 < 0.0 {
        return Err(Error::domain(format!("eps0 must be finite and >= 0, got {eps0}")));
    }
    Ok(())
}

/// `ln` of the special-case ternary bound for `m` identical clients plus one
/// differing client.
fn log_zeta_special(alpha: u32, m: f64, eps0: f64) -> f64 {
    if alpha == 2 {
        4f64.ln() + 2.0 * eps0.exp_m1().ln() - m.ln() - eps0
    } else {
        let a = f64::from(alpha);
        a.ln()
            + libm::lgamma(a / 2.0)
            + a / 2.0 * (2f64.ln() + 2.0 * (2.0 * eps0).exp_m1().ln() - m.ln() - 2.0 * eps0)
    }
}

/// Ternary `|chi|^alpha` bound for the special triple where `m - 1` clients
/// share one input and the last client holds `d`, `d'` or `d''`.
pub fn zeta_special(alpha: u32, m: u64, eps0: f64) -> Result<f64> {
    check_order("alpha", alpha)?;
    check_eps0(eps0)?;
    if m == 0 {
        return Err(Error::domain("special-case dataset size m must be >= 1"));
    }
    Ok(log_zeta_special(alpha, m as f64, eps0).exp())
}

/// Bound on `zeta(alpha)^alpha` for the shuffle of `k >= 2` clients.
pub fn zeta_shuffle(alpha: u32, k: u64, eps0: f64) -> Result<ZetaBound> {
    check_order("alpha", alpha)?;
    check_eps0(eps0)?;
    if k < 2 {
        return Err(Error::domain(format!("shuffle bound requires k >= 2, got {k}")));
    }
    let kb = k_bar(k, eps0) as f64;
    let head = log_zeta_special(alpha, kb, eps0);
    let tail = f64::from(alpha) * (2.0 * eps0.sinh()).ln() - tail_exponent(k, eps0);
    Ok(ZetaBound {
        alpha,
        value: log_sum_exp(&[head, tail]).exp(),
    })
}

/// `(k - 1) / (8 e^eps0)`, the Chernoff exponent of the tail term.
fn tail_exponent(k: u64, eps0: f64) -> f64 {
    (k - 1) as f64 / (8.0 * eps0.exp())
}

/// Upper bound on the order-`lambda` RDP of one subsampled shuffle round.
pub fn rdp_upper(lambda: u32, params: &SubsampledShuffleParams) -> Result<f64> {
    BoundEvaluator::new(*params, CurveKind::UpperBound)?.eval(lambda)
}

/// Lower bound on the order-`lambda` RDP of one subsampled shuffle round,
/// attained by binary randomized response.
pub fn rdp_lower(lambda: u32, params: &SubsampledShuffleParams) -> Result<f64> {
    BoundEvaluator::new(*params, CurveKind::LowerBound)?.eval(lambda)
}

/// Evaluates one of the two bounds at many orders, reusing the factorial
/// table and (for the lower bound) the binomial central moments.
#[derive(Debug, Clone)]
pub struct BoundEvaluator {
    params: SubsampledShuffleParams,
    kind: CurveKind,
    facts: LogFactorials,
    moments: Option<MomentCache>,
}

#[derive(Debug, Clone)]
struct MomentCache {
    table: BinomialTable,
    values: Vec<SignedLog>,
}

impl MomentCache {
    fn get(&mut self, j: u32) -> SignedLog {
        while self.values.len() <= j as usize {
            let next = self.values.len() as u32;
            self.values.push(self.table.central_moment_log(next));
        }
        self.values[j as usize]
    }
}

impl BoundEvaluator {
    pub fn new(params: SubsampledShuffleParams, kind: CurveKind) -> Result<Self> {
        let moments = match kind {
            CurveKind::UpperBound => {
                if params.k() < 2 {
                    return Err(Error::domain(format!(
                        "upper bound requires k >= 2, got {}",
                        params.k()
                    )));
                }
                None
            }
            CurveKind::LowerBound => {
                let p = 1.0 / (params.eps0().exp() + 1.0);
                Some(MomentCache {
                    table: BinomialTable::new(params.k(), p)?,
                    values: Vec::new(),
                })
            }
            CurveKind::Exact => {
                return Err(Error::domain(
                    "exact curves come from the oracle module, not a bound evaluator",
                ))
            }
        };
        Ok(BoundEvaluator {
            params,
            kind,
            facts: LogFactorials::new(64),
            moments,
        })
    }

    pub fn params(&self) -> &SubsampledShuffleParams {
        &self.params
    }

    pub fn kind(&self) -> CurveKind {
        self.kind
    }

    fn ensure_factorials(&mut self, lambda: u32) {
        if self.facts.max() < u64::from(lambda) {
            self.facts = LogFactorials::new(u64::from(lambda).next_power_of_two());
        }
    }

    pub fn eval(&mut self, lambda: u32) -> Result<f64> {
        check_order("lambda", lambda)?;
        self.ensure_factorials(lambda);
        let inner = match self.kind {
            CurveKind::UpperBound => SignedLog::positive(self.upper_log_sum(lambda)),
            _ => self.lower_sum(lambda),
        };
        let ln_one_plus = if inner.sign() >= 0 {
            log1p_exp(inner.log_mag())
        } else {
            (-inner.log_mag().exp()).ln_1p()
        };
        Ok((ln_one_plus / f64::from(lambda - 1)).max(0.0))
    }

    /// `ln` of everything inside `ln(1 + .)` of the upper bound.
    fn upper_log_sum(&self, lambda: u32) -> f64 {
        let p = &self.params;
        let eps0 = p.eps0();
        if eps0 == 0.0 {
            return f64::NEG_INFINITY;
        }
        let lam = u64::from(lambda);
        let ln_gamma_rate = p.gamma().ln();
        let ln_kb = (k_bar(p.k(), eps0) as f64).ln();
        let mut terms = Vec::with_capacity(2 * lambda as usize);

        terms.push(
            4f64.ln() + self.facts.ln_binomial(lam, 2) + 2.0 * ln_gamma_rate
                + 2.0 * eps0.exp_m1().ln()
                - ln_kb
                - eps0,
        );
        let ln_base = 2f64.ln() + 2.0 * (2.0 * eps0).exp_m1().ln() - ln_kb - 2.0 * eps0;
        for j in 3..=lam {
            let jf = j as f64;
            terms.push(
                self.facts.ln_binomial(lam, j)
                    + jf * ln_gamma_rate
                    + jf.ln()
                    + libm::lgamma(jf / 2.0)
                    + jf / 2.0 * ln_base,
            );
        }
        // (1 + a)^lambda - 1 - lambda a, expanded so no cancellation occurs
        let ln_a = ln_gamma_rate + (2.0 * eps0.sinh()).ln();
        let chernoff = tail_exponent(p.k(), eps0);
        for j in 2..=lam {
            terms.push(self.facts.ln_binomial(lam, j) + j as f64 * ln_a - chernoff);
        }
        log_sum_exp(&terms)
    }

    /// Everything inside `ln(1 + .)` of the lower bound, signed.
    fn lower_sum(&mut self, lambda: u32) -> SignedLog {
        let eps0 = self.params.eps0();
        if eps0 == 0.0 {
            return SignedLog::ZERO;
        }
        let lam = u64::from(lambda);
        let kf = self.params.k() as f64;
        let ln_gamma_rate = self.params.gamma().ln();
        let ln_ratio = (2.0 * eps0).exp_m1().ln() - kf.ln() - eps0;
        let mut terms = Vec::with_capacity(lambda as usize);
        terms.push(SignedLog::positive(
            self.facts.ln_binomial(lam, 2) + 2.0 * ln_gamma_rate + 2.0 * eps0.exp_m1().ln()
                - kf.ln()
                - eps0,
        ));
        let moments = self
            .moments
            .as_mut()
            .expect("lower-bound evaluator carries a moment cache");
        for j in 3..=lambda {
            let jf = f64::from(j);
            let coeff = SignedLog::positive(
                self.facts.ln_binomial(lam, u64::from(j)) + jf * (ln_gamma_rate + ln_ratio),
            );
            terms.push(coeff * moments.get(j));
        }
        signed_log_sum(terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    fn params(n: u64, k: u64, eps0: f64) -> SubsampledShuffleParams {
        SubsampledShuffleParams::new(n, k, eps0).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(SubsampledShuffleParams::new(10, 0, 1.0).is_err());
        assert!(SubsampledShuffleParams::new(10, 11, 1.0).is_err());
        assert!(SubsampledShuffleParams::new(10, 5, -0.1).is_err());
        assert!(SubsampledShuffleParams::new(10, 5, f64::INFINITY).is_err());
        let p = params(10_000, 100, 1.0);
        assert_eq!(p.gamma(), 0.01);
    }

    #[test]
    fn k_bar_uses_integer_floor() {
        assert_eq!(k_bar(1000, 2.0), 68);
        assert_eq!(k_bar(100, 1.0), 19);
        assert_eq!(k_bar(2, 3.0), 1);
    }

    #[test]
    fn zeta_special_values() {
        assert_eq!(zeta_special(2, 7, 0.0).unwrap(), 0.0);
        let v = zeta_special(2, 100, 1.0).unwrap();
        let closed = 4.0 * (E - 1.0).powi(2) / (100.0 * E);
        assert!(rel_err(v, closed) < 1e-13);
        assert!(rel_err(v, 0.043_446_450_785_219_5) < 1e-13);
        // alpha = 4: 4 Gamma(2) (2 (e^1 - 1)^2 / (50 e))^2 at eps0 = 0.5
        let e0: f64 = 0.5;
        let base = 2.0 * ((2.0 * e0).exp() - 1.0).powi(2) / (50.0 * (2.0 * e0).exp());
        let v4 = zeta_special(4, 50, e0).unwrap();
        assert!(rel_err(v4, 4.0 * base * base) < 1e-13);
        assert!(zeta_special(1, 10, 1.0).is_err());
        assert!(zeta_special(2, 0, 1.0).is_err());
    }

    #[test]
    fn zeta_shuffle_values() {
        for alpha in 2..8 {
            for k in [2, 10, 1000] {
                assert_eq!(zeta_shuffle(alpha, k, 0.0).unwrap().value, 0.0);
            }
        }
        // reference values evaluated at 50 digits
        let v = zeta_shuffle(2, 1000, 2.0).unwrap();
        assert_eq!(v.alpha, 2);
        assert!(rel_err(v.value, 0.324_966_606_348_230_53) < 1e-12, "{}", v.value);
        let v4 = zeta_shuffle(4, 1000, 2.0).unwrap();
        assert!(rel_err(v4.value, 9.579_685_353_218_130_6) < 1e-12, "{}", v4.value);
        assert!(zeta_shuffle(2, 1, 1.0).is_err());
    }

    #[test]
    fn zeta_shuffle_dominates_special_head() {
        for alpha in 2..10 {
            for &k in &[2u64, 5, 77, 1000, 20_000] {
                for &e0 in &[0.1, 1.0, 2.5] {
                    let full = zeta_shuffle(alpha, k, e0).unwrap().value;
                    let head = zeta_special(alpha, k_bar(k, e0), e0).unwrap();
                    assert!(full >= head);
                }
            }
        }
    }

    #[test]
    fn zeta_shuffle_nonincreasing_in_k() {
        for alpha in [2u32, 3, 4, 8] {
            for &e0 in &[0.5, 1.0, 2.0, 3.0] {
                let mut prev = f64::INFINITY;
                for k in 2..=10_000u64 {
                    let v = zeta_shuffle(alpha, k, e0).unwrap().value;
                    assert!(v <= prev * (1.0 + 1e-14), "alpha={alpha} eps0={e0} k={k}");
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn upper_bound_reference_values() {
        let p = params(10_000, 100, 1.0);
        // lambda = 2: ln(1 + 4 gamma^2 (e-1)^2/(19 e) + (gamma (e^2-1)/e)^2 e^{-99/(8e)})
        let g: f64 = 0.01;
        let closed = (4.0 * g * g * (E - 1.0).powi(2) / (19.0 * E)
            + (g * (E * E - 1.0) / E).powi(2) * (-99.0 / (8.0 * E)).exp())
        .ln_1p();
        let v = rdp_upper(2, &p).unwrap();
        assert!(rel_err(v, closed) < 1e-12);
        assert!(rel_err(v, 2.868_925_559_479_083e-5) < 1e-12);
        // higher orders against a 50-digit evaluation of the full formula
        let cases = [
            (8, params(500, 50, 1.0), 0.067_151_165_717_657_636),
            (16, params(10_000, 100, 2.0), 0.018_189_246_526_295_502),
            (32, params(10_000, 1000, 0.5), 0.000_812_914_083_429_634_35),
        ];
        for (lambda, p, want) in cases {
            let got = rdp_upper(lambda, &p).unwrap();
            assert!(rel_err(got, want) < 1e-10, "lambda={lambda}: {got} vs {want}");
        }
    }

    #[test]
    fn lower_bound_reference_values() {
        let p = params(500, 50, 1.0);
        let cases = [
            (4, 0.000_434_856_834_153_188_79),
            (8, 0.000_871_456_536_610_681_09),
        ];
        for (lambda, want) in cases {
            let got = rdp_lower(lambda, &p).unwrap();
            assert!(rel_err(got, want) < 1e-10, "lambda={lambda}: {got} vs {want}");
        }
    }

    #[test]
    fn lower_bound_at_order_two_is_closed_form() {
        for &(n, k, e0) in &[(100u64, 10u64, 0.5), (5000, 50, 2.0), (7, 1, 1.0), (1, 1, 3.0)] {
            let p = params(n, k, e0);
            let g = p.gamma();
            let want = (g * g * e0.exp_m1().powi(2) / (k as f64 * e0.exp())).ln_1p();
            let got = rdp_lower(2, &p).unwrap();
            assert!(rel_err(got, want) < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_local_leakage_gives_zero() {
        for lambda in [2u32, 3, 17, 256] {
            for &(n, k) in &[(10u64, 2u64), (1000, 100), (10, 10)] {
                let p = params(n, k, 0.0);
                assert_eq!(rdp_upper(lambda, &p).unwrap(), 0.0);
                assert_eq!(rdp_lower(lambda, &p).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn k_equal_one_asymmetry() {
        let p = params(10, 1, 1.0);
        assert!(rdp_upper(2, &p).is_err());
        assert!(rdp_lower(2, &p).unwrap() > 0.0);
    }

    #[test]
    fn order_below_two_rejected() {
        let p = params(100, 10, 1.0);
        assert!(rdp_upper(1, &p).is_err());
        assert!(rdp_lower(0, &p).is_err());
    }

    #[test]
    fn sandwich_on_small_grid() {
        for &e0 in &[0.5, 1.0, 2.0, 3.0] {
            for &k in &[10u64, 100, 1000] {
                let p = params(10 * k, k, e0);
                let up = RdpCurve::tabulate(p, CurveKind::UpperBound, 2..=32).unwrap();
                let lo = RdpCurve::tabulate(p, CurveKind::LowerBound, 2..=32).unwrap();
                for (u, l) in up.entries().iter().zip(lo.entries()) {
                    assert!(l.eps <= u.eps, "eps0={e0} k={k} lambda={}", u.lambda);
                }
            }
        }
    }

    #[test]
    fn bounds_nondecreasing_in_eps0() {
        for &k in &[10u64, 100, 1000] {
            let p = |e0| params(10 * k, k, e0);
            for lambda in [2u32, 5, 16, 64] {
                let mut prev = (0.0, 0.0);
                for i in 0..=40 {
                    let e0 = 0.1 * f64::from(i);
                    let cur = (rdp_upper(lambda, &p(e0)).unwrap(), rdp_lower(lambda, &p(e0)).unwrap());
                    assert!(cur.0 >= prev.0, "upper k={k} lambda={lambda} eps0={e0}");
                    assert!(cur.1 >= prev.1 * (1.0 - 1e-12), "lower k={k} lambda={lambda} eps0={e0}");
                    prev = cur;
                }
            }
        }
    }

    #[test]
    fn large_orders_stay_finite() {
        let p = params(1_000_000, 1000, 3.0);
        for lambda in [512u32, 2048, 4096] {
            let u = rdp_upper(lambda, &p).unwrap();
            let l = rdp_lower(lambda, &p).unwrap();
            assert!(u.is_finite() && l.is_finite() && l <= u, "{lambda}: {l} {u}");
        }
        // gamma = 1, large eps0: Upsilon dominates and overflows f64 outside log space
        let p = params(50, 50, 5.0);
        let u = rdp_upper(4096, &p).unwrap();
        assert!(u.is_finite() && u > 0.0);
    }

    #[test]
    fn curve_validation() {
        let p = params(100, 10, 1.0);
        let bad = vec![RdpEntry { lambda: 3, eps: 0.1 }, RdpEntry { lambda: 3, eps: 0.2 }];
        assert!(RdpCurve::new(p, CurveKind::Exact, bad).is_err());
        let bad = vec![RdpEntry { lambda: 1, eps: 0.1 }];
        assert!(RdpCurve::new(p, CurveKind::Exact, bad).is_err());
        let bad = vec![RdpEntry { lambda: 2, eps: -0.1 }];
        assert!(RdpCurve::new(p, CurveKind::Exact, bad).is_err());
        let c = RdpCurve::tabulate(p, CurveKind::UpperBound, 2..=5).unwrap();
        assert_eq!(c.get(4), Some(rdp_upper(4, &p).unwrap()));
        assert_eq!(c.get(9), None);
    }
}
