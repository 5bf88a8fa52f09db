//! Exact computations by enumeration, used as ground truth for the bounds.
//!
//! Everything here is brute force and capped to desk-scale sizes; the caps
//! live in [`MAX_SHUFFLE_K`], [`MAX_SHUFFLE_B`] and [`MAX_RR2_K`].

mod randomizer;
pub mod suites;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bounds::SubsampledShuffleParams;
use crate::error::{Error, Result};
use crate::numeric::{log_binomial, log_sum_exp};

pub use randomizer::{random_randomizer, Randomizer};

/// Largest number of clients [`exact_shuffle_dist`] will enumerate.
pub const MAX_SHUFFLE_K: usize = 12;
/// Largest output alphabet [`exact_shuffle_dist`] will enumerate.
pub const MAX_SHUFFLE_B: usize = 4;
/// Largest cohort for [`exact_rdp_2rr_subshuffle`].
pub const MAX_RR2_K: u64 = 10_000;

const NORM_TOL: f64 = 1e-12;

/// A probability vector over `0..len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDist {
    probs: Vec<f64>,
}

impl FiniteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("distribution needs at least one atom"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::domain("probabilities must be finite and >= 0"));
        }
        let total = neumaier_sum(probs.iter().copied());
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(FiniteDist { probs })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let total = neumaier_sum(w.iter().copied());
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::domain("weights must have a positive finite sum"));
        }
        Self::new(w.iter().map(|x| x / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Distribution of the shuffler output: a histogram over `b` symbols with
/// counts summing to `k`.
///
/// Only histograms with positive probability are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramDist {
    k: usize,
    b: usize,
    probs: BTreeMap<Vec<u32>, f64>,
}

impl HistogramDist {
    pub fn new(k: usize, b: usize, probs: BTreeMap<Vec<u32>, f64>) -> Result<Self> {
        for (h, p) in &probs {
            if h.len() != b || h.iter().map(|&c| c as usize).sum::<usize>() != k {
                return Err(Error::domain(format!("histogram {h:?} is not in A_{b}^{k}")));
            }
            if !(p.is_finite() && *p >= 0.0) {
                return Err(Error::domain("probabilities must be finite and >= 0"));
            }
        }
        let total = neumaier_sum(probs.values().copied());
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::domain(format!("probabilities sum to {total}, not 1")));
        }
        Ok(HistogramDist { k, b, probs })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn probs(&self) -> &BTreeMap<Vec<u32>, f64> {
        &self.probs
    }

    pub fn prob(&self, h: &[u32]) -> f64 {
        self.probs.get(h).copied().unwrap_or(0.0)
    }
}

pub(crate) fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn rr2_log_pmfs(k: u64, eps0: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if k == 0 {
        return Err(Error::domain("k must be >= 1"));
    }
    if !eps0.is_finite() || eps0 < 0.0 {
        return Err(Error::domain(format!("eps0 must be finite and >= 0, got {eps0}")));
    }
    // p = 1 / (e^eps0 + 1), kept in log form so that large eps0 stays exact
    let ln_p = -crate::numeric::log1p_exp(eps0);
    let ln_q = -crate::numeric::log1p_exp(-eps0);
    let bin = |n: u64, m: u64, a: u64, b: u64| -> Result<f64> {
        Ok(log_binomial(n, m)? + a as f64 * ln_p + b as f64 * ln_q)
    };
    let mut mu0 = Vec::with_capacity(k as usize + 1);
    let mut mu1 = Vec::with_capacity(k as usize + 1);
    for m in 0..=k {
        mu0.push(bin(k, m, m, k - m)?);
        let mut parts = Vec::with_capacity(2);
        if m >= 1 {
            // the differing client reports 1 (probability 1 - p)
            parts.push(ln_q + bin(k - 1, m - 1, m - 1, k - m)?);
        }
        if m < k {
            parts.push(ln_p + bin(k - 1, m, m, k - m - 1)?);
        }
        mu1.push(log_sum_exp(&parts));
    }
    Ok((mu0, mu1))
}

/// Count distributions of the 2RR shuffle: `mu0` when every client holds
/// bit 0, `mu1` when one client holds bit 1.
pub fn rr2_dists(k: u64, eps0: f64) -> Result<(FiniteDist, FiniteDist)> {
    let (a, b) = rr2_log_pmfs(k, eps0)?;
    let exp = |v: Vec<f64>| FiniteDist::new(v.into_iter().map(f64::exp).collect());
    Ok((exp(a)?, exp(b)?))
}

/// Exact order-`lambda` Renyi divergence between the subsampled 2RR shuffle
/// on a dataset with one differing bit and the all-zero dataset.
///
/// The neighboring output is the mixture `gamma mu1 + (1 - gamma) mu0`: the
/// differing client is in the cohort with probability `gamma`.
pub fn exact_rdp_2rr_subshuffle(lambda: u32, params: &SubsampledShuffleParams) -> Result<f64> {
    if lambda < 2 {
        return Err(Error::domain(format!("lambda must be an integer >= 2, got {lambda}")));
    }
    let k = params.k();
    if k > MAX_RR2_K {
        return Err(Error::CapExceeded(format!(
            "2RR enumeration is capped at k <= {MAX_RR2_K}, got {k}"
        )));
    }
    let (mu0, mu1) = rr2_log_pmfs(k, params.eps0())?;
    let gamma = params.gamma();
    let l = f64::from(lambda);
    // sum_m mu0 (1 + gamma x_m)^lambda - 1 with x_m = mu1/mu0 - 1. Both
    // pmfs sum to one, so sum_m mu0 x_m = 0 and the linear term is dropped
    // before summing; keeping it would leave rounding noise at the scale of
    // lambda gamma E|x| on a result of order (lambda gamma x)^2.
    let s = neumaier_sum(mu0.iter().zip(&mu1).map(|(&a, &b)| {
        let y = gamma * (b - a).exp_m1();
        a.exp() * ((l * y.ln_1p()).exp_m1() - l * y)
    }));
    Ok((s.ln_1p() / (l - 1.0)).max(0.0))
}

/// Exact output distribution of the shuffler when client `i` samples its
/// message from `client_dists[i]`.
pub fn exact_shuffle_dist(client_dists: &[FiniteDist], b: usize) -> Result<HistogramDist> {
    let k = client_dists.len();
    if k == 0 {
        return Err(Error::domain("need at least one client"));
    }
    if b == 0 || client_dists.iter().any(|d| d.len() != b) {
        return Err(Error::domain(format!("every client distribution must have {b} atoms")));
    }
    if k > MAX_SHUFFLE_K || b > MAX_SHUFFLE_B {
        return Err(Error::CapExceeded(format!(
            "histogram enumeration is capped at k <= {MAX_SHUFFLE_K}, B <= {MAX_SHUFFLE_B}; got k = {k}, B = {b}"
        )));
    }
    let mut cur: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    cur.insert(vec![0; b], 1.0);
    for dist in client_dists {
        let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (h, &ph) in &cur {
            for (j, &pj) in dist.probs().iter().enumerate() {
                if pj == 0.0 {
                    continue;
                }
                let mut g = h.clone();
                g[j] += 1;
                *next.entry(g).or_insert(0.0) += ph * pj;
            }
        }
        cur = next;
    }
    let total = neumaier_sum(cur.values().copied());
    for v in cur.values_mut() {
        *v /= total;
    }
    HistogramDist::new(k, b, cur)
}

fn same_space(p: &HistogramDist, q: &HistogramDist) -> Result<()> {
    if p.k != q.k || p.b != q.b {
        return Err(Error::domain(format!(
            "histogram spaces differ: (k={}, B={}) vs (k={}, B={})",
            p.k, p.b, q.k, q.b
        )));
    }
    Ok(())
}

/// Renyi divergence `D_lambda(P || Q)` for real `lambda > 1`; `+inf` when
/// `P` is not absolutely continuous with respect to `Q`.
pub fn exact_renyi(p: &HistogramDist, q: &HistogramDist, lambda: f64) -> Result<f64> {
    same_space(p, q)?;
    renyi_from_pairs(
        p.probs.iter().map(|(h, &ph)| (ph, q.prob(h))),
        lambda,
    )
}

/// Renyi divergence between two vectors over the same atoms.
pub fn renyi_divergence(p: &FiniteDist, q: &FiniteDist, lambda: f64) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::domain("distributions have different supports"));
    }
    renyi_from_pairs(p.probs().iter().copied().zip(q.probs().iter().copied()), lambda)
}

fn renyi_from_pairs<I: Iterator<Item = (f64, f64)>>(pairs: I, lambda: f64) -> Result<f64> {
    if !(lambda > 1.0) || !lambda.is_finite() {
        return Err(Error::domain(format!("Renyi order must be finite and > 1, got {lambda}")));
    }
    let mut logs = Vec::new();
    for (pv, qv) in pairs {
        if pv == 0.0 {
            continue;
        }
        if qv == 0.0 {
            return Ok(f64::INFINITY);
        }
        let (lp, lq) = (pv.ln(), qv.ln());
        logs.push(lq + lambda * (lp - lq));
    }
    Ok((log_sum_exp(&logs) / (lambda - 1.0)).max(0.0))
}

/// `sum_h R(h) |(P(h) - Q(h)) / R(h)|^alpha`; `+inf` when `R` vanishes
/// where `P` and `Q` differ.
pub fn exact_ternary(
    p: &HistogramDist,
    q: &HistogramDist,
    r: &HistogramDist,
    alpha: f64,
) -> Result<f64> {
    same_space(p, q)?;
    same_space(p, r)?;
    let keys = p.probs.keys().chain(q.probs.keys()).collect::<std::collections::BTreeSet<_>>();
    ternary_from_triples(keys.into_iter().map(|h| (p.prob(h), q.prob(h), r.prob(h))), alpha)
}

/// [`exact_ternary`] for plain probability vectors over the same atoms.
pub fn ternary_divergence(p: &[f64], q: &[f64], r: &[f64], alpha: f64) -> Result<f64> {
    if p.len() != q.len() || p.len() != r.len() {
        return Err(Error::domain("distributions have different supports"));
    }
    ternary_from_triples(
        p.iter().zip(q).zip(r).map(|((&a, &b), &c)| (a, b, c)),
        alpha,
    )
}

fn ternary_from_triples<I: Iterator<Item = (f64, f64, f64)>>(triples: I, alpha: f64) -> Result<f64> {
    if !(alpha >= 1.0) || !alpha.is_finite() {
        return Err(Error::domain(format!("alpha must be finite and >= 1, got {alpha}")));
    }
    let mut terms = Vec::new();
    for (pv, qv, rv) in triples {
        let diff = (pv - qv).abs();
        if diff == 0.0 {
            continue;
        }
        if rv == 0.0 {
            return Ok(f64::INFINITY);
        }
        terms.push(rv * (diff / rv).powf(alpha));
    }
    Ok(neumaier_sum(terms))
}

/// Convenience: the shuffle distribution of a dataset under a randomizer.
pub fn shuffle_of(randomizer: &Randomizer, dataset: &[usize]) -> Result<HistogramDist> {
    let dists = dataset
        .iter()
        .map(|&x| {
            randomizer
                .dists()
                .get(x)
                .cloned()
                .ok_or_else(|| Error::domain(format!("input {x} outside the randomizer domain")))
        })
        .collect::<Result<Vec<_>>>()?;
    exact_shuffle_dist(&dists, randomizer.b())
}
