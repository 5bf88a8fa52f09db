//! Invariant suites over the exact oracles.
//!
//! Each suite returns a [`SuiteReport`] whose `worst_slack` is the smallest
//! margin `allowed - observed` seen across all checks; a suite passes iff
//! that margin is nonnegative.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    exact_rdp_2rr_subshuffle, exact_renyi, exact_ternary, random_randomizer, shuffle_of,
    ternary_divergence, Randomizer,
};
use crate::bounds::{zeta_shuffle, zeta_special, BoundEvaluator, CurveKind, SubsampledShuffleParams};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Relative slack for the `E_m` monotonicity suite.
pub const MONOTONE_SLACK: f64 = 1e-12;
/// Relative slack for the joint convexity suite.
pub const CONVEXITY_SLACK: f64 = 1e-10;
/// Relative tolerance for lower bound vs exact 2RR agreement.
pub const EXACT_2RR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Sandwich,
    Exact2rr,
    Ternary,
    Convexity,
    Monotone,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Sandwich,
        Suite::Exact2rr,
        Suite::Ternary,
        Suite::Convexity,
        Suite::Monotone,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Sandwich => "sandwich",
            Suite::Exact2rr => "exact2rr",
            Suite::Ternary => "ternary",
            Suite::Convexity => "convexity",
            Suite::Monotone => "monotone",
        }
    }

    pub fn run(self, seed: u64) -> Result<SuiteReport> {
        match self {
            Suite::Sandwich => sandwich(&SandwichGrid::default()),
            Suite::Exact2rr => exact2rr(&Exact2rrGrid::default()),
            Suite::Ternary => ternary(&TernarySpec::with_seed(seed)),
            Suite::Convexity => convexity(seed, 500),
            Suite::Monotone => monotone(seed, 200),
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown oracle suite `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: u64,
    pub worst_slack: f64,
    /// Where the worst margin was seen.
    pub worst_case: String,
    pub passed: bool,
}

struct Tracker {
    suite: &'static str,
    checks: u64,
    worst: f64,
    case: String,
}

impl Tracker {
    fn new(suite: &'static str) -> Self {
        Tracker {
            suite,
            checks: 0,
            worst: f64::INFINITY,
            case: String::new(),
        }
    }

    fn record(&mut self, slack: f64, case: impl FnOnce() -> String) {
        self.checks += 1;
        // NaN counts as a violation
        let slack = if slack.is_nan() { f64::NEG_INFINITY } else { slack };
        if slack < self.worst {
            self.worst = slack;
            self.case = case();
        }
    }

    fn finish(self) -> SuiteReport {
        SuiteReport {
            suite: self.suite.to_string(),
            checks: self.checks,
            worst_slack: self.worst,
            worst_case: self.case,
            passed: self.checks > 0 && self.worst >= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichGrid {
    pub eps0: Vec<f64>,
    pub k: Vec<u64>,
    /// `n = n_factor * k`.
    pub n_factor: u64,
    pub lambda_max: u32,
}

impl Default for SandwichGrid {
    fn default() -> Self {
        SandwichGrid {
            eps0: vec![0.5, 1.0, 2.0, 3.0],
            k: vec![10, 100, 1000],
            n_factor: 10,
            lambda_max: 32,
        }
    }
}

/// `rdp_lower <= rdp_upper` at every grid point.
pub fn sandwich(grid: &SandwichGrid) -> Result<SuiteReport> {
    let mut t = Tracker::new("sandwich");
    for &eps0 in &grid.eps0 {
        for &k in &grid.k {
            let params = SubsampledShuffleParams::new(grid.n_factor * k, k, eps0)?;
            let mut up = BoundEvaluator::new(params, CurveKind::UpperBound)?;
            let mut lo = BoundEvaluator::new(params, CurveKind::LowerBound)?;
            for lambda in 2..=grid.lambda_max {
                let (u, l) = (up.eval(lambda)?, lo.eval(lambda)?);
                t.record(u - l, || format!("eps0={eps0} k={k} lambda={lambda}: upper={u:e} lower={l:e}"));
            }
        }
    }
    Ok(t.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exact2rrGrid {
    pub eps0: Vec<f64>,
    pub k_max: u64,
    pub n_factors: Vec<u64>,
    pub lambda_max: u32,
}

impl Default for Exact2rrGrid {
    fn default() -> Self {
        Exact2rrGrid {
            eps0: vec![0.5, 1.0, 2.0],
            k_max: 200,
            n_factors: vec![1, 10],
            lambda_max: 16,
        }
    }
}

/// Relative agreement of the lower bound with the exact 2RR divergence.
/// The slack is `EXACT_2RR_TOL - relative gap`.
pub fn exact2rr(grid: &Exact2rrGrid) -> Result<SuiteReport> {
    let mut t = Tracker::new("exact2rr");
    for &eps0 in &grid.eps0 {
        for k in 1..=grid.k_max {
            for &f in &grid.n_factors {
                let params = SubsampledShuffleParams::new(f * k, k, eps0)?;
                let mut lo = BoundEvaluator::new(params, CurveKind::LowerBound)?;
                for lambda in 2..=grid.lambda_max {
                    let a = lo.eval(lambda)?;
                    let b = exact_rdp_2rr_subshuffle(lambda, &params)?;
                    let gap = if a == b { 0.0 } else { (a - b).abs() / b.abs().max(a.abs()) };
                    t.record(EXACT_2RR_TOL - gap, || {
                        format!("eps0={eps0} k={k} n={} lambda={lambda}: bound={a:e} exact={b:e}", f * k)
                    });
                }
            }
        }
    }
    Ok(t.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TernarySpec {
    pub seed: u64,
    pub randomizers: usize,
    pub eps0: Vec<f64>,
    pub b_values: Vec<usize>,
    pub k_max: usize,
    pub alphas: Vec<u32>,
}

impl TernarySpec {
    pub fn with_seed(seed: u64) -> Self {
        TernarySpec {
            seed,
            randomizers: 200,
            eps0: vec![0.5, 1.0, 2.0],
            b_values: vec![2, 3],
            k_max: 10,
            alphas: vec![2, 3, 4],
        }
    }
}

fn draw_randomizer<R: Rng>(rng: &mut R, spec: &TernarySpec, i: usize) -> Result<Randomizer> {
    let eps0 = spec.eps0[i % spec.eps0.len()];
    let b = spec.b_values[(i / spec.eps0.len()) % spec.b_values.len()];
    random_randomizer(rng, 3, b, eps0)
}

/// Special triple with `m` clients: `m - 1` hold `x`, the last holds `x`,
/// `y` or `z`.
fn special(m: usize, x: usize, last: usize) -> Vec<usize> {
    let mut d = vec![x; m];
    d[m - 1] = last;
    d
}

/// Exact ternary divergences against both closed-form bounds.
///
/// Arbitrary triples: `k - 1` shared entries drawn at random from the three
/// inputs, and the last entry set to each input in a random order; compared
/// with `zeta_shuffle(alpha, k, eps0)`. Special triples (`m - 1` copies of one
/// input): compared with `zeta_special(alpha, m, eps0)`.
pub fn ternary(spec: &TernarySpec) -> Result<SuiteReport> {
    let mut t = Tracker::new("ternary");
    let mut rng = seeded(spec.seed);
    for i in 0..spec.randomizers {
        let r = draw_randomizer(&mut rng, spec, i)?;
        let eps0 = r.eps0();
        let mut order = [0usize, 1, 2];
        order.shuffle(&mut rng);
        let [x, y, z] = order;
        for k in 2..=spec.k_max {
            let mut shared: Vec<usize> = (0..k - 1).map(|_| rng.gen_range(0..3u32) as usize).collect();
            shared.push(x);
            let d = shared.clone();
            shared[k - 1] = y;
            let d1 = shared.clone();
            shared[k - 1] = z;
            let d2 = shared;
            let (p, q, rr) = (shuffle_of(&r, &d)?, shuffle_of(&r, &d1)?, shuffle_of(&r, &d2)?);
            for &alpha in &spec.alphas {
                let v = exact_ternary(&p, &q, &rr, f64::from(alpha))?;
                let bound = zeta_shuffle(alpha, k as u64, eps0)?.value;
                t.record(bound - v, || {
                    format!("shuffle: randomizer={i} eps0={eps0} B={} k={k} alpha={alpha}: exact={v:e} bound={bound:e}", r.b())
                });
            }
        }
        for m in 1..=spec.k_max {
            let base = shuffle_of(&r, &special(m, x, x))?;
            let p = shuffle_of(&r, &special(m, x, y))?;
            let q = shuffle_of(&r, &special(m, x, z))?;
            for &alpha in &spec.alphas {
                let v = exact_ternary(&p, &q, &base, f64::from(alpha))?;
                let bound = zeta_special(alpha, m as u64, eps0)?;
                t.record(bound - v, || {
                    format!("special: randomizer={i} eps0={eps0} B={} m={m} alpha={alpha}: exact={v:e} bound={bound:e}", r.b())
                });
            }
        }
    }
    Ok(t.finish())
}

/// `E_m` for `m + 1` clients: `m` copies of input `z`, plus one client
/// holding `x` (numerator), `y` (numerator) or `z` (reference).
pub fn e_m(r: &Randomizer, m: usize, x: usize, y: usize, z: usize, alpha: f64) -> Result<f64> {
    let with_last = |last| {
        let mut d = vec![z; m + 1];
        d[m] = last;
        d
    };
    let p = shuffle_of(r, &with_last(x))?;
    let q = shuffle_of(r, &with_last(y))?;
    let base = shuffle_of(r, &with_last(z))?;
    exact_ternary(&p, &q, &base, alpha)
}

/// `E_m` is nonincreasing in `m`, and the Renyi divergence of shuffled
/// neighbors is nondecreasing in the order.
pub fn monotone(seed: u64, randomizers: usize) -> Result<SuiteReport> {
    let mut t = Tracker::new("monotone");
    let mut rng = seeded(seed ^ 0x6d6f_6e6f);
    let spec = TernarySpec::with_seed(seed);
    let orders: Vec<f64> = [1.25, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0].to_vec();
    for i in 0..randomizers {
        let r = draw_randomizer(&mut rng, &spec, i)?;
        for &alpha in &[2.0, 3.0, 4.0] {
            let mut prev = e_m(&r, 0, 0, 1, 2, alpha)?;
            for m in 1..=9 {
                let cur = e_m(&r, m, 0, 1, 2, alpha)?;
                let allowed = prev + MONOTONE_SLACK * prev.max(1.0);
                t.record(allowed - cur, || {
                    format!("E_m: randomizer={i} B={} alpha={alpha} m={m}: E_m={cur:e} E_(m-1)={prev:e}", r.b())
                });
                prev = cur;
            }
        }
        let k = 2 + i % 7;
        let shared: Vec<usize> = (0..k - 1).map(|_| rng.gen_range(0..3u32) as usize).collect();
        let mut d = shared.clone();
        d.push(0);
        let mut d1 = shared;
        d1.push(1);
        let (p, q) = (shuffle_of(&r, &d)?, shuffle_of(&r, &d1)?);
        let mut prev = 0.0;
        for &l in &orders {
            let v = exact_renyi(&p, &q, l)?;
            t.record(v - prev + MONOTONE_SLACK * prev.max(1.0), || {
                format!("renyi order: randomizer={i} k={k} lambda={l}: {v:e} after {prev:e}")
            });
            prev = v;
        }
    }
    Ok(t.finish())
}

fn random_simplex<R: Rng>(rng: &mut R, atoms: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..atoms).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Joint convexity of the ternary divergence in `(P, Q, R)`.
pub fn convexity(seed: u64, trials: usize) -> Result<SuiteReport> {
    let mut t = Tracker::new("convexity");
    let mut rng = seeded(seed ^ 0x636f_6e76);
    for i in 0..trials {
        let atoms = rng.gen_range(2..=20u32) as usize;
        let mut draw = || {
            (
                random_simplex(&mut rng, atoms),
                random_simplex(&mut rng, atoms),
                random_simplex(&mut rng, atoms),
            )
        };
        let (p0, q0, r0) = draw();
        let (p1, q1, r1) = draw();
        for &alpha in &[1.0, 1.5, 2.0, 3.0, 4.0] {
            let f0 = ternary_divergence(&p0, &q0, &r0, alpha)?;
            let f1 = ternary_divergence(&p1, &q1, &r1, alpha)?;
            for &a in &[0.25, 0.5, 0.75] {
                let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
                    x.iter().zip(y).map(|(u, v)| a * u + (1.0 - a) * v).collect()
                };
                let fm = ternary_divergence(&mix(&p0, &p1), &mix(&q0, &q1), &mix(&r0, &r1), alpha)?;
                let rhs = a * f0 + (1.0 - a) * f1;
                t.record(rhs + CONVEXITY_SLACK * rhs.max(1.0) - fm, || {
                    format!("trial={i} atoms={atoms} alpha={alpha} a={a}: mixture={fm:e} rhs={rhs:e}")
                });
            }
        }
    }
    Ok(t.finish())
}
