//! wasm-bindgen exports behind `www/index.html`. Every export returns a JSON
//! string; the same functions are callable natively for tests.

use serde::Serialize;
use subshuffle::accountant::{lower_reference, total_privacy, AccountantConfig};
use subshuffle::baselines::baseline_total;
use subshuffle::bounds::{BoundEvaluator, CurveKind, SubsampledShuffleParams};
use subshuffle::sgd::{self, ConvexProblem, ProblemSpec, SgdConfig};
use wasm_bindgen::prelude::*;

/// Largest inputs the page accepts, to keep the tab responsive.
const MAX_LAMBDA: u32 = 256;
const MAX_POINTS: u32 = 64;
const MAX_SGD_WORK: u64 = 5_000_000;

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn to_u64(name: &str, v: f64) -> Result<u64, String> {
    if !(v.is_finite() && v >= 0.0 && v.fract() == 0.0 && v <= 9.0e15) {
        return Err(format!("{name} must be a non-negative integer, got {v}"));
    }
    Ok(v as u64)
}

#[derive(Serialize)]
struct Curves {
    lambda: Vec<u32>,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

pub fn curves(n: f64, k: f64, eps0: f64, lambda_max: u32) -> Result<String, String> {
    if !(2..=MAX_LAMBDA).contains(&lambda_max) {
        return Err(format!("lambda max must lie in [2, {MAX_LAMBDA}]"));
    }
    let p = SubsampledShuffleParams::new(to_u64("n", n)?, to_u64("k", k)?, eps0).map_err(s)?;
    let mut up = BoundEvaluator::new(p, CurveKind::UpperBound).map_err(s)?;
    let mut lo = BoundEvaluator::new(p, CurveKind::LowerBound).map_err(s)?;
    let mut out = Curves {
        lambda: Vec::new(),
        upper: Vec::new(),
        lower: Vec::new(),
    };
    for lambda in 2..=lambda_max {
        out.lambda.push(lambda);
        out.upper.push(up.eval(lambda).map_err(s)?);
        out.lower.push(lo.eval(lambda).map_err(s)?);
    }
    json(&out)
}

#[derive(Serialize)]
struct RoundsSweep {
    rounds: Vec<u64>,
    ours: Vec<f64>,
    baseline: Vec<f64>,
    lower: Vec<f64>,
    degenerate: Vec<bool>,
}

pub fn rounds_sweep(n: f64, k: f64, eps0: f64, delta: f64, t_max: f64, points: u32) -> Result<String, String> {
    if !(1..=MAX_POINTS).contains(&points) {
        return Err(format!("points must lie in [1, {MAX_POINTS}]"));
    }
    let p = SubsampledShuffleParams::new(to_u64("n", n)?, to_u64("k", k)?, eps0).map_err(s)?;
    let t_max = to_u64("T", t_max)?.max(1);
    let mut rounds: Vec<u64> = (0..points)
        .map(|i| {
            let f = if points == 1 { 1.0 } else { i as f64 / (points - 1) as f64 };
            (t_max as f64).powf(f).round() as u64
        })
        .collect();
    rounds.dedup();
    let mut out = RoundsSweep {
        rounds: Vec::new(),
        ours: Vec::new(),
        baseline: Vec::new(),
        lower: Vec::new(),
        degenerate: Vec::new(),
    };
    for t in rounds {
        let cfg = AccountantConfig::new(t, delta).map_err(s)?;
        let base = baseline_total(&p, t, delta).map_err(s)?;
        out.ours.push(total_privacy(&p, &cfg).map_err(s)?.eps);
        out.lower.push(lower_reference(&p, &cfg).map_err(s)?.eps);
        out.baseline.push(base.guarantee.eps);
        out.degenerate.push(base.degenerate());
        out.rounds.push(t);
    }
    json(&out)
}

#[derive(Serialize)]
struct SgdTrace {
    round: Vec<u64>,
    suboptimality: Vec<f64>,
    convergence_bound: f64,
    eps: Option<f64>,
    delta: f64,
}

pub fn sgd_trace(d: u32, n: u32, k: u32, eps0: f64, rounds: u32, seed: u32) -> Result<String, String> {
    if u64::from(rounds) * u64::from(k) * u64::from(d.max(1)) > MAX_SGD_WORK {
        return Err(format!("rounds x k x d must stay below {MAX_SGD_WORK}"));
    }
    let problem = ConvexProblem::synthetic(ProblemSpec::least_squares(n as usize, d as usize, 1.0, 0))
        .map_err(s)?;
    let cfg = SgdConfig::new(u64::from(rounds), k as usize, eps0, u64::from(seed));
    let r = sgd::run(&problem, &cfg).map_err(s)?;
    json(&SgdTrace {
        round: r.trajectory.iter().map(|p| p.round).collect(),
        suboptimality: r.trajectory.iter().map(|p| p.suboptimality).collect(),
        convergence_bound: r.convergence_bound,
        eps: r.privacy.map(|g| g.eps),
        delta: cfg.delta,
    })
}

/// Per-round upper and lower RDP bounds for orders `2..=lambda_max`.
#[wasm_bindgen]
pub fn rdp_curves(n: f64, k: f64, eps0: f64, lambda_max: u32) -> Result<String, JsValue> {
    curves(n, k, eps0, lambda_max).map_err(|e| JsValue::from_str(&e))
}

/// `(eps, delta)` of our bound, the baseline and the lower reference for
/// log-spaced round counts up to `t_max`.
#[wasm_bindgen]
pub fn privacy_vs_rounds(
    n: f64,
    k: f64,
    eps0: f64,
    delta: f64,
    t_max: f64,
    points: u32,
) -> Result<String, JsValue> {
    rounds_sweep(n, k, eps0, delta, t_max, points).map_err(|e| JsValue::from_str(&e))
}

/// Private SGD on a synthetic least-squares problem.
#[wasm_bindgen]
pub fn simulate_sgd(d: u32, n: u32, k: u32, eps0: f64, rounds: u32, seed: u32) -> Result<String, JsValue> {
    sgd_trace(d, n, k, eps0, rounds, seed).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn curves_json() {
        let v: Value = serde_json::from_str(&curves(1e4, 100.0, 1.0, 8).unwrap()).unwrap();
        assert_eq!(v["lambda"].as_array().unwrap().len(), 7);
        assert!(curves(10.0, 100.0, 1.0, 8).is_err());
        assert!(curves(1e4, 100.5, 1.0, 8).is_err());
    }

    #[test]
    fn sweep_json() {
        let v: Value = serde_json::from_str(&rounds_sweep(1e6, 1e3, 2.0, 1e-8, 1e5, 6).unwrap()).unwrap();
        let ours = v["ours"].as_array().unwrap();
        let base = v["baseline"].as_array().unwrap();
        assert_eq!(v["rounds"][5], 100_000);
        assert!(base[5].as_f64().unwrap() > 10.0 * ours[5].as_f64().unwrap());
    }

    #[test]
    fn sgd_json() {
        let v: Value = serde_json::from_str(&sgd_trace(5, 200, 20, 2.0, 200, 1).unwrap()).unwrap();
        assert_eq!(v["round"][0], 0);
        assert!(v["eps"].as_f64().unwrap() > 0.0);
        assert!(sgd_trace(10, 1000, 1000, 2.0, 4_000_000, 0).is_err());
    }
}
