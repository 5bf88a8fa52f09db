//! Composition over rounds and conversion from Renyi DP to `(eps, delta)`-DP.

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundEvaluator, CurveKind, RdpCurve, RdpEntry, SubsampledShuffleParams};
use crate::error::{Error, Result};

/// Which pipeline produced a guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    OursRdpUpper,
    OursRdpLower,
    ExactOracle,
    BaselineClonesPipeline,
}

impl Provenance {
    pub fn for_curve(kind: CurveKind) -> Self {
        match kind {
            CurveKind::UpperBound => Provenance::OursRdpUpper,
            CurveKind::LowerBound => Provenance::OursRdpLower,
            CurveKind::Exact => Provenance::ExactOracle,
        }
    }
}

/// An `(eps, delta)` guarantee.
///
/// `delta` may be exactly zero for the pure-DP fallback of the baseline
/// pipeline; everything produced by RDP conversion has `delta > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpGuarantee {
    pub eps: f64,
    pub delta: f64,
    pub provenance: Provenance,
    /// Minimizing RDP order, for guarantees obtained by conversion.
    pub argmin_lambda: Option<u32>,
    /// Conversion objective before clamping at zero.
    pub eps_unclamped: Option<f64>,
}

impl DpGuarantee {
    pub fn new(eps: f64, delta: f64, provenance: Provenance) -> Result<Self> {
        if !eps.is_finite() || eps < 0.0 {
            return Err(Error::domain(format!("eps must be finite and >= 0, got {eps}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::domain(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(DpGuarantee {
            eps,
            delta,
            provenance,
            argmin_lambda: None,
            eps_unclamped: None,
        })
    }
}

/// Default ceiling of the order search.
pub const DEFAULT_LAMBDA_MAX: u32 = 2048;

/// The search stops once the objective has risen this many orders in a row.
pub const EARLY_EXIT_PATIENCE: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccountantConfig {
    pub rounds: u64,
    pub delta: f64,
    pub lambda_max: u32,
    /// Scan every order up to `lambda_max` instead of stopping early.
    pub exact_search: bool,
}

impl AccountantConfig {
    pub fn new(rounds: u64, delta: f64) -> Result<Self> {
        let cfg = AccountantConfig {
            rounds,
            delta,
            lambda_max: DEFAULT_LAMBDA_MAX,
            exact_search: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_lambda_max(mut self, lambda_max: u32) -> Result<Self> {
        self.lambda_max = lambda_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_exact_search(mut self, exact: bool) -> Self {
        self.exact_search = exact;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::domain("number of rounds must be >= 1"));
        }
        check_delta(self.delta)?;
        if self.lambda_max < 2 {
            return Err(Error::domain(format!(
                "lambda_max must be >= 2, got {}",
                self.lambda_max
            )));
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// RDP of `rounds` identical rounds: `rounds * eps(lambda)` at every order.
pub fn compose(curve: &RdpCurve, rounds: u64) -> Result<RdpCurve> {
    if rounds == 0 {
        return Err(Error::domain("number of rounds must be >= 1"));
    }
    let t = rounds as f64;
    let entries = curve
        .entries()
        .iter()
        .map(|e| RdpEntry {
            lambda: e.lambda,
            eps: t * e.eps,
        })
        .collect();
    RdpCurve::new(*curve.params(), curve.kind(), entries)
}

/// The amount the RDP-to-DP conversion adds to `eps(lambda)`:
/// `(ln(1/delta) + (lambda - 1) ln(1 - 1/lambda) - ln(lambda)) / (lambda - 1)`.
pub fn conversion_penalty(lambda: u32, delta: f64) -> f64 {
    let lam = f64::from(lambda);
    let lm1 = lam - 1.0;
    (-delta.ln() + lm1 * (-1.0 / lam).ln_1p() - lam.ln()) / lm1
}

/// Converts a tabulated RDP curve to `(eps, delta)`-DP by minimizing over the
/// tabulated orders.
pub fn rdp_to_dp(curve: &RdpCurve, delta: f64) -> Result<DpGuarantee> {
    check_delta(delta)?;
    let best = curve
        .entries()
        .iter()
        .map(|e| (e.lambda, e.eps + conversion_penalty(e.lambda, delta)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::domain("cannot convert an empty RDP curve"))?;
    Ok(converted(best, delta, Provenance::for_curve(curve.kind())))
}

fn converted((lambda, raw): (u32, f64), delta: f64, provenance: Provenance) -> DpGuarantee {
    DpGuarantee {
        eps: raw.max(0.0),
        delta,
        provenance,
        argmin_lambda: Some(lambda),
        eps_unclamped: Some(raw),
    }
}

/// Minimizes `objective(lambda)` over `2..=lambda_max`. Unless `exact` is set
/// the scan stops after [`EARLY_EXIT_PATIENCE`] consecutive increases.
pub fn minimize_over_orders<F>(lambda_max: u32, exact: bool, mut objective: F) -> Result<(u32, f64)>
where
    F: FnMut(u32) -> Result<f64>,
{
    let mut best = (2, objective(2)?);
    let mut prev = best.1;
    let mut rising = 0;
    for lambda in 3..=lambda_max {
        let v = objective(lambda)?;
        if v < best.1 {
            best = (lambda, v);
        }
        rising = if v > prev { rising + 1 } else { 0 };
        prev = v;
        if !exact && rising >= EARLY_EXIT_PATIENCE {
            break;
        }
    }
    Ok(best)
}

/// `(eps, delta)` of `cfg.rounds` rounds using one of the RDP bounds.
pub fn dp_from_bound(
    params: &SubsampledShuffleParams,
    cfg: &AccountantConfig,
    kind: CurveKind,
) -> Result<DpGuarantee> {
    cfg.validate()?;
    let mut eval = BoundEvaluator::new(*params, kind)?;
    let t = cfg.rounds as f64;
    let best = minimize_over_orders(cfg.lambda_max, cfg.exact_search, |lambda| {
        Ok(t * eval.eval(lambda)? + conversion_penalty(lambda, cfg.delta))
    })?;
    Ok(converted(best, cfg.delta, Provenance::for_curve(kind)))
}

/// Total privacy of `cfg.rounds` subsampled shuffle rounds from the upper
/// bound.
pub fn total_privacy(params: &SubsampledShuffleParams, cfg: &AccountantConfig) -> Result<DpGuarantee> {
    dp_from_bound(params, cfg, CurveKind::UpperBound)
}

/// Same conversion applied to the lower bound. Not a valid privacy
/// guarantee; it shows how much room the upper bound leaves.
pub fn lower_reference(params: &SubsampledShuffleParams, cfg: &AccountantConfig) -> Result<DpGuarantee> {
    dp_from_bound(params, cfg, CurveKind::LowerBound)
}
