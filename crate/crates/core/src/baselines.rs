//! The approximate-DP comparison pipeline: amplification by shuffling
//! (closed form of the "hiding among the clones" analysis), then
//! amplification by subsampling, then strong composition over rounds.

use serde::{Deserialize, Serialize};

use crate::accountant::{DpGuarantee, Provenance};
use crate::bounds::SubsampledShuffleParams;
use crate::error::{Error, Result};

/// `eps0 <= ln(n / (16 ln(2/delta)))`, the validity range of the clones bound.
pub fn clones_condition_ok(eps0: f64, n_eff: u64, delta: f64) -> bool {
    eps0 <= (n_eff as f64 / (16.0 * (2.0 / delta).ln())).ln()
}

/// `eps0 <= ln(n / ln(1/delta)) / 2`, the validity range of the blanket bound.
pub fn blanket_condition_ok(eps0: f64, n_eff: u64, delta: f64) -> bool {
    eps0 <= 0.5 * (n_eff as f64 / (1.0 / delta).ln()).ln()
}

/// Result of the shuffle amplification step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShuffleAmplification {
    Amplified(DpGuarantee),
    /// The closed form does not apply; the shuffle is credited with no more
    /// than the local guarantee `(eps0, 0)`.
    Degenerate(DpGuarantee),
}

impl ShuffleAmplification {
    pub fn guarantee(&self) -> DpGuarantee {
        match *self {
            ShuffleAmplification::Amplified(g) | ShuffleAmplification::Degenerate(g) => g,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, ShuffleAmplification::Degenerate(_))
    }
}

/// Shuffle amplification of an `eps0`-LDP randomizer over `k` clients.
pub fn shuffle_amplify(eps0: f64, k: u64, delta: f64) -> Result<ShuffleAmplification> {
    if k < 2 {
        return Err(Error::domain(format!("shuffle amplification needs k >= 2, got {k}")));
    }
    if !eps0.is_finite() || eps0 < 0.0 {
        return Err(Error::domain(format!("eps0 must be finite and >= 0, got {eps0}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    let degenerate = || {
        DpGuarantee::new(eps0, 0.0, Provenance::BaselineClonesPipeline)
            .map(ShuffleAmplification::Degenerate)
    };
    if !clones_condition_ok(eps0, k, delta) {
        return degenerate();
    }
    let e = eps0.exp();
    let n = k as f64;
    let inner = (e - 1.0) / (e + 1.0)
        * (8.0 * (e * (4.0 / delta).ln()).sqrt() / n.sqrt() + 8.0 * e / n);
    let eps = inner.ln_1p();
    if eps >= eps0 && eps0 > 0.0 {
        return degenerate();
    }
    DpGuarantee::new(eps, delta, Provenance::BaselineClonesPipeline)
        .map(ShuffleAmplification::Amplified)
}

/// Amplification by subsampling at rate `gamma`:
/// `eps' = ln(1 + gamma (e^eps - 1))`, `delta' = gamma delta`.
pub fn amplify_by_subsampling(g: &DpGuarantee, gamma: f64) -> Result<DpGuarantee> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("sampling rate must lie in (0, 1], got {gamma}")));
    }
    if gamma == 1.0 {
        return Ok(*g);
    }
    DpGuarantee::new((gamma * g.eps.exp_m1()).ln_1p(), gamma * g.delta, g.provenance)
}

/// Strong composition of `rounds` copies of an `(eps, delta)` mechanism.
///
/// `eps_total` is the smallest of the basic bound `T eps` and the two
/// advanced-composition expressions
/// `T eps (e^eps - 1)/(e^eps + 1) + eps sqrt(2 T ln(e + sqrt(T eps^2) / slack))` and
/// `T eps (e^eps - 1)/(e^eps + 1) + eps sqrt(2 T ln(1 / slack))`;
/// `delta_total = T delta + slack`.
pub fn strong_compose(g: &DpGuarantee, rounds: u64, delta_slack: f64) -> Result<DpGuarantee> {
    if rounds == 0 {
        return Err(Error::domain("number of rounds must be >= 1"));
    }
    if !(delta_slack > 0.0 && delta_slack < 1.0) {
        return Err(Error::domain(format!(
            "composition slack must lie in (0, 1), got {delta_slack}"
        )));
    }
    let t = rounds as f64;
    let eps = g.eps;
    let basic = t * eps;
    let drift = t * eps * (eps / 2.0).tanh();
    let adv_a = drift
        + eps * (2.0 * t * (std::f64::consts::E + (t * eps * eps).sqrt() / delta_slack).ln()).sqrt();
    let adv_b = drift + eps * (2.0 * t * (1.0 / delta_slack).ln()).sqrt();
    let delta = t * g.delta + delta_slack;
    if delta >= 1.0 {
        return Err(Error::domain(format!(
            "composed delta {delta} is not below one"
        )));
    }
    DpGuarantee::new(basic.min(adv_a).min(adv_b), delta, g.provenance)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineVariant {
    ClonesClosedForm,
}

/// How the overall `delta` is split between the per-round shuffle step and
/// the composition slack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub variant: BaselineVariant,
    /// `delta` handed to each round's shuffle amplification.
    pub delta_shuffle: f64,
    /// Slack of the strong composition step.
    pub delta_comp: f64,
}

impl BaselineConfig {
    /// Half of `delta` goes to the `rounds` subsampled shuffle steps and half
    /// to composition slack. A shuffle step whose subsampled `delta` is
    /// `(delta / 2) / rounds` needs `delta_shuffle = delta / (2 rounds gamma)`,
    /// capped at `delta / 2`.
    pub fn split(delta: f64, rounds: u64, gamma: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
        }
        if rounds == 0 {
            return Err(Error::domain("number of rounds must be >= 1"));
        }
        let half = delta / 2.0;
        let cfg = BaselineConfig {
            variant: BaselineVariant::ClonesClosedForm,
            delta_shuffle: (half / (rounds as f64 * gamma)).min(half),
            delta_comp: half,
        };
        cfg.validate(delta, rounds, gamma)?;
        Ok(cfg)
    }

    pub fn validate(&self, delta: f64, rounds: u64, gamma: f64) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !in_unit(self.delta_shuffle) || !in_unit(self.delta_comp) {
            return Err(Error::Config("baseline delta components must lie in (0, 1)".into()));
        }
        let spent = rounds as f64 * gamma * self.delta_shuffle + self.delta_comp;
        if spent > delta * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "baseline delta budget {spent} exceeds target {delta}"
            )));
        }
        Ok(())
    }
}

/// Output of the full baseline pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub guarantee: DpGuarantee,
    pub per_round_shuffle: ShuffleAmplification,
    pub per_round_subsampled: DpGuarantee,
    pub config: BaselineConfig,
}

impl BaselineReport {
    pub fn degenerate(&self) -> bool {
        self.per_round_shuffle.is_degenerate()
    }
}

/// Shuffle amplification -> subsampling -> strong composition, with the
/// default `delta` split.
pub fn baseline_total(params: &SubsampledShuffleParams, rounds: u64, delta: f64) -> Result<BaselineReport> {
    let cfg = BaselineConfig::split(delta, rounds, params.gamma())?;
    baseline_with(params, rounds, &cfg)
}

pub fn baseline_with(
    params: &SubsampledShuffleParams,
    rounds: u64,
    cfg: &BaselineConfig,
) -> Result<BaselineReport> {
    let shuffled = shuffle_amplify(params.eps0(), params.k(), cfg.delta_shuffle)?;
    let sub = amplify_by_subsampling(&shuffled.guarantee(), params.gamma())?;
    let guarantee = strong_compose(&sub, rounds, cfg.delta_comp)?;
    Ok(BaselineReport {
        guarantee,
        per_round_shuffle: shuffled,
        per_round_subsampled: sub,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(eps: f64, delta: f64) -> DpGuarantee {
        DpGuarantee::new(eps, delta, Provenance::BaselineClonesPipeline).unwrap()
    }

    #[test]
    fn validity_conditions() {
        // thresholds 8.0925 and 1.1848 for clones, 5.4510 and 0.8458 for blanket
        assert!(clones_condition_ok(3.0, 1_000_000, 1e-8));
        assert!(clones_condition_ok(8.09, 1_000_000, 1e-8));
        assert!(!clones_condition_ok(8.10, 1_000_000, 1e-8));
        assert!(!clones_condition_ok(3.0, 1000, 1e-8));
        assert!(clones_condition_ok(1.18, 1000, 1e-8));
        assert!(blanket_condition_ok(2.0, 1_000_000, 1e-8));
        assert!(!blanket_condition_ok(5.46, 1_000_000, 1e-8));
        assert!(!blanket_condition_ok(3.0, 100, 1e-8));
        assert!(blanket_condition_ok(0.84, 100, 1e-8));
        assert!(blanket_condition_ok(0.0, 19, 1e-8));
    }

    #[test]
    fn shuffle_fallback_and_zero() {
        let s = shuffle_amplify(3.0, 1000, 1e-8).unwrap();
        assert!(s.is_degenerate());
        assert_eq!((s.guarantee().eps, s.guarantee().delta), (3.0, 0.0));
        let z = shuffle_amplify(0.0, 1000, 1e-8).unwrap();
        assert!(!z.is_degenerate());
        assert_eq!((z.guarantee().eps, z.guarantee().delta), (0.0, 1e-8));
        assert!(shuffle_amplify(1.0, 1, 1e-8).is_err());
    }

    #[test]
    fn shuffle_closed_form_regression() {
        // eps0 = 2, k = 10^4, delta = 1e-8: inside the clones range
        let s = shuffle_amplify(2.0, 10_000, 1e-8).unwrap();
        assert!(!s.is_degenerate());
        let e = 2f64.exp();
        let hand = ((e - 1.0) / (e + 1.0)
            * (8.0 * (e * 4e8f64.ln()).sqrt() / 100.0 + 8.0 * e / 10_000.0))
            .ln_1p();
        assert!((s.guarantee().eps - hand).abs() < 1e-15);
        assert!((s.guarantee().eps - 0.554_796_336_232_190_4).abs() < 1e-12, "{}", s.guarantee().eps);
    }

    #[test]
    fn shuffle_never_worse_than_local() {
        for &k in &[2u64, 10, 100, 1000, 10_000, 1_000_000] {
            for i in 0..=40 {
                let e0 = 0.1 * f64::from(i);
                let s = shuffle_amplify(e0, k, 1e-6).unwrap();
                assert!(s.guarantee().eps <= e0);
            }
        }
    }

    #[test]
    fn subsampling_examples() {
        let base = g(1.0, 1e-6);
        assert_eq!(amplify_by_subsampling(&base, 1.0).unwrap(), base);
        assert_eq!(amplify_by_subsampling(&g(0.0, 1e-6), 0.3).unwrap().eps, 0.0);
        let a = amplify_by_subsampling(&base, 0.01).unwrap();
        assert!((a.eps - 0.017_036_863_236_176_55).abs() < 1e-15);
        assert!((a.delta - 1e-8).abs() < 1e-22);
        assert!(amplify_by_subsampling(&base, 0.0).is_err());
        for i in 1..=20 {
            let r = f64::from(i) / 20.0;
            assert!(amplify_by_subsampling(&base, r).unwrap().eps <= base.eps);
        }
    }

    #[test]
    fn strong_composition_examples() {
        let one = strong_compose(&g(0.3, 1e-7), 1, 1e-9).unwrap();
        assert_eq!(one.eps, 0.3);
        assert!((one.delta - (1e-7 + 1e-9)).abs() < 1e-22);
        assert_eq!(strong_compose(&g(0.0, 0.0), 1000, 1e-9).unwrap().eps, 0.0);
        // T = 10^4, eps = 0.02, slack = 1e-9, both advanced branches by hand
        let (t, e, s): (f64, f64, f64) = (1e4, 0.02, 1e-9);
        let drift = t * e * (e.exp() - 1.0) / (e.exp() + 1.0);
        let branch_b = drift + e * (2.0 * t * (1.0 / s).ln()).sqrt();
        let branch_a = drift + e * (2.0 * t * (std::f64::consts::E + (t * e * e).sqrt() / s).ln()).sqrt();
        let want = (t * e).min(branch_a).min(branch_b);
        let got = strong_compose(&g(e, 0.0), 10_000, s).unwrap();
        assert!((got.eps - want).abs() < 1e-12);
        assert!((got.eps - 14.875_729_493_735_971).abs() < 1e-9, "{}", got.eps);
        assert!(strong_compose(&g(0.1, 0.0), 0, 1e-9).is_err());
    }

    #[test]
    fn baseline_pipeline_shapes() {
        let p = SubsampledShuffleParams::new(1_000_000, 1000, 0.0).unwrap();
        assert_eq!(baseline_total(&p, 100_000, 1e-8).unwrap().guarantee.eps, 0.0);
        // T = 1 is the two amplification steps alone
        let p = SubsampledShuffleParams::new(1_000_000, 10_000, 2.0).unwrap();
        let r = baseline_total(&p, 1, 1e-8).unwrap();
        assert_eq!(r.guarantee.eps, r.per_round_subsampled.eps);
        let r = baseline_total(&SubsampledShuffleParams::new(1_000_000, 1000, 3.0).unwrap(), 10, 1e-8)
            .unwrap();
        assert!(r.degenerate());
    }

    #[test]
    fn baseline_monotone_on_grid() {
        for &k in &[100u64, 1000, 10_000] {
            let mut prev_t = 0.0;
            for t in [1u64, 10, 100, 1000, 10_000, 100_000] {
                let p = SubsampledShuffleParams::new(1000 * k, k, 1.5).unwrap();
                let e = baseline_total(&p, t, 1e-8).unwrap().guarantee.eps;
                assert!(e >= prev_t);
                prev_t = e;
            }
            let mut prev_e = 0.0;
            for i in 0..=30 {
                let p = SubsampledShuffleParams::new(1000 * k, k, 0.1 * f64::from(i)).unwrap();
                let e = baseline_total(&p, 1000, 1e-8).unwrap().guarantee.eps;
                assert!(e >= prev_e, "k={k} eps0={}", 0.1 * f64::from(i));
                prev_e = e;
            }
        }
    }

    #[test]
    fn delta_split_respects_budget() {
        let c = BaselineConfig::split(1e-8, 100_000, 0.001).unwrap();
        assert_eq!(c.delta_comp, 5e-9);
        assert!((c.delta_shuffle - 5e-11).abs() < 1e-25);
        let c = BaselineConfig::split(1e-5, 1, 0.01).unwrap();
        assert_eq!(c.delta_shuffle, 5e-6);
        assert!(BaselineConfig::split(0.0, 1, 0.1).is_err());
    }
}
