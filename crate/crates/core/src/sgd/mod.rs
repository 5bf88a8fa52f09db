//! CLDP-SGD: each round samples `k` of `n` clients, every sampled client
//! clips its gradient in `l_inf`, randomizes it with [`VecMech`], the
//! messages are shuffled, and the server takes a projected step along their
//! average.

mod problem;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::accountant::{total_privacy, AccountantConfig, DpGuarantee, DEFAULT_LAMBDA_MAX};
use crate::bounds::SubsampledShuffleParams;
use crate::error::{Error, Result};
use crate::mechanisms::{clip, Norm, VecMech, VecMessage};
use crate::rng::{stream, SERVER};

pub use problem::{project, ConvexProblem, Loss, ProblemSpec};
use problem::norm2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    /// `eta_t = diameter / (g sqrt(t))`. Missing constants are filled in from
    /// the problem by [`SgdConfig::resolve`].
    InverseSqrt {
        #[serde(default)]
        diameter: Option<f64>,
        #[serde(default)]
        g: Option<f64>,
    },
    Constant { eta: f64 },
}

impl LrSchedule {
    /// Step size of round `t >= 1`.
    pub fn eta(&self, t: u64) -> f64 {
        match *self {
            LrSchedule::InverseSqrt { diameter, g } => {
                diameter.unwrap_or(f64::NAN) / (g.unwrap_or(f64::NAN) * (t as f64).sqrt())
            }
            LrSchedule::Constant { eta } => eta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub rounds: u64,
    pub k: usize,
    pub eps0: f64,
    /// `l_inf` clipping radius; defaults to the problem's Lipschitz constant.
    #[serde(default)]
    pub clip: Option<f64>,
    pub lr: LrSchedule,
    pub seed: u64,
    pub delta: f64,
    /// Skip the randomizer and average the clipped gradients directly, the
    /// `eps0 -> inf` limit. No privacy is reported.
    #[serde(default)]
    pub bypass_randomizer: bool,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: u32,
}

fn default_lambda_max() -> u32 {
    DEFAULT_LAMBDA_MAX
}

impl SgdConfig {
    pub fn new(rounds: u64, k: usize, eps0: f64, seed: u64) -> Self {
        SgdConfig {
            rounds,
            k,
            eps0,
            clip: None,
            lr: LrSchedule::InverseSqrt {
                diameter: None,
                g: None,
            },
            seed,
            delta: 1e-5,
            bypass_randomizer: false,
            lambda_max: DEFAULT_LAMBDA_MAX,
        }
    }

    /// Checks the configuration against the problem and fills in defaults.
    pub fn resolve(&self, problem: &ConvexProblem) -> Result<SgdConfig> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rounds == 0 {
            return bad("rounds must be >= 1".into());
        }
        if self.k == 0 || self.k > problem.n() {
            return bad(format!("k must lie in [1, n = {}], got {}", problem.n(), self.k));
        }
        if !self.bypass_randomizer && !(self.eps0 > 0.0 && self.eps0.is_finite()) {
            return bad(format!("eps0 must be finite and > 0, got {}", self.eps0));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.lambda_max < 2 {
            return bad("lambda_max must be >= 2".into());
        }
        let c = self.clip.unwrap_or_else(|| problem.lipschitz());
        if !(c > 0.0 && c.is_finite()) {
            return bad(format!("clip radius must be positive, got {c}"));
        }
        let mut out = *self;
        out.clip = Some(c);
        out.lr = match self.lr {
            LrSchedule::InverseSqrt { diameter, g } => {
                let g = g.unwrap_or(second_moment_bound(problem, &out)?.sqrt());
                let diameter = diameter.unwrap_or(problem.diameter());
                if !(g > 0.0 && g.is_finite() && diameter > 0.0 && diameter.is_finite()) {
                    return bad("learning-rate constants must be positive".into());
                }
                LrSchedule::InverseSqrt {
                    diameter: Some(diameter),
                    g: Some(g),
                }
            }
            LrSchedule::Constant { eta } => {
                if !(eta > 0.0 && eta.is_finite()) {
                    return bad(format!("constant step must be positive, got {eta}"));
                }
                self.lr
            }
        };
        Ok(out)
    }

    fn mechanism(&self, problem: &ConvexProblem) -> Result<Option<VecMech>> {
        if self.bypass_randomizer {
            return Ok(None);
        }
        VecMech::new(self.eps0, problem.dim(), self.clip.unwrap_or(problem.lipschitz())).map(Some)
    }
}

/// `G^2 = d min(L, C)^2 + G_inf^2(C) / k`, the bound on the second moment of
/// the aggregated gradient with `l_inf` clipping at `C`.
pub fn second_moment_bound(problem: &ConvexProblem, cfg: &SgdConfig) -> Result<f64> {
    let c = cfg.clip.unwrap_or(problem.lipschitz());
    let signal = problem.dim() as f64 * c.min(problem.lipschitz()).powi(2);
    if cfg.bypass_randomizer {
        return Ok(signal);
    }
    let mech = VecMech::new(cfg.eps0, problem.dim(), c)?;
    Ok(signal + mech.variance_bound() / cfg.k as f64)
}

/// Net count of `+` minus `-` messages per coordinate.
///
/// Integer tallies make the aggregate independent of message order.
pub fn tally(messages: &[VecMessage], d: usize) -> Vec<i64> {
    let mut net = vec![0i64; d];
    for m in messages {
        net[m.coord as usize] += if m.positive { 1 } else { -1 };
    }
    net
}

pub fn aggregate(messages: &[VecMessage], mech: &VecMech) -> Vec<f64> {
    let s = mech.scale() / messages.len() as f64;
    tally(messages, mech.dim()).into_iter().map(|c| c as f64 * s).collect()
}

/// Messages of one round before shuffling.
fn client_messages(
    problem: &ConvexProblem,
    cfg: &SgdConfig,
    mech: &VecMech,
    theta: &[f64],
    round: u64,
    cohort: &[usize],
) -> Result<Vec<VecMessage>> {
    let c = cfg.clip.unwrap_or(problem.lipschitz());
    cohort
        .iter()
        .map(|&i| {
            let g = clip(&problem.sample_gradient(i, theta), c, Norm::Linf)?;
            mech.randomize(&g, &mut stream(cfg.seed, round, i as u64))
        })
        .collect()
}

/// One round's aggregated gradient estimate.
fn round_gradient(
    problem: &ConvexProblem,
    cfg: &SgdConfig,
    mech: Option<&VecMech>,
    theta: &[f64],
    round: u64,
) -> Result<Vec<f64>> {
    let mut server = stream(cfg.seed, round, SERVER);
    let cohort = index::sample(&mut server, problem.n(), cfg.k).into_vec();
    match mech {
        None => {
            let c = cfg.clip.unwrap_or(problem.lipschitz());
            let mut acc = vec![0.0; problem.dim()];
            for &i in &cohort {
                let g = clip(&problem.sample_gradient(i, theta), c, Norm::Linf)?;
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v;
                }
            }
            let k = cfg.k as f64;
            Ok(acc.into_iter().map(|v| v / k).collect())
        }
        Some(mech) => {
            let mut msgs = client_messages(problem, cfg, mech, theta, round, &cohort)?;
            msgs.shuffle(&mut server);
            Ok(aggregate(&msgs, mech))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub round: u64,
    pub objective: f64,
    pub suboptimality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdRunReport {
    pub trajectory: Vec<TrajectoryPoint>,
    pub final_theta: Vec<f64>,
    pub final_suboptimality: f64,
    /// `None` when the randomizer was bypassed.
    pub privacy: Option<DpGuarantee>,
    /// Mean of `||g_t||^2` over the rounds.
    pub second_moment: f64,
    pub second_moment_bound: f64,
    pub diameter: f64,
    /// `8 D G (2 + ln T) / sqrt(T)`: four times the last-iterate guarantee.
    pub convergence_bound: f64,
}

impl SgdRunReport {
    pub fn within_convergence_bound(&self) -> bool {
        self.final_suboptimality <= self.convergence_bound
    }
}

/// Rounds between trajectory samples.
pub fn record_every(rounds: u64) -> u64 {
    (rounds / 500).max(1)
}

pub fn run(problem: &ConvexProblem, cfg: &SgdConfig) -> Result<SgdRunReport> {
    let cfg = cfg.resolve(problem)?;
    let mech = cfg.mechanism(problem)?;
    let privacy = if cfg.bypass_randomizer {
        None
    } else {
        let params = SubsampledShuffleParams::new(problem.n() as u64, cfg.k as u64, cfg.eps0)?;
        let acct = AccountantConfig::new(cfg.rounds, cfg.delta)?.with_lambda_max(cfg.lambda_max)?;
        Some(total_privacy(&params, &acct)?)
    };
    let every = record_every(cfg.rounds);
    let f_star = problem.opt_value();
    let point = |round, theta: &[f64]| {
        let objective = problem.objective(theta);
        TrajectoryPoint {
            round,
            objective,
            suboptimality: objective - f_star,
        }
    };
    let mut theta = vec![0.0; problem.dim()];
    let mut trajectory = vec![point(0, &theta)];
    let mut sq = 0.0;
    for t in 1..=cfg.rounds {
        let g = round_gradient(problem, &cfg, mech.as_ref(), &theta, t)?;
        sq += norm2(&g).powi(2);
        let eta = cfg.lr.eta(t);
        let step: Vec<f64> = theta.iter().zip(&g).map(|(a, b)| a - eta * b).collect();
        theta = project(&step, problem.radius());
        if t % every == 0 || t == cfg.rounds {
            trajectory.push(point(t, &theta));
        }
    }
    let bound = second_moment_bound(problem, &cfg)?;
    let t = cfg.rounds as f64;
    let final_suboptimality = trajectory.last().map(|p| p.suboptimality).unwrap_or(f64::NAN);
    Ok(SgdRunReport {
        trajectory,
        final_theta: theta,
        final_suboptimality,
        privacy,
        second_moment: sq / t,
        second_moment_bound: bound,
        diameter: problem.diameter(),
        convergence_bound: 8.0 * problem.diameter() * bound.sqrt() * (2.0 + t.ln()) / t.sqrt(),
    })
}

/// Monte-Carlo estimate of `E ||g_t||^2` at `theta`, returned with its bound.
pub fn grad_second_moment_check(
    problem: &ConvexProblem,
    cfg: &SgdConfig,
    theta: &[f64],
    samples: u64,
) -> Result<(f64, f64)> {
    if samples < 1000 {
        return Err(Error::Config(format!("need at least 1000 samples, got {samples}")));
    }
    let cfg = cfg.resolve(problem)?;
    let mech = cfg.mechanism(problem)?;
    let mut acc = 0.0;
    for s in 1..=samples {
        acc += norm2(&round_gradient(problem, &cfg, mech.as_ref(), theta, s)?).powi(2);
    }
    Ok((acc / samples as f64, second_moment_bound(problem, &cfg)?))
}

/// Mean and standard error of the aggregated gradient at `theta`.
pub fn gradient_estimate_stats(
    problem: &ConvexProblem,
    cfg: &SgdConfig,
    theta: &[f64],
    samples: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let cfg = cfg.resolve(problem)?;
    let mech = cfg.mechanism(problem)?;
    let d = problem.dim();
    let (mut s1, mut s2) = (vec![0.0; d], vec![0.0; d]);
    for s in 1..=samples {
        let g = round_gradient(problem, &cfg, mech.as_ref(), theta, s)?;
        for j in 0..d {
            s1[j] += g[j];
            s2[j] += g[j] * g[j];
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = s1.iter().map(|v| v / n).collect();
    let se = (0..d)
        .map(|j| ((s2[j] / n - mean[j] * mean[j]).max(0.0) / n).sqrt())
        .collect();
    Ok((mean, se))
}
